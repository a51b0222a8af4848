#pragma once

/// @file data.hpp
/// @brief Training-data containers shared by objectives and generators.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::objectives {

/// Samples observed at one time; `x` is row-major [n, D].
struct Snapshot {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> test;  ///< held-out rows, same layout

    [[nodiscard]] std::size_t rows(std::size_t D) const { return x.size() / D; }
    [[nodiscard]] std::size_t test_rows(std::size_t D) const { return test.size() / D; }
};

struct SnapshotDataset {
    std::size_t dim = 0;
    std::vector<Snapshot> snapshots;

    void validate() const {
        if (dim == 0) throw std::invalid_argument("snapshot dataset: dim must be >= 1");
        for (std::size_t i = 0; i < snapshots.size(); ++i) {
            if (snapshots[i].x.size() % dim || snapshots[i].test.size() % dim) {
                throw std::invalid_argument("snapshot " + std::to_string(i) + ": row size mismatch");
            }
            if (i > 0 && !(snapshots[i].t > snapshots[i - 1].t)) {
                throw std::invalid_argument("snapshot times must be strictly increasing");
            }
        }
    }
};

struct Obstacle {
    double cx = 0.0, cy = 0.0;
    double radius = 1.0;

    [[nodiscard]] bool contains_strictly(double x, double y) const {
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) < radius * radius;
    }
};

/// Isotropic Gaussian endpoint distribution in the plane.
struct GaussianEndpoint {
    double mx = 0.0, my = 0.0;
    double std = 0.1;
};

struct SocEnvironment {
    std::vector<Obstacle> obstacles;
    GaussianEndpoint q0{-3.0, -3.0, 0.3};
    GaussianEndpoint q1{3.0, 3.0, 0.3};
    double arena_lo = -4.0, arena_hi = 4.0;
    double control_sigma = 1.0;  ///< sigma_t in the control cost (constant)
    std::vector<double> base_drift{0.0, 0.0};  ///< v_t (constant)
    double entropy_weight = 0.1;   ///< eta
    double obstacle_weight = 1.0;

    void validate() const {
        for (const auto& o : obstacles) {
            if (!(o.radius > 0.0)) throw std::invalid_argument("obstacle radius must be positive");
        }
        if (!(control_sigma > 0.0)) throw std::invalid_argument("control sigma must be positive");
        if (entropy_weight < 0.0 || obstacle_weight < 0.0) throw std::invalid_argument("weights must be non-negative");
        if (base_drift.size() != 2) throw std::invalid_argument("base drift must be 2-dimensional");
    }

    /// Fraction of points (row-major [n, 2]) strictly inside any obstacle.
    [[nodiscard]] double violation_fraction(const std::vector<double>& xy) const {
        const std::size_t n = xy.size() / 2;
        if (n == 0) return 0.0;
        std::size_t bad = 0;
        for (std::size_t r = 0; r < n; ++r) {
            for (const auto& o : obstacles) {
                if (o.contains_strictly(xy[2 * r], xy[2 * r + 1])) {
                    ++bad;
                    break;
                }
            }
        }
        return static_cast<double>(bad) / static_cast<double>(n);
    }
};

}  // namespace consflow::objectives
