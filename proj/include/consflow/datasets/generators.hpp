#pragma once

/// @file generators.hpp
/// @brief Synthetic stand-ins for the experiment families: a rotating pinwheel,
/// moving Gaussian-mixture snapshots and random obstacle arenas.

#include "consflow/datasets/events.hpp"
#include "consflow/objectives/data.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::datasets {

struct PinwheelSpec {
    std::size_t n = 10000;
    std::size_t arms = 5;
    double rotation_rate = 0.25;  ///< turns per unit time
    double noise = 0.05;          ///< tangential spread
    double radial_std = 0.3;
    double twist = 0.25;
    double scale = 2.0;
};

/// 2-D pinwheel whose arm phase rotates linearly in t; t ~ U(0, 1).
inline EventTable gen_pinwheel(const PinwheelSpec& spec, unsigned seed) {
    if (spec.arms < 2) throw std::invalid_argument("gen_pinwheel: arms must be >= 2");
    if (spec.n < 1) throw std::invalid_argument("gen_pinwheel: n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> arm(0, spec.arms - 1);
    std::normal_distribution<double> N(0.0, 1.0);
    EventTable table;
    table.dim = 2;
    table.provenance = "pinwheel:seed=" + std::to_string(seed);
    table.t.resize(spec.n);
    table.x.resize(2 * spec.n);
    const double tau = 2.0 * std::numbers::pi;
    for (std::size_t r = 0; r < spec.n; ++r) {
        const double t = U(rng);
        const double radial = 1.0 + spec.radial_std * N(rng);
        const double tangential = spec.noise * N(rng);
        const double angle = tau * static_cast<double>(arm(rng)) / static_cast<double>(spec.arms) +
                             spec.twist * std::exp(radial) + tau * spec.rotation_rate * t;
        const double c = std::cos(angle), s = std::sin(angle);
        table.t[r] = t;
        table.x[2 * r] = spec.scale * (c * radial - s * tangential);
        table.x[2 * r + 1] = spec.scale * (s * radial + c * tangential);
    }
    split_table(table, seed + 1);
    return table;
}

/// Diagonal Gaussian mixture in D dimensions.
struct GaussianMixture {
    std::vector<double> weights;               ///< K
    std::vector<std::vector<double>> means;    ///< K x D
    std::vector<std::vector<double>> stddevs;  ///< K x D

    [[nodiscard]] std::size_t dim() const { return means.empty() ? 0 : means.front().size(); }

    void draw(std::size_t n, std::mt19937_64& rng, std::vector<double>& out) const {
        const std::size_t D = dim();
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        std::normal_distribution<double> N(0.0, 1.0);
        for (std::size_t r = 0; r < n; ++r) {
            const std::size_t k = pick(rng);
            for (std::size_t d = 0; d < D; ++d) out.push_back(means[k][d] + stddevs[k][d] * N(rng));
        }
    }
};

struct SnapshotSpec {
    double t = 0.0;
    GaussianMixture mixture;
};

/// Default: 5 snapshots at t = 0..4 rescaled to [0, 1], D = 5, one Gaussian whose
/// mean moves along a curved path.
inline std::vector<SnapshotSpec> default_snapshot_spec(std::size_t D = 5, double std = 0.5) {
    std::vector<SnapshotSpec> spec;
    for (int i = 0; i < 5; ++i) {
        const double t = i / 4.0;
        std::vector<double> mean(D, 0.0);
        for (std::size_t d = 0; d < D; ++d) {
            const double phase = static_cast<double>(d) * 0.7;
            mean[d] = (d % 2 == 0 ? 3.0 * t : 1.5 * std::sin(std::numbers::pi * t + phase) - 1.5 * std::sin(phase));
        }
        spec.push_back({t, {{1.0}, {mean}, {std::vector<double>(D, std)}}});
    }
    return spec;
}

inline objectives::SnapshotDataset gen_snapshots(const std::vector<SnapshotSpec>& spec, std::size_t n_train,
                                                 std::size_t n_test, unsigned seed) {
    if (spec.size() < 2) throw std::invalid_argument("gen_snapshots: need at least two snapshots");
    objectives::SnapshotDataset ds;
    ds.dim = spec.front().mixture.dim();
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const auto& s = spec[i];
        if (i > 0 && !(s.t > spec[i - 1].t)) throw std::invalid_argument("gen_snapshots: times must increase");
        if (s.mixture.dim() != ds.dim) throw std::invalid_argument("gen_snapshots: inconsistent dimension");
        objectives::Snapshot snap;
        snap.t = s.t;
        s.mixture.draw(n_train, rng, snap.x);
        s.mixture.draw(n_test, rng, snap.test);
        ds.snapshots.push_back(std::move(snap));
    }
    ds.validate();
    return ds;
}

struct ObstacleEnvSpec {
    std::size_t n_obstacles = 3;
    double radius_lo = 0.6, radius_hi = 1.2;
    double arena_lo = -4.0, arena_hi = 4.0;
    objectives::GaussianEndpoint q0{-3.0, -3.0, 0.3};
    objectives::GaussianEndpoint q1{3.0, 3.0, 0.3};
    double endpoint_clearance = 2.0;  ///< endpoint std multiples kept free of obstacles
};

/// True when the obstacle would cover an endpoint mean (with clearance).
inline bool obstacle_rejected(const objectives::Obstacle& o, const ObstacleEnvSpec& spec) {
    for (const auto* q : {&spec.q0, &spec.q1}) {
        const double d = std::hypot(o.cx - q->mx, o.cy - q->my);
        if (d <= o.radius + spec.endpoint_clearance * q->std) return true;
    }
    return false;
}

/// Obstacles are placed uniformly in the arena; a draw is rejected when it covers
/// an endpoint mean (plus clearance). 1000 rejections abort.
inline objectives::SocEnvironment gen_obstacle_env(const ObstacleEnvSpec& spec, unsigned seed) {
    if (!(spec.radius_lo > 0.0) || spec.radius_hi < spec.radius_lo) {
        throw std::invalid_argument("gen_obstacle_env: radius range must be positive and ordered");
    }
    auto inside = [&](const objectives::GaussianEndpoint& q) {
        return q.mx >= spec.arena_lo && q.mx <= spec.arena_hi && q.my >= spec.arena_lo && q.my <= spec.arena_hi;
    };
    if (!inside(spec.q0) || !inside(spec.q1)) throw std::invalid_argument("gen_obstacle_env: endpoints outside arena");
    objectives::SocEnvironment env;
    env.q0 = spec.q0;
    env.q1 = spec.q1;
    env.arena_lo = spec.arena_lo;
    env.arena_hi = spec.arena_hi;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> C(spec.arena_lo, spec.arena_hi), R(spec.radius_lo, spec.radius_hi);
    std::size_t rejected = 0;
    while (env.obstacles.size() < spec.n_obstacles) {
        objectives::Obstacle o{C(rng), C(rng), R(rng)};
        if (obstacle_rejected(o, spec)) {
            if (++rejected >= 1000) throw std::runtime_error("gen_obstacle_env: arena too crowded");
            continue;
        }
        env.obstacles.push_back(o);
    }
    return env;
}

}  // namespace consflow::datasets
