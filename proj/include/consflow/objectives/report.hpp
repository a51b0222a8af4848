#pragma once

#include <cmath>
#include <map>
#include <string>

namespace consflow::objectives {

/// Scalar breakdown of one loss evaluation. `total` = sum_k weights[k] * terms[k].
struct ObjectiveReport {
    double total = 0.0;
    std::map<std::string, double> terms;
    std::map<std::string, double> weights;
    std::map<std::string, std::size_t> samples;
    double wall_ms = 0.0;

    void add(const std::string& name, double value, double weight) {
        terms[name] = value;
        weights[name] = weight;
    }

    [[nodiscard]] double weighted_sum() const {
        double s = 0.0;
        for (const auto& [k, v] : terms) s += weights.at(k) * v;
        return s;
    }

    [[nodiscard]] bool consistent(double tol = 1e-10) const {
        return std::abs(weighted_sum() - total) <= tol * (1.0 + std::abs(total));
    }
};

}  // namespace consflow::objectives
