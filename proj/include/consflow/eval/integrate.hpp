#pragma once

/// @file integrate.hpp
/// @brief Euler-Maruyama particle transport. Evaluation only: training code never includes this header.

#include "consflow/conservation/flux.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::eval {

/// Number of integrate() calls in this process; the simulation-free audit reads it.
inline std::atomic<long>& integrator_calls() {
    static std::atomic<long> calls{0};
    return calls;
}

struct TrajectoryBatch {
    std::vector<double> times;   ///< steps + 1 grid points
    std::vector<double> states;  ///< [n, steps + 1, D] row-major
    std::size_t n = 0, dim = 0;
    double g = 0.0;
    std::string integrator = "euler-maruyama";

    [[nodiscard]] std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    [[nodiscard]] double at(std::size_t traj, std::size_t step, std::size_t d) const {
        return states[(traj * times.size() + step) * dim + d];
    }
    /// States at grid index `step`, [n, D].
    [[nodiscard]] std::vector<double> slice(std::size_t step) const {
        std::vector<double> out(n * dim);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t d = 0; d < dim; ++d) out[r * dim + d] = at(r, step, d);
        }
        return out;
    }
    /// Every state on every trajectory, [n * (steps + 1), D].
    [[nodiscard]] const std::vector<double>& all_points() const { return states; }
};

inline std::vector<double> uniform_grid(double t0, double t1, std::size_t steps) {
    if (steps < 1) throw std::invalid_argument("grid needs at least one step");
    std::vector<double> g(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) g[k] = t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(steps);
    return g;
}

/// X_{k+1} = X_k + u(t_k, X_k) dt + g(t_k) sqrt(dt) xi, with u the assembly's
/// velocity for volatility g. g = 0 is the explicit Euler ODE step.
inline TrajectoryBatch integrate(const conservation::FluxAssembly& as, const ad::ParameterStore& store,
                                 const std::vector<double>& x0, const std::vector<double>& t_grid,
                                 const conservation::VolatilitySchedule& g, std::mt19937_64& rng) {
    ++integrator_calls();
    const std::size_t D = as.dim();
    if (x0.empty() || x0.size() % D) throw std::invalid_argument("integrate: x0 must be [n, D]");
    if (t_grid.size() < 2) throw std::invalid_argument("integrate: need at least two grid points");
    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        if (!(t_grid[k] > t_grid[k - 1])) throw std::invalid_argument("integrate: time grid must be increasing");
    }
    g.validate();
    conservation::FluxAssembly dyn = as;
    dyn.options.volatility = g;
    TrajectoryBatch out;
    out.n = x0.size() / D;
    out.dim = D;
    out.times = t_grid;
    out.g = g(t_grid.front());
    const std::size_t S = t_grid.size();
    out.states.assign(out.n * S * D, 0.0);
    std::vector<double> x = x0;
    auto store_slice = [&](std::size_t k) {
        for (std::size_t r = 0; r < out.n; ++r) {
            for (std::size_t d = 0; d < D; ++d) out.states[(r * S + k) * D + d] = x[r * D + d];
        }
    };
    store_slice(0);
    std::normal_distribution<double> N(0.0, 1.0);
    for (std::size_t k = 0; k + 1 < S; ++k) {
        const double t = t_grid[k], dt = t_grid[k + 1] - t;
        ad::Bindings params(store, false);
        auto e = conservation::evaluate(dyn, params, ad::Tensor::constant(t), ad::Tensor::constant({out.n, D}, x),
                                        {.flux = false, .velocity = true});
        const double noise = g(t) * std::sqrt(dt);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += e.velocity.values()[i] * dt;
            if (noise != 0.0) x[i] += noise * N(rng);
            if (!std::isfinite(x[i])) {
                throw std::range_error("integrate: non-finite state at step " + std::to_string(k + 1));
            }
        }
        store_slice(k + 1);
    }
    return out;
}

}  // namespace consflow::eval
