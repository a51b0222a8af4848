#pragma once

/// @file residual.hpp
/// @brief Finite-difference checks of the continuity and Fokker-Planck equations.
///
/// Fourth-order central stencils with step h = 1e-3 (1 + |x|) per axis.

#include "consflow/conservation/flux.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace consflow::eval {

using ad::Bindings;
using ad::ParameterStore;
using ad::Tensor;
using conservation::FluxAssembly;

inline constexpr double kStencilStep = 1e-3;

inline double stencil_step(double x) { return kStencilStep * (1.0 + std::abs(x)); }

/// Batched field: (t [m,1], x [m,D]) -> values [m, c].
using BatchField = std::function<std::vector<double>(const std::vector<double>& t, const std::vector<double>& x)>;

/// Fourth-order first derivative from values at -2h, -h, +h, +2h.
inline double first_derivative(double fm2, double fm1, double fp1, double fp2, double h) {
    return (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
}

/// Second-order-accurate variant, kept for stencil cross-checks.
inline double first_derivative_2nd(double fm1, double fp1, double h) { return (fp1 - fm1) / (2.0 * h); }

inline double second_derivative(double fm2, double fm1, double f0, double fp1, double fp2, double h) {
    return (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
}

/// d/dt of a scalar field at n points.
inline std::vector<double> fd_time_derivative(const BatchField& f, std::span<const double> t, std::span<const double> x,
                                              std::size_t D) {
    const std::size_t n = t.size();
    static constexpr double offs[4] = {-2.0, -1.0, 1.0, 2.0};
    std::vector<double> ts, xs;
    ts.reserve(4 * n);
    xs.reserve(4 * n * D);
    for (std::size_t r = 0; r < n; ++r) {
        const double h = stencil_step(t[r]);
        for (double o : offs) {
            ts.push_back(t[r] + o * h);
            xs.insert(xs.end(), x.begin() + static_cast<long>(r * D), x.begin() + static_cast<long>((r + 1) * D));
        }
    }
    auto v = f(ts, xs);
    std::vector<double> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double h = stencil_step(t[r]);
        out[r] = first_derivative(v[4 * r], v[4 * r + 1], v[4 * r + 2], v[4 * r + 3], h);
    }
    return out;
}

/// Divergence of a vector field (D output columns) at n points.
inline std::vector<double> fd_divergence(const BatchField& f, std::span<const double> t, std::span<const double> x,
                                         std::size_t D) {
    const std::size_t n = t.size();
    static constexpr double offs[4] = {-2.0, -1.0, 1.0, 2.0};
    std::vector<double> ts, xs;
    ts.reserve(4 * n * D);
    xs.reserve(4 * n * D * D);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < D; ++i) {
            const double h = stencil_step(x[r * D + i]);
            for (double o : offs) {
                ts.push_back(t[r]);
                for (std::size_t j = 0; j < D; ++j) xs.push_back(x[r * D + j] + (j == i ? o * h : 0.0));
            }
        }
    }
    auto v = f(ts, xs);
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < D; ++i) {
            const double h = stencil_step(x[r * D + i]);
            const std::size_t base = (r * D + i) * 4;
            out[r] += first_derivative(v[base * D + i], v[(base + 1) * D + i], v[(base + 2) * D + i],
                                       v[(base + 3) * D + i], h);
        }
    }
    return out;
}

/// Laplacian of a scalar field at n points.
inline std::vector<double> fd_laplacian(const BatchField& f, std::span<const double> t, std::span<const double> x,
                                        std::size_t D) {
    const std::size_t n = t.size();
    static constexpr double offs[5] = {-2.0, -1.0, 0.0, 1.0, 2.0};
    std::vector<double> ts, xs;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < D; ++i) {
            const double h = stencil_step(x[r * D + i]);
            for (double o : offs) {
                ts.push_back(t[r]);
                for (std::size_t j = 0; j < D; ++j) xs.push_back(x[r * D + j] + (j == i ? o * h : 0.0));
            }
        }
    }
    auto v = f(ts, xs);
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < D; ++i) {
            const double h = stencil_step(x[r * D + i]);
            const std::size_t b = (r * D + i) * 5;
            out[r] += second_derivative(v[b], v[b + 1], v[b + 2], v[b + 3], v[b + 4], h);
        }
    }
    return out;
}

/// Evaluates one FieldEval member over a batch (no gradient tracking).
inline BatchField assembly_field(const FluxAssembly& as, const ParameterStore& store,
                                 std::function<Tensor(const conservation::FieldEval&)> pick,
                                 conservation::FieldRequest req = {}) {
    return [&as, &store, pick, req](const std::vector<double>& t, const std::vector<double>& x) {
        Bindings params(store, false);
        const std::size_t m = t.size();
        auto e = conservation::evaluate(as, params, Tensor::constant({m, 1}, t),
                                        Tensor::constant({m, as.dim()}, x), req);
        Tensor v = pick(e);
        return std::vector<double>(v.values().begin(), v.values().end());
    };
}

inline BatchField density_field(const FluxAssembly& as, const ParameterStore& store) {
    return [&as, &store](const std::vector<double>& t, const std::vector<double>& x) {
        Bindings params(store, false);
        const std::size_t m = t.size();
        Tensor lr = as.model.log_density(params, Tensor::constant({m, 1}, t), Tensor::constant({m, as.dim()}, x));
        std::vector<double> out(m);
        for (std::size_t r = 0; r < m; ++r) out[r] = std::exp(lr.at(r, 0));
        return out;
    };
}

struct ResidualResult {
    std::vector<double> residual;  ///< |d_t rho + div(...)|
    std::vector<double> dt_rho;

    /// max_r residual_r / (1 + |d_t rho_r|)
    [[nodiscard]] double max_relative() const {
        double m = 0.0;
        for (std::size_t r = 0; r < residual.size(); ++r) m = std::max(m, residual[r] / (1.0 + std::abs(dt_rho[r])));
        return m;
    }
    [[nodiscard]] bool passes(double tol) const { return max_relative() < tol; }
};

/// |d_t rho + div j| at n points (t: n, x: n*D row-major).
inline ResidualResult continuity_residual(const FluxAssembly& as, const ParameterStore& store,
                                          std::span<const double> t, std::span<const double> x) {
    const std::size_t D = as.dim();
    ResidualResult out;
    out.dt_rho = fd_time_derivative(density_field(as, store), t, x, D);
    auto div = fd_divergence(assembly_field(as, store, [](const auto& e) { return e.flux; }, {true, false, false}),
                             t, x, D);
    out.residual.resize(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) out.residual[r] = std::abs(out.dt_rho[r] + div[r]);
    return out;
}

/// |d_t rho + div(u rho) - g^2/2 lap rho| at n points, using the assembly's own volatility.
inline ResidualResult fokker_planck_residual(const FluxAssembly& as, const ParameterStore& store,
                                             std::span<const double> t, std::span<const double> x) {
    const std::size_t D = as.dim();
    ResidualResult out;
    auto rho = density_field(as, store);
    out.dt_rho = fd_time_derivative(rho, t, x, D);
    auto u_rho = assembly_field(
        as, store, [](const auto& e) { return e.velocity * ad::exp(e.log_density); }, {false, true, false});
    auto div = fd_divergence(u_rho, t, x, D);
    auto lap = fd_laplacian(rho, t, x, D);
    out.residual.resize(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        const double g = as.options.volatility(t[r]);
        out.residual[r] = std::abs(out.dt_rho[r] + div[r] - 0.5 * g * g * lap[r]);
    }
    return out;
}

}  // namespace consflow::eval
