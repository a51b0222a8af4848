#pragma once

/// @file flux.hpp
/// @brief Density/flux assembly that satisfies the continuity equation by construction.
///
/// With rho = div a and j = -d_t a + b + v, continuity holds for any divergence-free
/// b and v. The a-field puts F(x_D | x_<D) prod_{j<D} f(x_j | x_<j) in the last
/// coordinate. The cancellation field b removes the flux that -d_t a alone leaves
/// far outside the support:
///
///   b_D = s(x_D) d_t P_<D
///   b_i = S_>i [ (s(x_i) - F_i) d_t P_<i - d_t F_i P_<i ],   i < D
///
/// with P_<i = prod_{j<i} f_j, S_>i = prod_{j>i} s'(x_j), s the logistic sigmoid
/// (autoregressive) or F itself (factorized, where the bracket's first term drops).
/// Products are formed as exponentials of summed logs.

#include "consflow/autodiff/nn.hpp"
#include "consflow/autodiff/tensor.hpp"
#include "consflow/density/model.hpp"
#include "consflow/density/pair_mixture.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::conservation {

using ad::Bindings;
using ad::ParameterStore;
using ad::Tensor;
using density::DensityModel;

/// Log-density below which j / rho is evaluated against the floor.
inline constexpr double kLogDensityFloor = -60.0;

/// State-independent volatility g_t = start + (end - start) t.
struct VolatilitySchedule {
    double start = 0.0;
    double end = 0.0;

    static VolatilitySchedule constant(double g) { return {g, g}; }

    [[nodiscard]] double operator()(double t) const { return start + (end - start) * t; }
    [[nodiscard]] bool is_zero() const { return start == 0.0 && end == 0.0; }

    void validate() const {
        if (start < 0.0 || end < 0.0) throw std::invalid_argument("volatility must be non-negative");
    }

    /// Per-row g_t^2 / 2 for a time column (no tangent; g does not depend on x).
    [[nodiscard]] Tensor half_g2(const Tensor& t) const {
        std::vector<double> out(t.rows());
        for (std::size_t r = 0; r < t.rows(); ++r) {
            const double g = (*this)(t.at(r, 0));
            out[r] = 0.5 * g * g;
        }
        return Tensor::constant({t.rows(), 1}, std::move(out));
    }
};

/// Matrix potential A_t(x) whose row-divergence of A - A^T gives a learnable
/// divergence-free field.
class DivergenceFreeNet {
public:
    DivergenceFreeNet() = default;
    DivergenceFreeNet(ParameterStore& store, std::size_t dim, std::size_t hidden_width, std::size_t hidden_layers,
                      std::size_t embed_width, double max_frequency, ad::Activation act, std::mt19937_64& rng,
                      std::string prefix = "vnet", double output_scale = 0.1)
        : dim_(dim), embed_width_(embed_width), max_frequency_(max_frequency), prefix_(std::move(prefix)) {
        std::vector<std::size_t> widths{embed_width + dim};
        for (std::size_t h = 0; h < hidden_layers; ++h) widths.push_back(hidden_width);
        widths.push_back(dim * dim);
        net_ = ad::Mlp(store, prefix_, widths, act, rng, {}, output_scale);
    }

    [[nodiscard]] std::size_t dim() const { return dim_; }
    [[nodiscard]] std::size_t embed_width() const { return embed_width_; }
    [[nodiscard]] double max_frequency() const { return max_frequency_; }
    [[nodiscard]] const ad::Mlp& network() const { return net_; }
    [[nodiscard]] const std::string& prefix() const { return prefix_; }

    /// A_t(x) flattened row-major, [n, D*D].
    [[nodiscard]] Tensor potential(Bindings& params, const Tensor& t, const Tensor& x) const {
        Tensor tt = density::align_rows(t, x.rows());
        Tensor emb = ad::sinusoidal_embed(tt, embed_width_, max_frequency_);
        if (emb.rows() != x.rows()) emb = ad::broadcast_to(emb, {x.rows(), emb.cols()});
        return net_.forward(params, ad::concat_cols({emb, x}));
    }

private:
    std::size_t dim_ = 0;
    std::size_t embed_width_ = 0;
    double max_frequency_ = 20.0;
    std::string prefix_;
    ad::Mlp net_;
};

/// v_i = sum_j d/dx_j (A_ij - A_ji), one forward tangent pass per coordinate.
/// `potential(x)` must return [n, D*D]. For D = 1 the antisymmetric part vanishes.
template <class Potential>
Tensor antisymmetric_divergence(Potential&& potential, const Tensor& x) {
    const std::size_t n = x.rows(), D = x.cols();
    if (D == 1) return Tensor::zeros({n, 1});
    Tensor v;
    for (std::size_t j = 0; j < D; ++j) {
        ad::TangentScope scope;
        std::vector<double> e(n * D, 0.0);
        for (std::size_t r = 0; r < n; ++r) e[r * D + j] = 1.0;
        Tensor A = potential(scope.seed(x, Tensor::constant({n, D}, std::move(e))));
        Tensor dA = A.tangent(scope.tag());
        // column j of dA (entries A_ij) minus row j (entries A_ji)
        std::vector<double> sel(D * D * D, 0.0);
        for (std::size_t i = 0; i < D; ++i) {
            sel[(i * D + j) * D + i] += 1.0;
            sel[(j * D + i) * D + i] -= 1.0;
        }
        Tensor contrib = ad::matmul(dA, Tensor::constant({D * D, D}, std::move(sel)));
        v = v.defined() ? v + contrib : contrib;
    }
    return v;
}

enum class VelocityPath { automatic, closed_form, generic };

struct AssemblyOptions {
    bool use_bt = true;
    double bt_scale = 1.0;  ///< scales b_D only; any value other than 1 breaks continuity (ablation)
    VolatilitySchedule volatility;
    VelocityPath path = VelocityPath::automatic;
};

/// Density model, optional learnable divergence-free potential, and volatility.
struct FluxAssembly {
    DensityModel model;
    std::optional<DivergenceFreeNet> vnet;
    AssemblyOptions options;

    [[nodiscard]] std::size_t dim() const { return model.dim(); }
};

struct FieldRequest {
    bool flux = true;
    bool velocity = true;
    bool score = false;  ///< also return grad log rho
};

/// Everything evaluated at a batch of (t, x); vector fields are [n, D] in data order.
struct FieldEval {
    Tensor log_density;  ///< [n, 1]
    Tensor a;            ///< a-field
    Tensor minus_dt_a;   ///< -d_t a
    Tensor b;            ///< cancellation field (zero if disabled)
    Tensor v;            ///< learnable divergence-free part (undefined without vnet)
    Tensor flux;         ///< -d_t a + b + v
    Tensor velocity;
    Tensor score;        ///< grad log rho (when requested or needed)
    std::size_t far_field = 0;  ///< rows with log rho below the floor
};

namespace detail {

/// Within-component prefix/suffix summation matrices over D coordinates of K blocks.
inline Tensor block_triangular(std::size_t K, std::size_t D, bool lower_strict) {
    std::vector<double> m(K * D * K * D, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < D; ++j) {
            for (std::size_t i = 0; i < D; ++i) {
                const bool on = lower_strict ? j < i : j > i;
                if (on) m[(k * D + j) * (K * D) + k * D + i] = 1.0;
            }
        }
    }
    return Tensor::constant({K * D, K * D}, std::move(m));
}

inline std::vector<std::uint8_t> below_half(const Tensor& F) {
    std::vector<std::uint8_t> m(F.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = F.values()[i] < 0.5 ? 1 : 0;
    return m;
}

inline Tensor last_coordinate_mask(std::size_t n, std::size_t K, std::size_t D) {
    std::vector<double> m(n * K * D, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < K; ++k) m[r * K * D + k * D + D - 1] = 1.0;
    }
    return Tensor::constant({n, K * D}, std::move(m));
}

inline Tensor floor_log_density(const Tensor& log_rho, std::size_t& far) {
    std::vector<std::uint8_t> low(log_rho.size());
    far = 0;
    for (std::size_t i = 0; i < low.size(); ++i) {
        low[i] = !(log_rho.values()[i] >= kLogDensityFloor);
        far += low[i];
    }
    if (far == 0) return log_rho;
    return ad::select(low, Tensor::full(log_rho.shape(), kLogDensityFloor), log_rho);
}

/// Score grad log rho by one forward tangent pass per coordinate (any model kind).
inline Tensor score_by_tangents(const DensityModel& model, Bindings& params, const Tensor& t, const Tensor& x) {
    const std::size_t n = x.rows(), D = x.cols();
    std::vector<Tensor> cols;
    for (std::size_t j = 0; j < D; ++j) {
        ad::TangentScope scope;
        std::vector<double> e(n * D, 0.0);
        for (std::size_t r = 0; r < n; ++r) e[r * D + j] = 1.0;
        Tensor lr = model.log_density(params, t, scope.seed(x, Tensor::constant({n, D}, std::move(e))));
        cols.push_back(lr.tangent(scope.tag()));
    }
    return ad::concat_cols(cols);
}

}  // namespace detail

/// Evaluates a, -d_t a, b, v, flux, velocity (and optionally the score) in one pass.
inline FieldEval evaluate(const FluxAssembly& as, Bindings& params, const Tensor& t, const Tensor& x,
                          FieldRequest req = {}) {
    const DensityModel& model = as.model;
    const std::size_t n = x.rows(), D = model.dim(), K = model.components();
    const bool autoregressive = model.is_autoregressive();
    if (x.cols() != D) throw ad::ShapeError("assembly: x has wrong dimension");
    FieldEval out;

    ad::TangentScope time;
    const int tau = time.tag();
    density::ProductTerms pt = model.terms(params, time.seed_ones(t), x);
    const Tensor lf = pt.coord.log_pdf.strip_from(tau);
    const Tensor lF = pt.coord.log_cdf.strip_from(tau);
    const Tensor l1F = pt.coord.log_ccdf.strip_from(tau);
    const Tensor F = pt.coord.cdf.strip_from(tau);
    const Tensor dlf = pt.coord.log_pdf.tangent(tau);
    const Tensor dlF = pt.coord.log_cdf.tangent(tau);
    const Tensor dl1F = pt.coord.log_ccdf.tangent(tau);
    const Tensor xm = pt.x.strip_from(tau);
    const Tensor log_gamma = pt.log_weights.strip_from(tau);
    const auto left = detail::below_half(F);

    // d_t F, taken on whichever tail is better conditioned
    const Tensor dF = ad::select(left, F * dlF, -(ad::exp(l1F) * dl1F));

    const Tensor lower = detail::block_triangular(K, D, true);
    const Tensor upper = detail::block_triangular(K, D, false);
    const Tensor Lp = ad::matmul(lf, lower);    // log P_<i
    const Tensor dLp = ad::matmul(dlf, lower);  // d_t log P_<i
    const Tensor last = detail::last_coordinate_mask(n, K, D);
    const Tensor P = ad::exp(Lp);

    // a and -d_t a live in the last coordinate only
    const Tensor a_rep = ad::exp(lF + Lp) * last;
    const Tensor mdta_rep = -(P * (dF + F * dLp)) * last;

    Tensor b_rep = Tensor::zeros({n, K * D});
    if (as.options.use_bt && D > 1) {
        Tensor log_sprime, sig, sig_minus_F;
        if (autoregressive) {
            log_sprime = ad::log_sigmoid(xm) + ad::log_sigmoid(-xm);
            sig = ad::sigmoid(xm);
            sig_minus_F = ad::select(left, sig - F, ad::exp(l1F) - ad::sigmoid(-xm));
        } else {
            log_sprime = lf;
            sig = F;
        }
        const Tensor Ls = ad::matmul(log_sprime, upper);  // log S_>i
        Tensor mid = -(ad::exp(Ls + Lp) * dF);
        if (autoregressive) mid = mid + ad::exp(Ls + Lp) * sig_minus_F * dLp;
        const Tensor tail = sig * P * dLp;
        b_rep = tail * (last * as.options.bt_scale) + mid * (1.0 - last);
    }

    const Tensor gamma_rep = K == 1 ? Tensor::constant(1.0) : density::spread_component_weights(ad::exp(log_gamma), D);
    auto combine = [&](const Tensor& rep) {
        return model.to_data_order(density::fold_components(K == 1 ? rep : rep * gamma_rep, K, D));
    };

    const Tensor log_rho_k = ad::reshape(ad::sum_cols(ad::grouped(lf, D)), {n, K});
    out.log_density = K == 1 ? log_rho_k : ad::logsumexp_cols(log_rho_k + log_gamma);
    out.a = combine(a_rep);
    out.minus_dt_a = combine(mdta_rep);
    out.b = combine(b_rep);
    out.flux = out.minus_dt_a + out.b;

    const Tensor tcol = density::align_rows(t, n);
    if (as.vnet) {
        const DivergenceFreeNet& vn = *as.vnet;
        out.v = antisymmetric_divergence([&](const Tensor& xs) { return vn.potential(params, tcol, xs); }, x);
        out.flux = out.flux + out.v;
    }

    const bool need_score = req.score || (req.velocity && !as.options.volatility.is_zero());
    std::optional<Tensor> component_scores;
    if (need_score) {
        if (!autoregressive) {
            density::MixtureHeads h{pt.heads.logits.strip_from(tau), pt.heads.mean.strip_from(tau),
                                    pt.heads.inv_scale.strip_from(tau), pt.heads.components};
            Tensor sk = density::logistic_score(xm, h);  // [n, K*D]
            component_scores = sk;
            if (K == 1) {
                out.score = model.to_data_order(sk);
            } else {
                Tensor w = density::responsibilities(log_rho_k, log_gamma);
                out.score = model.to_data_order(density::fold_components(density::spread_component_weights(w, D) * sk, K, D));
            }
        } else {
            out.score = detail::score_by_tangents(model, params, t, x);
        }
    }

    if (req.velocity) {
        const Tensor half_g2 = as.options.volatility.half_g2(tcol.rows() == n ? tcol : ad::broadcast_to(tcol, {n, 1}));
        const bool closed = as.options.path == VelocityPath::closed_form ||
                            (as.options.path == VelocityPath::automatic && !autoregressive && as.options.use_bt &&
                             as.options.bt_scale == 1.0);
        if (closed) {
            if (autoregressive) throw std::invalid_argument("closed-form velocity requires a factorized model");
            // u_i = -d_t F_i / f_i in log space, per component
            Tensor uk = ad::select(left, -(ad::exp(lF - lf) * dlF), ad::exp(l1F - lf) * dl1F);
            if (component_scores) uk = uk + half_g2 * *component_scores;
            out.velocity = model.to_data_order(density::pair_mixture_density_velocity(log_rho_k, uk, log_gamma).velocity);
            std::size_t far = 0;
            const Tensor floored = detail::floor_log_density(out.log_density, far);
            out.far_field = far;
            if (out.v.defined()) out.velocity = out.velocity + out.v * ad::exp(-floored);
        } else {
            std::size_t far = 0;
            const Tensor floored = detail::floor_log_density(out.log_density, far);
            out.far_field = far;
            out.velocity = out.flux * ad::exp(-floored);
            if (need_score) out.velocity = out.velocity + half_g2 * out.score;
        }
    }
    return out;
}

// ============================================================================
// Single-purpose views
// ============================================================================

inline Tensor a_field(const FluxAssembly& as, Bindings& params, const Tensor& t, const Tensor& x) {
    return evaluate(as, params, t, x, {.flux = false, .velocity = false}).a;
}

inline Tensor b_field(const FluxAssembly& as, Bindings& params, const Tensor& t, const Tensor& x) {
    return evaluate(as, params, t, x, {.flux = false, .velocity = false}).b;
}

/// Learnable divergence-free field; zeros when the assembly has none.
inline Tensor v_field(const FluxAssembly& as, Bindings& params, const Tensor& t, const Tensor& x) {
    if (!as.vnet) return Tensor::zeros(x.shape());
    Tensor tcol = density::align_rows(t, x.rows());
    return antisymmetric_divergence([&](const Tensor& xs) { return as.vnet->potential(params, tcol, xs); }, x);
}

inline Tensor flux(const FluxAssembly& as, Bindings& params, const Tensor& t, const Tensor& x) {
    return evaluate(as, params, t, x, {.flux = true, .velocity = false}).flux;
}

inline Tensor velocity(const FluxAssembly& as, Bindings& params, const Tensor& t, const Tensor& x) {
    return evaluate(as, params, t, x).velocity;
}

struct SpuriousFlux {
    Tensor minus_dt_a;
    Tensor b;
};

/// -d_t a and b reported separately (b is computed even if the assembly disables it).
inline SpuriousFlux spurious_flux_components(const FluxAssembly& as, Bindings& params, const Tensor& t,
                                             const Tensor& x) {
    FluxAssembly with_b = as;
    with_b.options.use_bt = true;
    with_b.options.bt_scale = 1.0;
    with_b.vnet.reset();
    FieldEval e = evaluate(with_b, params, t, x, {.flux = true, .velocity = false});
    return {e.minus_dt_a, e.b};
}

}  // namespace consflow::conservation
