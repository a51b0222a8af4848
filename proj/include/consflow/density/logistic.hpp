#pragma once

/// @file logistic.hpp
/// @brief Mixture-of-logistics CDF / log-density, scalar and batched, plus the
/// bracketed inverse used for exact sampling.

#include "consflow/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::density {

using ad::Tensor;

/// Lower bound added to softplus-produced inverse scales.
inline constexpr double kInverseScaleFloor = 1e-4;

/// One coordinate's mixture: weights on the simplex, means, inverse scales > 0.
struct MixtureHead {
    std::vector<double> alpha;
    std::vector<double> mu;
    std::vector<double> s;

    [[nodiscard]] std::size_t size() const { return alpha.size(); }

    void validate() const {
        if (alpha.empty() || mu.size() != alpha.size() || s.size() != alpha.size()) {
            throw std::invalid_argument("MixtureHead: component vectors must be non-empty and equally sized");
        }
        double total = 0.0;
        for (std::size_t l = 0; l < alpha.size(); ++l) {
            if (!(alpha[l] > 0.0) || !(s[l] > 0.0) || !std::isfinite(mu[l])) {
                throw std::invalid_argument("MixtureHead: weights and inverse scales must be positive");
            }
            total += alpha[l];
        }
        if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("MixtureHead: weights must sum to 1");
    }
};

namespace detail {

inline double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

inline double logsumexp(const std::vector<double>& v) {
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw std::domain_error(std::string(what) + ": non-finite input");
}

}  // namespace detail

/// F(x) = sum_l alpha_l sigma(s_l (x - mu_l)).
inline double logistic_mixture_cdf(double x, const MixtureHead& h) {
    detail::require_finite(x, "logistic_mixture_cdf");
    double f = 0.0;
    for (std::size_t l = 0; l < h.size(); ++l) {
        const double z = h.s[l] * (x - h.mu[l]);
        f += h.alpha[l] * std::exp(detail::log_sigmoid(z));
    }
    return f;
}

/// 1 - F(x), accurate in the right tail.
inline double logistic_mixture_ccdf(double x, const MixtureHead& h) {
    detail::require_finite(x, "logistic_mixture_ccdf");
    double f = 0.0;
    for (std::size_t l = 0; l < h.size(); ++l) {
        const double z = h.s[l] * (x - h.mu[l]);
        f += h.alpha[l] * std::exp(detail::log_sigmoid(-z));
    }
    return f;
}

/// log f(x) with f = sum_l alpha_l s_l sigma(z_l) sigma(-z_l), via log-sum-exp.
inline double logistic_mixture_logpdf(double x, const MixtureHead& h) {
    detail::require_finite(x, "logistic_mixture_logpdf");
    std::vector<double> terms(h.size());
    for (std::size_t l = 0; l < h.size(); ++l) {
        const double z = h.s[l] * (x - h.mu[l]);
        terms[l] = std::log(h.alpha[l]) + std::log(h.s[l]) + detail::log_sigmoid(z) + detail::log_sigmoid(-z);
    }
    return detail::logsumexp(terms);
}

/// Solves F(x) = u. The bracket starts around the component means and doubles
/// outward until it contains the root; then safeguarded Newton/bisection runs
/// until |F - u| <= tol (or the bracket collapses to machine resolution).
inline double logistic_mixture_inverse_cdf(double u, const MixtureHead& h, double tol = 1e-12) {
    if (!(u > 0.0 && u < 1.0)) throw std::domain_error("inverse_cdf: u must lie in (0, 1)");
    double lo = *std::min_element(h.mu.begin(), h.mu.end());
    double hi = *std::max_element(h.mu.begin(), h.mu.end());
    double width = 1.0 / *std::min_element(h.s.begin(), h.s.end());
    // residual measured on the tail where it is better conditioned
    auto residual = [&](double x) {
        return u < 0.5 ? logistic_mixture_cdf(x, h) - u : (1.0 - u) - logistic_mixture_ccdf(x, h);
    };
    int doublings = 0;
    while (residual(lo - width) > 0.0) {
        width *= 2.0;
        if (++doublings > 200) throw std::runtime_error("inverse_cdf: failed to bracket lower root");
    }
    lo -= width;
    width = 1.0 / *std::min_element(h.s.begin(), h.s.end());
    doublings = 0;
    while (residual(hi + width) < 0.0) {
        width *= 2.0;
        if (++doublings > 200) throw std::runtime_error("inverse_cdf: failed to bracket upper root");
    }
    hi += width;

    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
        const double r = residual(x);
        if (std::abs(r) <= tol) return x;
        if (r > 0.0) {
            hi = x;
        } else {
            lo = x;
        }
        const double f = std::exp(logistic_mixture_logpdf(x, h));
        double next = x - r / f;
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
            return next;
        }
        x = next;
    }
    return x;
}

// ============================================================================
// Batched form
// ============================================================================

/// Mixture parameters for M coordinates with L components each; every tensor is
/// [rows, M*L] with coordinate-major columns (coordinate m owns columns m*L..m*L+L-1).
struct MixtureHeads {
    Tensor logits;
    Tensor mean;
    Tensor inv_scale;
    std::size_t components = 1;

    [[nodiscard]] std::size_t coords() const { return logits.cols() / components; }

    /// Scalar head for (row, coordinate), from current values.
    [[nodiscard]] MixtureHead head(std::size_t row, std::size_t coord) const {
        const std::size_t L = components;
        const std::size_t r = logits.rows() == 1 ? 0 : row;
        MixtureHead h;
        h.alpha.resize(L);
        h.mu.resize(L);
        h.s.resize(L);
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < L; ++l) m = std::max(m, logits.at(r, coord * L + l));
        double z = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            h.alpha[l] = std::exp(logits.at(r, coord * L + l) - m);
            z += h.alpha[l];
            h.mu[l] = mean.at(r, coord * L + l);
            h.s[l] = inv_scale.at(r, coord * L + l);
        }
        for (auto& a : h.alpha) a /= z;
        return h;
    }
};

/// Heads from raw network outputs: softmax weights, unconstrained means,
/// softplus inverse scales with a small floor.
inline MixtureHeads make_heads(const Tensor& logits, const Tensor& mean, const Tensor& scale_preact,
                               std::size_t components) {
    return {logits, mean, ad::softplus(scale_preact) + kInverseScaleFloor, components};
}

/// Per-coordinate quantities, each [n, M].
struct LogisticTerms {
    Tensor log_pdf;
    Tensor cdf;
    Tensor log_cdf;
    Tensor log_ccdf;
};

namespace detail {
struct Expanded {
    Tensor log_alpha, mean, inv_scale, z;
};

inline Expanded expand(const Tensor& x, const MixtureHeads& h) {
    const std::size_t n = x.rows(), M = x.cols(), L = h.components;
    if (h.logits.cols() != M * L) {
        throw ad::ShapeError("logistic terms: heads have " + std::to_string(h.logits.cols()) + " columns, expected " +
                             std::to_string(M * L));
    }
    const ad::Shape full{n, M * L};
    auto fit = [&](const Tensor& p) { return ad::grouped(ad::broadcast_to(p, full), L); };
    Expanded e;
    e.log_alpha = ad::log_softmax_cols(fit(h.logits));
    e.mean = fit(h.mean);
    e.inv_scale = fit(h.inv_scale);
    e.z = e.inv_scale * (ad::reshape(x, {n * M, 1}) - e.mean);
    return e;
}
}  // namespace detail

inline LogisticTerms logistic_terms(const Tensor& x, const MixtureHeads& h) {
    const std::size_t n = x.rows(), M = x.cols();
    const auto e = detail::expand(x, h);
    Tensor lsp = ad::log_sigmoid(e.z);
    Tensor lsm = ad::log_sigmoid(-e.z);
    auto back = [&](const Tensor& col) { return ad::reshape(col, {n, M}); };
    LogisticTerms out;
    out.log_pdf = back(ad::logsumexp_cols(e.log_alpha + ad::log(e.inv_scale) + lsp + lsm));
    out.log_cdf = back(ad::logsumexp_cols(e.log_alpha + lsp));
    out.log_ccdf = back(ad::logsumexp_cols(e.log_alpha + lsm));
    out.cdf = ad::exp(out.log_cdf);
    return out;
}

/// d/dx log f per coordinate, [n, M].
inline Tensor logistic_score(const Tensor& x, const MixtureHeads& h) {
    const std::size_t n = x.rows(), M = x.cols();
    const auto e = detail::expand(x, h);
    Tensor resp = ad::softmax_cols(e.log_alpha + ad::log(e.inv_scale) + ad::log_sigmoid(e.z) + ad::log_sigmoid(-e.z));
    // d/dz log(sigma(z) sigma(-z)) = 1 - 2 sigma(z) = tanh(-z/2)
    Tensor per = e.inv_scale * ad::tanh(-0.5 * e.z);
    return ad::reshape(ad::sum_cols(resp * per), {n, M});
}

}  // namespace consflow::density
