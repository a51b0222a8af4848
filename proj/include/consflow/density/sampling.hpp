#pragma once

/// @file sampling.hpp
/// @brief Exact inverse-CDF sampling and its reparameterised (differentiable) form.

#include "consflow/density/model.hpp"

#include <random>
#include <vector>

namespace consflow::density {

/// Uniform draw strictly inside (0, 1).
inline double open_uniform(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double u = U(rng);
    while (u <= 0.0) u = U(rng);
    return u;
}

/// Points with importance weights summing to one, such that sum_r w_r h(x_r)
/// estimates E_{rho_t}[h]. Both x and the weights stay on the graph.
struct WeightedSample {
    Tensor x;       ///< [n, D], data order
    Tensor weight;  ///< [n, 1]
};

namespace detail {

inline Tensor implicit_root(const Tensor& x0, const Tensor& cdf, const Tensor& log_pdf) {
    // value stays x0; derivatives follow dx = -dF / f (implicit function theorem)
    return x0 - (cdf - cdf.detach()) / ad::exp(log_pdf).detach();
}

/// Sum the component block that belongs to each row: [n, K*D] -> [n, D].
inline Tensor gather_component(const Tensor& x_rep, const std::vector<std::size_t>& comp, std::size_t K,
                               std::size_t D) {
    if (K == 1) return x_rep;
    const std::size_t n = x_rep.rows();
    std::vector<double> mask(n * K * D, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < D; ++i) mask[r * K * D + comp[r] * D + i] = 1.0;
    }
    std::vector<double> fold(K * D * D, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < D; ++i) fold[(k * D + i) * D + i] = 1.0;
    }
    return ad::matmul(x_rep * Tensor::constant({n, K * D}, std::move(mask)), Tensor::constant({K * D, D}, std::move(fold)));
}

}  // namespace detail

/// Inverse-CDF sample at times `t` ([n,1] or [1,1]) with uniforms `u` (n*D, row-major,
/// model order) and component assignment `comp` (one per row).
inline Tensor inverse_cdf_sample(const DensityModel& model, Bindings& params, const Tensor& t,
                                 const std::vector<double>& u, const std::vector<std::size_t>& comp) {
    const std::size_t D = model.dim(), K = model.components(), n = comp.size();
    if (u.size() != n * D) throw std::invalid_argument("inverse_cdf_sample: need n*D uniforms");
    if (model.is_autoregressive()) {
        std::vector<Tensor> cols;
        Tensor x_cur = Tensor::zeros({n, D});
        const std::size_t L = model.mixture_size();
        for (std::size_t i = 0; i < D; ++i) {
            MixtureHeads h = model.heads(params, t, x_cur);
            MixtureHeads hi{ad::slice_cols(h.logits, i * L, L), ad::slice_cols(h.mean, i * L, L),
                            ad::slice_cols(h.inv_scale, i * L, L), L};
            std::vector<double> x0(n);
            for (std::size_t r = 0; r < n; ++r) x0[r] = logistic_mixture_inverse_cdf(u[r * D + i], hi.head(r, 0));
            Tensor x0t = Tensor::column(x0);
            LogisticTerms lt = logistic_terms(x0t, hi);
            cols.push_back(detail::implicit_root(x0t, lt.cdf, lt.log_pdf));
            std::vector<Tensor> parts = cols;
            if (i + 1 < D) parts.push_back(Tensor::zeros({n, D - i - 1}));
            x_cur = ad::concat_cols(parts);
        }
        return model.to_data_order(x_cur);
    }
    MixtureHeads h = model.heads(params, t, Tensor());
    if (h.logits.rows() == 1 && n > 1) {
        const ad::Shape s{n, h.logits.cols()};
        h = {ad::broadcast_to(h.logits, s), ad::broadcast_to(h.mean, s), ad::broadcast_to(h.inv_scale, s), h.components};
    } else if (h.logits.rows() != n) {
        h = {align_rows(h.logits, n), align_rows(h.mean, n), align_rows(h.inv_scale, n), h.components};
    }
    std::vector<double> x0(n * K * D, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < D; ++i) {
            const double v = logistic_mixture_inverse_cdf(u[r * D + i], h.head(r, comp[r] * D + i));
            for (std::size_t k = 0; k < K; ++k) x0[r * K * D + k * D + i] = v;
        }
    }
    Tensor x0t = Tensor::constant({n, K * D}, std::move(x0));
    LogisticTerms lt = logistic_terms(x0t, h);
    Tensor xr = detail::implicit_root(x0t, lt.cdf, lt.log_pdf);
    return detail::gather_component(xr, comp, K, D);
}

/// n i.i.d. exact samples from rho_t (row-major n*D, data order).
inline std::vector<double> sample(const DensityModel& model, const ParameterStore& store, double t, std::size_t n,
                                  std::mt19937_64& rng) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    Bindings params(store, false);
    const std::size_t D = model.dim(), K = model.components();
    std::vector<std::size_t> comp(n, 0);
    if (K > 1) {
        auto lw = model.log_weights(params).values();
        std::vector<double> w(lw.begin(), lw.end());
        for (auto& v : w) v = std::exp(v);
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        for (auto& c : comp) c = pick(rng);
    }
    std::vector<double> u(n * D);
    for (auto& v : u) v = open_uniform(rng);
    Tensor x = inverse_cdf_sample(model, params, Tensor::constant(t), u, comp);
    return {x.values().begin(), x.values().end()};
}

/// Reparameterised draws for differentiable expectations. Pair mixtures are
/// stratified over components (row r -> component r mod K) and weighted by
/// gamma_k / n_k so the estimator is differentiable in the pair weights too.
inline WeightedSample reparameterized_sample(const DensityModel& model, Bindings& params, const Tensor& t,
                                             std::size_t n, std::mt19937_64& rng) {
    const std::size_t D = model.dim(), K = model.components();
    if (n < K) throw std::invalid_argument("reparameterized_sample: need at least one draw per component");
    std::vector<std::size_t> comp(n);
    std::vector<double> count(K, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        comp[r] = r % K;
        count[comp[r]] += 1.0;
    }
    std::vector<double> u(n * D);
    for (auto& v : u) v = open_uniform(rng);
    WeightedSample out;
    out.x = inverse_cdf_sample(model, params, t, u, comp);
    if (K == 1) {
        out.weight = Tensor::full({n, 1}, 1.0 / static_cast<double>(n));
    } else {
        std::vector<double> onehot(n * K, 0.0);
        for (std::size_t r = 0; r < n; ++r) onehot[r * K + comp[r]] = 1.0 / count[comp[r]];
        out.weight = ad::matmul(Tensor::constant({n, K}, std::move(onehot)),
                                ad::reshape(ad::exp(model.log_weights(params)), {K, 1}));
    }
    return out;
}

}  // namespace consflow::density
