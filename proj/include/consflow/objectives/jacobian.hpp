#pragma once

/// @file jacobian.hpp
/// @brief Hutchinson estimate of ||J - J^T||_F^2 for a velocity field.

#include "consflow/conservation/flux.hpp"

#include <random>
#include <vector>

namespace consflow::objectives {

using ad::Tensor;

/// Columns J e_j of the spatial Jacobian of `field` ([n,D] -> [n,D]), one forward pass each.
template <class Field>
std::vector<Tensor> jacobian_columns(Field&& field, const Tensor& x) {
    const std::size_t n = x.rows(), D = x.cols();
    std::vector<Tensor> cols;
    cols.reserve(D);
    for (std::size_t j = 0; j < D; ++j) {
        ad::TangentScope scope;
        std::vector<double> e(n * D, 0.0);
        for (std::size_t r = 0; r < n; ++r) e[r * D + j] = 1.0;
        Tensor y = field(scope.seed(x, Tensor::constant({n, D}, std::move(e))));
        cols.push_back(y.tangent(scope.tag()).strip_from(scope.tag()));
    }
    return cols;
}

/// Mean over rows and probes of ||(J - J^T) v||^2 = w.w - 2 u.w + u.u with
/// w = J v, u = J^T v, v ~ N(0, I). Optional `row_weight` ([n,1], summing to one)
/// replaces the plain mean over rows.
inline Tensor hutchinson_jac_sym(const std::vector<Tensor>& jcols, std::size_t probes, std::mt19937_64& rng,
                                 const Tensor& row_weight = Tensor()) {
    if (jcols.empty() || probes < 1) throw std::invalid_argument("hutchinson: need columns and probes");
    const std::size_t n = jcols.front().rows(), D = jcols.size();
    std::normal_distribution<double> N(0.0, 1.0);
    std::vector<double> probe(n * probes * D);
    for (auto& v : probe) v = N(rng);
    const Tensor V = Tensor::constant({n * probes, D}, std::move(probe));
    Tensor w;
    std::vector<Tensor> u;
    for (std::size_t j = 0; j < D; ++j) {
        const Tensor Jj = ad::repeat_rows(jcols[j], probes);
        const Tensor term = Jj * ad::slice_cols(V, j, 1);
        w = w.defined() ? w + term : term;
        u.push_back(ad::sum_cols(Jj * V));
    }
    const Tensor ut = ad::concat_cols(u);
    const Tensor q = ad::sum_cols(w * w) - 2.0 * ad::sum_cols(ut * w) + ad::sum_cols(ut * ut);
    if (!row_weight.defined()) return ad::mean(q);
    if (row_weight.rows() != n || row_weight.cols() != 1) throw ad::ShapeError("hutchinson: row weights must be [n,1]");
    return ad::sum(q * ad::repeat_rows(row_weight, probes)) * (1.0 / static_cast<double>(probes));
}

/// Jacobian-symmetry penalty of the assembly velocity at (t, x).
inline Tensor loss_jac_sym(const conservation::FluxAssembly& as, ad::Bindings& params, const Tensor& t,
                           const Tensor& x, std::size_t probes, std::mt19937_64& rng,
                           const Tensor& row_weight = Tensor()) {
    if (x.rows() == 0) throw std::invalid_argument("loss_jac_sym: empty samples");
    auto cols = jacobian_columns(
        [&](const Tensor& xs) {
            return conservation::evaluate(as, params, t, xs, {.flux = false, .velocity = true}).velocity;
        },
        x);
    return hutchinson_jac_sym(cols, probes, rng, row_weight);
}

}  // namespace consflow::objectives
