#pragma once

/// @file pair_mixture.hpp
/// @brief Combining K (density, velocity) pairs into one pair that still
/// satisfies the Fokker-Planck equation.

#include "consflow/autodiff/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace consflow::density {

using ad::Tensor;

struct DensityVelocity {
    Tensor log_density;  ///< [n, 1]
    Tensor velocity;     ///< [n, D]
};

/// [n, K] weights -> [n, K*D] by repeating each weight over its D columns.
inline Tensor spread_component_weights(const Tensor& w, std::size_t D) {
    const std::size_t K = w.cols();
    std::vector<double> e(K * K * D, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < D; ++i) e[k * K * D + k * D + i] = 1.0;
    }
    return ad::matmul(w, Tensor::constant({K, K * D}, std::move(e)));
}

/// Sums the K component blocks of an [n, K*D] tensor -> [n, D].
inline Tensor fold_components(const Tensor& v, std::size_t K, std::size_t D) {
    if (K == 1) return v;
    std::vector<double> f(K * D * D, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t i = 0; i < D; ++i) f[(k * D + i) * D + i] = 1.0;
    }
    return ad::matmul(v, Tensor::constant({K * D, D}, std::move(f)));
}

/// Posterior component weights gamma^k rho^k / rho, [n, K]. Rows where every
/// component density underflows fall back to uniform weights.
inline Tensor responsibilities(const Tensor& log_rho_k, const Tensor& log_gamma) {
    Tensor logits = log_rho_k + log_gamma;
    const std::size_t n = logits.rows(), K = logits.cols();
    std::vector<std::uint8_t> dead(n * K, 0);
    bool any = false;
    for (std::size_t r = 0; r < n; ++r) {
        bool all = true;
        for (std::size_t k = 0; k < K; ++k) all = all && !std::isfinite(logits.at(r, k));
        if (all) {
            any = true;
            for (std::size_t k = 0; k < K; ++k) dead[r * K + k] = 1;
        }
    }
    if (any) logits = ad::select(dead, Tensor::zeros(logits.shape()), logits);
    return ad::softmax_cols(logits);
}

/// rho = sum_k gamma^k rho^k and u = sum_k (gamma^k rho^k / rho) u^k.
/// `log_rho_k` is [n, K], `u_k` is [n, K*D] (component-major), `log_gamma` is [1, K].
inline DensityVelocity pair_mixture_density_velocity(const Tensor& log_rho_k, const Tensor& u_k,
                                                     const Tensor& log_gamma) {
    const std::size_t K = log_rho_k.cols();
    if (u_k.cols() % K != 0) throw ad::ShapeError("pair mixture: velocity columns not divisible by K");
    const std::size_t D = u_k.cols() / K;
    if (K == 1) return {log_rho_k + log_gamma, u_k};
    Tensor w = responsibilities(log_rho_k, log_gamma);
    return {ad::logsumexp_cols(log_rho_k + log_gamma), fold_components(spread_component_weights(w, D) * u_k, K, D)};
}

}  // namespace consflow::density
