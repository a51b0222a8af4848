#pragma once

/// @file wasserstein.hpp
/// @brief Empirical W2 between point clouds: exact assignment up to 2048 points, Sinkhorn above.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace consflow::eval {

inline constexpr std::size_t kExactAssignmentLimit = 2048;

struct W2Result {
    double value = 0.0;
    bool exact = true;
};

/// Minimum-cost perfect matching on a dense n x n cost matrix (row-major);
/// returns the column assigned to each row. O(n^3) shortest augmenting paths.
inline std::vector<std::size_t> linear_assignment(const std::vector<double>& cost, std::size_t n) {
    if (cost.size() != n * n) throw std::invalid_argument("linear_assignment: cost must be n x n");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assign(n);
    for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = j - 1;
    return assign;
}

inline std::vector<double> squared_distances(const std::vector<double>& A, const std::vector<double>& B, std::size_t D) {
    const std::size_t n = A.size() / D, m = B.size() / D;
    std::vector<double> c(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                const double diff = A[i * D + d] - B[j * D + d];
                s += diff * diff;
            }
            c[i * m + j] = s;
        }
    }
    return c;
}

/// Exact W2 for equal-size clouds.
inline double wasserstein2_exact(const std::vector<double>& A, const std::vector<double>& B, std::size_t D) {
    if (D == 0 || A.size() % D || B.size() % D) throw std::invalid_argument("wasserstein2: bad dimension");
    const std::size_t n = A.size() / D;
    if (B.size() / D != n) throw std::invalid_argument("wasserstein2: exact mode needs equal sample counts");
    if (n == 0) throw std::invalid_argument("wasserstein2: empty clouds");
    auto c = squared_distances(A, B, D);
    auto assign = linear_assignment(c, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += c[i * n + assign[i]];
    return std::sqrt(total / static_cast<double>(n));
}

/// Entropic approximation (log-domain Sinkhorn, uniform weights, no debiasing).
inline double wasserstein2_sinkhorn(const std::vector<double>& A, const std::vector<double>& B, std::size_t D,
                                    std::size_t iters = 500) {
    const std::size_t n = A.size() / D, m = B.size() / D;
    if (n == 0 || m == 0) throw std::invalid_argument("wasserstein2: empty clouds");
    auto c = squared_distances(A, B, D);
    std::vector<double> sorted = c;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double eps = std::max(0.01 * sorted[sorted.size() / 2], 1e-12);
    const double la = -std::log(static_cast<double>(n)), lb = -std::log(static_cast<double>(m));
    std::vector<double> f(n, 0.0), g(m, 0.0);
    auto lse = [](const std::vector<double>& v) {
        const double mx = *std::max_element(v.begin(), v.end());
        double s = 0.0;
        for (double x : v) s += std::exp(x - mx);
        return mx + std::log(s);
    };
    std::vector<double> row(m), col(n);
    for (std::size_t it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) row[j] = (g[j] - c[i * m + j]) / eps + lb;
            f[i] = -eps * lse(row);
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) col[i] = (f[i] - c[i * m + j]) / eps + la;
            g[j] = -eps * lse(col);
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) total += std::exp((f[i] + g[j] - c[i * m + j]) / eps + la + lb) * c[i * m + j];
    }
    return std::sqrt(std::max(total, 0.0));
}

enum class W2Mode { automatic, exact, entropic };

/// automatic: exact when both clouds have the same size n <= 2048, entropic otherwise.
inline W2Result wasserstein2(const std::vector<double>& A, const std::vector<double>& B, std::size_t D,
                             W2Mode mode = W2Mode::automatic) {
    if (D == 0 || A.size() % D || B.size() % D) throw std::invalid_argument("wasserstein2: bad dimension");
    const std::size_t n = A.size() / D, m = B.size() / D;
    if (mode == W2Mode::exact) return {wasserstein2_exact(A, B, D), true};
    if (mode == W2Mode::automatic && n == m && n <= kExactAssignmentLimit) return {wasserstein2_exact(A, B, D), true};
    return {wasserstein2_sinkhorn(A, B, D), false};
}

}  // namespace consflow::eval
