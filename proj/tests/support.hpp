#pragma once

#include "consflow/conservation/flux.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace testing_support {

using namespace consflow;

inline density::ModelSpec small_spec(density::ModelKind kind, std::size_t dim, std::size_t L = 3, std::size_t K = 2) {
    density::ModelSpec s;
    s.kind = kind;
    s.dim = dim;
    s.mixture_size = L;
    s.pair_components = K;
    s.hidden_width = 16;
    s.hidden_layers = 2;
    s.embed_width = 8;
    s.max_frequency = 4.0;
    return s;
}

struct Built {
    ad::ParameterStore store;
    conservation::FluxAssembly assembly;
};

inline Built build(const density::ModelSpec& spec, unsigned seed, bool vnet = false, double g = 0.0) {
    Built b;
    std::mt19937_64 rng(seed);
    b.assembly.model = density::DensityModel(b.store, spec, rng);
    if (vnet) {
        b.assembly.vnet.emplace(b.store, spec.dim, 16, 1, 8, 4.0, ad::Activation::tanh, rng, "vnet", 1.0);
    }
    b.assembly.options.volatility = conservation::VolatilitySchedule::constant(g);
    return b;
}

/// n random (t, x) with x within `width` of the origin.
inline void random_points(std::size_t n, std::size_t D, unsigned seed, std::vector<double>& t, std::vector<double>& x,
                          double width = 3.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.05, 0.95), X(-width, width);
    t.resize(n);
    x.resize(n * D);
    for (auto& v : t) v = U(rng);
    for (auto& v : x) v = X(rng);
}

/// Linear-head model whose coordinates are rigidly translated in time: every
/// mean of (component k, coordinate i) is offset by m_ki(t) = c_ki . emb(t)
/// while weights and scales stay constant. The exact velocity is m_ki'(t).
struct Translated {
    std::size_t K = 1, D = 1, embed = 8;
    double max_frequency = 4.0;
    std::vector<double> coef;  ///< [K*D, embed]

    [[nodiscard]] std::vector<double> features(double t, bool derivative) const {
        const auto w = ad::embedding_frequencies(embed, max_frequency);
        std::vector<double> f(embed);
        for (std::size_t k = 0; k < w.size(); ++k) {
            f[k] = derivative ? w[k] * std::cos(w[k] * t) : std::sin(w[k] * t);
            f[w.size() + k] = derivative ? -w[k] * std::sin(w[k] * t) : std::cos(w[k] * t);
        }
        return f;
    }
    /// m_ki(t) or its time derivative, index k*D + i.
    [[nodiscard]] std::vector<double> shift(double t, bool derivative = false) const {
        const auto f = features(t, derivative);
        std::vector<double> m(K * D, 0.0);
        for (std::size_t c = 0; c < K * D; ++c) {
            for (std::size_t e = 0; e < embed; ++e) m[c] += coef[c * embed + e] * f[e];
        }
        return m;
    }
};

inline density::ModelSpec translated_spec(density::ModelKind kind, std::size_t dim, std::size_t L = 2,
                                          std::size_t K = 2) {
    auto s = small_spec(kind, dim, L, K);
    s.hidden_layers = 0;
    return s;
}

/// Rewrites the linear head of `b` (built from translated_spec) into a translated model.
/// Scales are set to unit inverse scale via the bias.
inline Translated make_translated(Built& b, unsigned seed, double amplitude = 0.5) {
    const auto& m = b.assembly.model;
    if (m.network().layers() != 1) throw std::invalid_argument("translated model needs hidden_layers = 0");
    Translated tr;
    tr.K = m.components();
    tr.D = m.dim();
    tr.embed = m.spec().embed_width;
    tr.max_frequency = m.spec().max_frequency;
    const std::size_t L = m.mixture_size(), per = tr.K * tr.D * L, out = 3 * per;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, amplitude);
    tr.coef.resize(tr.K * tr.D * tr.embed);
    for (auto& c : tr.coef) c = N(rng);
    auto& w = b.store.get(m.network().weight_name(0)).value;
    auto& bias = b.store.get(m.network().bias_name(0)).value;
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t col = 0; col < per; ++col) {
        const std::size_t coord = col / L;  // k*D + i in model order
        for (std::size_t e = 0; e < tr.embed; ++e) w[e * out + per + col] = tr.coef[coord * tr.embed + e];
        bias[2 * per + col] = std::log(std::expm1(1.0));  // softplus -> 1
    }
    return tr;
}

/// Worst relative error between reverse-mode gradients and central differences
/// over `probes` randomly chosen scalars of every parameter. `loss` must be a
/// deterministic function of the store (fix its RNG seed inside).
struct GradCheck {
    double worst = 0.0;
    std::string where;
    std::size_t checked = 0;
};

inline GradCheck check_gradients(ad::ParameterStore& store, const std::function<ad::Tensor(ad::Bindings&)>& loss,
                                 std::size_t probes = 3, unsigned seed = 1, double h = 1e-5) {
    ad::Bindings params(store);
    const ad::GradientMap g = ad::backward(loss(params), params);
    auto value = [&] {
        ad::Bindings p(store, false);
        return loss(p).item();
    };
    std::mt19937_64 rng(seed);
    GradCheck out;
    for (auto& p : store.parameters()) {
        std::uniform_int_distribution<std::size_t> pick(0, p.value.size() - 1);
        for (std::size_t k = 0; k < std::min(probes, p.value.size()); ++k) {
            const std::size_t i = pick(rng);
            const double orig = p.value[i];
            p.value[i] = orig + h;
            const double up = value();
            p.value[i] = orig - h;
            const double down = value();
            p.value[i] = orig;
            const double fd = (up - down) / (2 * h);
            const double an = g.at(p.name)[i];
            const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
            ++out.checked;
            if (err > out.worst) {
                out.worst = err;
                out.where = p.name + "[" + std::to_string(i) + "] analytic " + std::to_string(an) + " fd " +
                            std::to_string(fd);
            }
        }
    }
    return out;
}

}  // namespace testing_support
