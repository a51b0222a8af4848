#pragma once

/// @file model.hpp
/// @brief Time-dependent mixture-of-logistics probability paths: factorized,
/// autoregressive (MADE) and mixtures of factorized pairs.

#include "consflow/autodiff/nn.hpp"
#include "consflow/autodiff/parameters.hpp"
#include "consflow/autodiff/tensor.hpp"
#include "consflow/density/logistic.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::density {

using ad::Bindings;
using ad::ParameterStore;

enum class ModelKind { factorized, autoregressive, pair_mixture };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::factorized: return "factorized";
        case ModelKind::autoregressive: return "autoregressive";
        case ModelKind::pair_mixture: return "pair-mixture";
    }
    return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "factorized") return ModelKind::factorized;
    if (s == "autoregressive") return ModelKind::autoregressive;
    if (s == "pair-mixture" || s == "pair_mixture") return ModelKind::pair_mixture;
    throw std::invalid_argument("unknown model kind: " + s);
}

struct ModelSpec {
    ModelKind kind = ModelKind::factorized;
    std::size_t dim = 2;
    std::size_t mixture_size = 16;     ///< logistics per coordinate (L)
    std::size_t pair_components = 32;  ///< factorized pairs (K), pair-mixture only
    std::size_t hidden_width = 256;
    std::size_t hidden_layers = 3;  ///< hidden layers; linear layers = hidden_layers + 1
    std::size_t embed_width = 128;
    double max_frequency = 20.0;
    ad::Activation activation = ad::Activation::tanh;
    bool learn_pair_weights = true;
    double output_scale = 1.0;             ///< scales the final layer's init range
    std::vector<std::size_t> ordering;     ///< autoregressive coordinate order (empty = natural)
    std::vector<double> init_center;       ///< per-coordinate centre for initial means
    std::vector<double> init_spread;       ///< per-coordinate spread for initial means

    [[nodiscard]] std::size_t components() const { return kind == ModelKind::pair_mixture ? pair_components : 1; }

    void validate() const {
        if (dim < 1 || dim > 16) throw std::invalid_argument("model dim must be in [1, 16]");
        if (mixture_size < 1) throw std::invalid_argument("mixture_size must be >= 1");
        if (kind == ModelKind::pair_mixture && pair_components < 1) throw std::invalid_argument("pair_components must be >= 1");
        if (hidden_width < 1) throw std::invalid_argument("hidden_width must be >= 1");
        if (embed_width < 2 || embed_width % 2) throw std::invalid_argument("embed_width must be even and >= 2");
        if (!ordering.empty()) {
            if (ordering.size() != dim) throw std::invalid_argument("ordering must list every coordinate");
            std::vector<std::size_t> s = ordering;
            std::sort(s.begin(), s.end());
            for (std::size_t i = 0; i < dim; ++i) {
                if (s[i] != i) throw std::invalid_argument("ordering must be a permutation of 0..dim-1");
            }
        }
        if (!init_center.empty() && init_center.size() != dim) throw std::invalid_argument("init_center size != dim");
        if (!init_spread.empty() && init_spread.size() != dim) throw std::invalid_argument("init_spread size != dim");
    }
};

/// Per-coordinate logistic terms of every factorized component, laid out
/// [n, K*D] with component-major columns (column k*D + i). Coordinates are in
/// model order (the autoregressive ordering, if any).
struct ProductTerms {
    std::size_t components = 1;
    std::size_t dim = 1;
    Tensor x;  ///< [n, K*D] evaluation points, replicated per component
    MixtureHeads heads;
    LogisticTerms coord;
    Tensor log_weights;  ///< [1, K] log gamma

    /// log rho^k, [n, K].
    [[nodiscard]] Tensor component_log_density() const {
        const std::size_t n = x.rows();
        return ad::reshape(ad::sum_cols(ad::grouped(coord.log_pdf, dim)), {n, components});
    }

    /// log sum_k gamma^k rho^k, [n, 1].
    [[nodiscard]] Tensor log_density() const {
        Tensor lc = component_log_density();
        if (components == 1) return lc;
        return ad::logsumexp_cols(lc + log_weights);
    }
};

/// Repeats/broadcasts a time column so it lines up with `n` evaluation rows.
inline Tensor align_rows(const Tensor& t, std::size_t n) {
    if (t.rows() == n || t.rows() == 1) return t;
    if (t.rows() == 0 || n % t.rows() != 0) {
        throw ad::ShapeError("time rows (" + std::to_string(t.rows()) + ") do not divide batch rows (" +
                             std::to_string(n) + ")");
    }
    return ad::repeat_rows(t, n / t.rows());
}

class DensityModel {
public:
    DensityModel() = default;

    DensityModel(ParameterStore& store, ModelSpec spec, std::mt19937_64& rng, std::string prefix = "rho")
        : spec_(std::move(spec)), prefix_(std::move(prefix)) {
        spec_.validate();
        const std::size_t D = spec_.dim, L = spec_.mixture_size, K = spec_.components();
        order_ = spec_.ordering;
        if (order_.empty()) {
            order_.resize(D);
            std::iota(order_.begin(), order_.end(), 0);
        }
        std::vector<std::size_t> widths{spec_.embed_width};
        for (std::size_t h = 0; h < spec_.hidden_layers; ++h) widths.push_back(spec_.hidden_width);
        const std::size_t per_type = K * D * L;
        widths.push_back(3 * per_type);
        if (spec_.kind == ModelKind::autoregressive) {
            widths.front() += D;
            std::vector<std::size_t> hidden(widths.begin() + 1, widths.end() - 1);
            std::vector<std::size_t> out_coord(3 * per_type);
            for (std::size_t c = 0; c < out_coord.size(); ++c) out_coord[c] = (c % per_type) / L + 1;
            net_ = ad::Mlp(store, prefix_ + ".made", widths, spec_.activation, rng,
                           ad::made_masks(spec_.embed_width, D, hidden, out_coord), spec_.output_scale);
        } else {
            net_ = ad::Mlp(store, prefix_ + ".mlp", widths, spec_.activation, rng, {}, spec_.output_scale);
        }
        // mixture initialisation: uniform weights, softplus(0) scales, spread means
        auto& bias = store.get(net_.bias_name(net_.layers() - 1)).value;
        std::normal_distribution<double> N(0.0, 1.0);
        for (std::size_t c = 0; c < per_type; ++c) {
            const std::size_t coord = (c / L) % D;
            const double centre = spec_.init_center.empty() ? 0.0 : spec_.init_center[order_[coord]];
            const double spread = spec_.init_spread.empty() ? 1.0 : spec_.init_spread[order_[coord]];
            bias[c] = 0.0;
            bias[per_type + c] = centre + spread * N(rng);
            bias[2 * per_type + c] = 0.0;
        }
        if (K > 1) {
            store.add(weights_name(), {1, K}, std::vector<double>(K, 0.0));
        }
        perm_ = std::vector<double>(D * D, 0.0);
        for (std::size_t i = 0; i < D; ++i) perm_[order_[i] * D + i] = 1.0;
    }

    [[nodiscard]] const ModelSpec& spec() const { return spec_; }
    [[nodiscard]] ModelKind kind() const { return spec_.kind; }
    [[nodiscard]] std::size_t dim() const { return spec_.dim; }
    [[nodiscard]] std::size_t components() const { return spec_.components(); }
    [[nodiscard]] std::size_t mixture_size() const { return spec_.mixture_size; }
    [[nodiscard]] const std::vector<std::size_t>& ordering() const { return order_; }
    [[nodiscard]] const std::string& prefix() const { return prefix_; }
    [[nodiscard]] std::string weights_name() const { return prefix_ + ".pair_logits"; }
    [[nodiscard]] bool is_autoregressive() const { return spec_.kind == ModelKind::autoregressive; }

    /// Original coordinates -> model order.
    [[nodiscard]] Tensor to_model_order(const Tensor& x) const {
        if (identity_order()) return x;
        return ad::matmul(x, Tensor::constant({dim(), dim()}, perm_));
    }
    /// Model order -> original coordinates (for vector fields indexed by coordinate).
    [[nodiscard]] Tensor to_data_order(const Tensor& v) const {
        if (identity_order()) return v;
        std::vector<double> pt(dim() * dim());
        for (std::size_t i = 0; i < dim(); ++i) {
            for (std::size_t j = 0; j < dim(); ++j) pt[i * dim() + j] = perm_[j * dim() + i];
        }
        return ad::matmul(v, Tensor::constant({dim(), dim()}, pt));
    }

    /// log gamma, [1, K]; K = 1 gives [[0]].
    [[nodiscard]] Tensor log_weights(Bindings& params) const {
        if (components() == 1) return Tensor::zeros({1, 1});
        Tensor logits = spec_.learn_pair_weights ? params[weights_name()] : params[weights_name()].detach();
        return ad::log_softmax_cols(logits);
    }

    /// Heads for all K*D coordinates. `t` is [m,1] with m dividing the batch;
    /// `x_model` ([n, D], model order) is only read by the autoregressive net.
    [[nodiscard]] MixtureHeads heads(Bindings& params, const Tensor& t, const Tensor& x_model) const {
        const std::size_t D = dim(), L = mixture_size(), per_type = components() * D * L;
        if (t.cols() != 1) throw ad::ShapeError("time must be a column");
        Tensor out;
        if (is_autoregressive()) {
            if (x_model.cols() != D) throw ad::ShapeError("autoregressive heads: x has wrong dimension");
            Tensor tt = align_rows(t, x_model.rows());
            Tensor emb = ad::sinusoidal_embed(tt, spec_.embed_width, spec_.max_frequency);
            if (emb.rows() != x_model.rows()) emb = ad::broadcast_to(emb, {x_model.rows(), emb.cols()});
            out = net_.forward(params, ad::concat_cols({emb, x_model}));
        } else {
            out = net_.forward(params, ad::sinusoidal_embed(t, spec_.embed_width, spec_.max_frequency));
            if (x_model.defined() && out.rows() != 1) out = align_rows(out, x_model.rows());
        }
        return make_heads(ad::slice_cols(out, 0, per_type), ad::slice_cols(out, per_type, per_type),
                          ad::slice_cols(out, 2 * per_type, per_type), L);
    }

    /// All per-coordinate terms at (t, x); x is [n, D] in data order.
    [[nodiscard]] ProductTerms terms(Bindings& params, const Tensor& t, const Tensor& x) const {
        if (x.cols() != dim()) {
            throw ad::ShapeError("density: x has " + std::to_string(x.cols()) + " columns, model dim is " +
                                 std::to_string(dim()));
        }
        ProductTerms pt;
        pt.components = components();
        pt.dim = dim();
        Tensor xm = to_model_order(x);
        pt.heads = heads(params, t, xm);
        pt.x = components() == 1 ? xm : ad::tile_cols(xm, components());
        pt.coord = logistic_terms(pt.x, pt.heads);
        pt.log_weights = log_weights(params);
        return pt;
    }

    [[nodiscard]] Tensor log_density(Bindings& params, const Tensor& t, const Tensor& x) const {
        return terms(params, t, x).log_density();
    }

    [[nodiscard]] const ad::Mlp& network() const { return net_; }

private:
    [[nodiscard]] bool identity_order() const {
        for (std::size_t i = 0; i < order_.size(); ++i) {
            if (order_[i] != i) return false;
        }
        return true;
    }

    ModelSpec spec_;
    std::string prefix_;
    std::vector<std::size_t> order_;
    std::vector<double> perm_;
    ad::Mlp net_;
};

/// Scalar convenience: log rho_t(x) for a single point.
inline double log_density(const DensityModel& model, const ParameterStore& store, double t, std::span<const double> x) {
    Bindings params(store, false);
    return model.log_density(params, Tensor::constant(t), Tensor::row(x)).item();
}

/// d/dt of F and of log f at (t, x) for every coordinate, [n, K*D] each, via a forward tangent.
struct TimeDerivatives {
    Tensor cdf;
    Tensor log_pdf;
};

inline TimeDerivatives time_derivatives(const DensityModel& model, Bindings& params, const Tensor& t,
                                        const Tensor& x) {
    ad::TangentScope scope;
    ProductTerms pt = model.terms(params, scope.seed_ones(t), x);
    return {pt.coord.cdf.tangent(scope.tag()), pt.coord.log_pdf.tangent(scope.tag())};
}

/// d/dt F_t(x_i | x_<i) for coordinate i (data-order index), single point, K = 1.
inline double dt_cdf(const DensityModel& model, const ParameterStore& store, double t, std::span<const double> x,
                     std::size_t i) {
    Bindings params(store, false);
    auto d = time_derivatives(model, params, Tensor::constant(t), Tensor::row(x));
    const auto& ord = model.ordering();
    const std::size_t pos = static_cast<std::size_t>(std::find(ord.begin(), ord.end(), i) - ord.begin());
    return d.cdf.at(0, pos);
}

/// d/dt f_t(x_i | x_<i), single point, K = 1.
inline double dt_pdf(const DensityModel& model, const ParameterStore& store, double t, std::span<const double> x,
                     std::size_t i) {
    Bindings params(store, false);
    ad::TangentScope scope;
    ProductTerms pt = model.terms(params, scope.seed_ones(Tensor::constant(t)), Tensor::row(x));
    const auto& ord = model.ordering();
    const std::size_t pos = static_cast<std::size_t>(std::find(ord.begin(), ord.end(), i) - ord.begin());
    Tensor f = ad::exp(pt.coord.log_pdf);
    return f.tangent(scope.tag()).at(0, pos);
}

}  // namespace consflow::density
