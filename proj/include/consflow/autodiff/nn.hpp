#pragma once

/// @file nn.hpp
/// @brief Time embeddings, plain MLPs and MADE-style masked MLPs on top of the tensor engine.

#include "consflow/autodiff/parameters.hpp"
#include "consflow/autodiff/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::ad {

enum class Activation { tanh, softplus, silu };

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "softplus") return Activation::softplus;
    if (s == "silu") return Activation::silu;
    throw std::invalid_argument("unknown activation: " + s);
}

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
        case Activation::silu: return "silu";
    }
    return "?";
}

inline Tensor activate(const Tensor& x, Activation a) {
    switch (a) {
        case Activation::tanh: return tanh(x);
        case Activation::softplus: return softplus(x);
        case Activation::silu: return x * sigmoid(x);
    }
    return x;
}

/// Geometric frequencies from 1 to `max_frequency` (one per sin/cos pair).
inline std::vector<double> embedding_frequencies(std::size_t width, double max_frequency) {
    if (width < 2 || width % 2 != 0) {
        throw std::invalid_argument("sinusoidal embedding width must be even and >= 2, got " + std::to_string(width));
    }
    const std::size_t half = width / 2;
    std::vector<double> w(half, 1.0);
    for (std::size_t k = 1; k < half; ++k) {
        w[k] = std::pow(max_frequency, static_cast<double>(k) / static_cast<double>(half - 1));
    }
    return w;
}

/// [n,1] times -> [n, width] features: sin(w_k t) for all k, then cos(w_k t).
inline Tensor sinusoidal_embed(const Tensor& t, std::size_t width, double max_frequency = 20.0) {
    if (t.cols() != 1) throw ShapeError("sinusoidal_embed: expects a column of times");
    const auto w = embedding_frequencies(width, max_frequency);
    Tensor phase = t * Tensor::row(w);
    return concat_cols({sin(phase), cos(phase)});
}

/// Fully connected network; optional per-layer binary masks multiply the weights.
class Mlp {
public:
    Mlp() = default;

    /// `widths` = {input, hidden..., output}. Masks, when given, are one per layer,
    /// shaped [in, out] row-major.
    Mlp(ParameterStore& store, std::string prefix, std::vector<std::size_t> widths, Activation act,
        std::mt19937_64& rng, std::vector<std::vector<std::uint8_t>> masks = {}, double final_scale = 1.0)
        : prefix_(std::move(prefix)), widths_(std::move(widths)), act_(act), masks_(std::move(masks)) {
        if (widths_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
        if (!masks_.empty() && masks_.size() != widths_.size() - 1) {
            throw std::invalid_argument("Mlp: one mask per layer required");
        }
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            const std::size_t in = widths_[l], out = widths_[l + 1];
            double bound = 1.0 / std::sqrt(static_cast<double>(in));
            if (l + 2 == widths_.size()) bound *= final_scale;
            std::uniform_real_distribution<double> U(-bound, bound);
            std::vector<double> w(in * out), b(out);
            for (auto& v : w) v = U(rng);
            for (auto& v : b) v = U(rng);
            if (!masks_.empty()) {
                if (masks_[l].size() != in * out) throw std::invalid_argument("Mlp: mask shape mismatch");
                for (std::size_t i = 0; i < w.size(); ++i) w[i] *= masks_[l][i];
            }
            store.add(weight_name(l), {in, out}, std::move(w));
            store.add(bias_name(l), {1, out}, std::move(b));
        }
    }

    [[nodiscard]] std::size_t input_dim() const { return widths_.front(); }
    [[nodiscard]] std::size_t output_dim() const { return widths_.back(); }
    [[nodiscard]] std::size_t layers() const { return widths_.size() - 1; }
    [[nodiscard]] const std::string& prefix() const { return prefix_; }
    [[nodiscard]] std::string weight_name(std::size_t l) const { return prefix_ + ".w" + std::to_string(l); }
    [[nodiscard]] std::string bias_name(std::size_t l) const { return prefix_ + ".b" + std::to_string(l); }

    Tensor forward(Bindings& params, const Tensor& input) const {
        if (input.cols() != input_dim()) {
            throw ShapeError("mlp " + prefix_ + ": input has " + std::to_string(input.cols()) + " columns, expected " +
                             std::to_string(input_dim()));
        }
        Tensor h = input;
        for (std::size_t l = 0; l < layers(); ++l) {
            Tensor w = params[weight_name(l)];
            if (!masks_.empty()) {
                w = w * Tensor::constant({widths_[l], widths_[l + 1]},
                                         std::vector<double>(masks_[l].begin(), masks_[l].end()));
            }
            h = matmul(h, w) + params[bias_name(l)];
            if (l + 1 < layers()) h = activate(h, act_);
        }
        return h;
    }

private:
    std::string prefix_;
    std::vector<std::size_t> widths_;
    Activation act_ = Activation::tanh;
    std::vector<std::vector<std::uint8_t>> masks_;
};

/// Degree bookkeeping for an autoregressive (MADE) network whose inputs are
/// `context` unconstrained features (time embedding, degree 0) followed by
/// `dim` ordered coordinates (degrees 1..dim). Output column c belongs to
/// coordinate `output_coord[c]` (1-based) and may only see coordinates before it.
inline std::vector<std::vector<std::uint8_t>> made_masks(std::size_t context, std::size_t dim,
                                                          const std::vector<std::size_t>& hidden,
                                                          const std::vector<std::size_t>& output_coord) {
    std::vector<std::size_t> in_deg(context, 0);
    for (std::size_t i = 1; i <= dim; ++i) in_deg.push_back(i);
    std::vector<std::vector<std::size_t>> degs{in_deg};
    for (std::size_t h : hidden) {
        std::vector<std::size_t> d(h);
        // hidden degrees cycle through 0..dim-1; degree 0 units see only the context
        for (std::size_t k = 0; k < h; ++k) d[k] = dim > 0 ? k % dim : 0;
        degs.push_back(std::move(d));
    }
    std::vector<std::vector<std::uint8_t>> masks;
    for (std::size_t l = 0; l + 1 < degs.size(); ++l) {
        const auto& a = degs[l];
        const auto& b = degs[l + 1];
        std::vector<std::uint8_t> m(a.size() * b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            for (std::size_t j = 0; j < b.size(); ++j) m[i * b.size() + j] = b[j] >= a[i] ? 1 : 0;
        }
        masks.push_back(std::move(m));
    }
    const auto& last = degs.back();
    std::vector<std::uint8_t> m(last.size() * output_coord.size());
    for (std::size_t i = 0; i < last.size(); ++i) {
        for (std::size_t j = 0; j < output_coord.size(); ++j) m[i * output_coord.size() + j] = output_coord[j] > last[i] ? 1 : 0;
    }
    masks.push_back(std::move(m));
    return masks;
}

}  // namespace consflow::ad
