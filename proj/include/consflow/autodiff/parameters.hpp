#pragma once

/// @file parameters.hpp
/// @brief Named parameter storage, per-pass bindings, Adam and the cosine schedule.

#include "consflow/autodiff/tensor.hpp"

#include <cmath>
#include <iostream>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::ad {

struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
};

using GradientMap = std::map<std::string, std::vector<double>>;

class ParameterStore {
public:
    /// Registers a parameter. Names are unique and shapes fixed from here on.
    void add(const std::string& name, Shape shape, std::vector<double> init) {
        if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
        if (init.size() != shape.size()) throw ShapeError("parameter " + name + ": init size mismatch");
        index_[name] = params_.size();
        params_.push_back({name, shape, std::move(init), std::vector<double>(shape.size(), 0.0),
                           std::vector<double>(shape.size(), 0.0)});
    }

    [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }
    [[nodiscard]] const Parameter& get(const std::string& name) const { return params_.at(lookup(name)); }
    [[nodiscard]] Parameter& get(const std::string& name) { return params_.at(lookup(name)); }
    [[nodiscard]] const std::vector<Parameter>& parameters() const { return params_; }
    [[nodiscard]] std::vector<Parameter>& parameters() { return params_; }

    [[nodiscard]] std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    /// Overwrites values (shape must match); used when loading checkpoints.
    void assign(const std::string& name, Shape shape, std::vector<double> values) {
        Parameter& p = get(name);
        if (p.shape != shape || values.size() != p.value.size()) {
            throw ShapeError("parameter " + name + ": stored shape " + to_string(p.shape) + " != " + to_string(shape));
        }
        p.value = std::move(values);
    }

    [[nodiscard]] long step() const { return step_; }
    void set_step(long s) { step_ = s; }
    void increment_step() { ++step_; }

private:
    [[nodiscard]] std::size_t lookup(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }

    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
    long step_ = 0;
};

/// Leaf tensors for one forward/backward pass. Each parameter is materialised at
/// most once per pass so its gradient accumulates into a single node.
class Bindings {
public:
    explicit Bindings(const ParameterStore& store, bool requires_grad = true)
        : store_(&store), requires_grad_(requires_grad) {}

    Tensor operator[](const std::string& name) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) return it->second;
        const Parameter& p = store_->get(name);
        Tensor t = Tensor::leaf(p.shape, p.value, requires_grad_);
        leaves_.emplace(name, t);
        return t;
    }

    [[nodiscard]] bool requires_grad() const { return requires_grad_; }

    /// Gradient for every stored parameter; untouched ones are zero.
    [[nodiscard]] GradientMap gradients() const {
        GradientMap out;
        for (const auto& p : store_->parameters()) {
            auto it = leaves_.find(p.name);
            out[p.name] = it == leaves_.end() ? std::vector<double>(p.value.size(), 0.0) : it->second.grad();
        }
        return out;
    }

private:
    const ParameterStore* store_;
    bool requires_grad_;
    std::map<std::string, Tensor> leaves_;
};

/// Runs the reverse sweep from a scalar loss and collects parameter gradients.
inline GradientMap backward(const Tensor& loss, Bindings& bindings) {
    backward(loss);
    return bindings.gradients();
}

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update with bias correction; increments the store's step counter.
inline void adam_step(ParameterStore& store, const GradientMap& grads, double lr, const AdamOptions& opt = {}) {
    for (const auto& p : store.parameters()) {
        auto it = grads.find(p.name);
        if (it == grads.end()) throw std::invalid_argument("adam_step: missing gradient for " + p.name);
        if (it->second.size() != p.value.size()) throw ShapeError("adam_step: gradient size mismatch for " + p.name);
    }
    store.increment_step();
    const double t = static_cast<double>(store.step());
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    for (auto& p : store.parameters()) {
        const auto& g = grads.at(p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            p.first_moment[i] = opt.beta1 * p.first_moment[i] + (1.0 - opt.beta1) * g[i];
            p.second_moment[i] = opt.beta2 * p.second_moment[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mhat = p.first_moment[i] / c1;
            const double vhat = p.second_moment[i] / c2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

/// base_lr * (1 + cos(pi * step / total)) / 2; steps past the end clamp to 0.
inline double cosine_lr(long step, long total_steps, double base_lr) {
    if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
    if (step < 0) step = 0;
    if (step > total_steps) {
        std::cerr << "warning: cosine_lr step " << step << " beyond total " << total_steps << "; using 0\n";
        return 0.0;
    }
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace consflow::ad
