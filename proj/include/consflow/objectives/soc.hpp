#pragma once

/// @file soc.hpp
/// @brief Mean-field stochastic optimal control objective with circular obstacles.

#include "consflow/objectives/data.hpp"
#include "consflow/objectives/losses.hpp"

#include <chrono>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::objectives {

/// Which SOC terms are active.
struct SocTerms {
    bool endpoints = true;
    bool control = true;
    bool running = true;  ///< obstacle cost plus entropy
};

struct SocOptions {
    std::size_t n_mc = 256;
    SocTerms terms;
};

/// sum_obstacles softplus(R^2 - |X - c|^2), per row [n,1]. X is [n,2].
inline Tensor obstacle_cost(const std::vector<Obstacle>& obstacles, const Tensor& X) {
    if (X.cols() != 2) throw ad::ShapeError("obstacle cost needs planar points");
    Tensor total = Tensor::zeros({X.rows(), 1});
    for (const auto& o : obstacles) {
        const Tensor c = Tensor::constant({1, 2}, {o.cx, o.cy});
        total = total + ad::softplus(o.radius * o.radius - ad::sum_cols(ad::square(X - c)));
    }
    return total;
}

/// Monte Carlo L_SOC. q0/q1 are row-major [n, 2] endpoint samples.
inline LossResult loss_soc(const FluxAssembly& as, Bindings& params, const SocEnvironment& env,
                           const std::vector<double>& q0, const std::vector<double>& q1, const SocOptions& opt,
                           std::mt19937_64& rng) {
    if (as.dim() != 2) throw std::invalid_argument("loss_soc: environment is two-dimensional");
    if (q0.empty() || q1.empty()) throw std::invalid_argument("loss_soc: empty endpoint samples");
    if (q0.size() % 2 || q1.size() % 2) throw std::invalid_argument("loss_soc: endpoint samples must have 2 columns");
    const auto start = std::chrono::steady_clock::now();
    LossResult out;
    out.loss = Tensor::constant(0.0);
    if (opt.terms.endpoints) {
        Tensor l0 = loss_gm(as.model, params, Tensor::constant(0.0), Tensor::constant({q0.size() / 2, 2}, q0));
        Tensor l1 = loss_gm(as.model, params, Tensor::constant(1.0), Tensor::constant({q1.size() / 2, 2}, q1));
        out.loss = out.loss + l0 + l1;
        out.report.add("nll", l0.item(), 1.0);
        out.report.add("terminal", l1.item(), 1.0);
        out.report.samples["q0"] = q0.size() / 2;
        out.report.samples["q1"] = q1.size() / 2;
    }
    if (opt.terms.control || opt.terms.running) {
        StratifiedDraw d = draw_stratified(as.model, params, 0.0, 1.0, opt.n_mc, rng);
        out.report.samples["path"] = d.x.rows();
        auto e = conservation::evaluate(as, params, d.t, d.x, {.flux = false, .velocity = opt.terms.control});
        auto expect = [&](const Tensor& per_row) { return ad::sum(d.weight * per_row) * d.length; };
        if (opt.terms.control) {
            const Tensor v = Tensor::constant({1, 2}, env.base_drift);
            const double c = 1.0 / (2.0 * env.control_sigma * env.control_sigma);
            Tensor ctrl = expect(ad::sum_cols(ad::square(e.velocity - v))) * c;
            out.loss = out.loss + ctrl;
            out.report.add("control", ctrl.item(), 1.0);
        }
        if (opt.terms.running) {
            Tensor obs = expect(obstacle_cost(env.obstacles, d.x));
            Tensor ent = expect(e.log_density);
            out.loss = out.loss + env.obstacle_weight * obs + env.entropy_weight * ent;
            out.report.add("running", obs.item(), env.obstacle_weight);
            out.report.add("entropy", ent.item(), env.entropy_weight);
        }
    }
    out.report.total = out.loss.item();
    out.report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

struct SocStage {
    std::string name;
    SocTerms terms;
    long iterations = 0;
};

struct SocScheduleConfig {
    long endpoint_iters = 1000;
    long control_iters = 1000;
    long running_iters = 20000;
    bool single_stage = false;
    long single_stage_iters = 22000;
};

/// Terms are switched on progressively: endpoints, then control, then running cost.
inline std::vector<SocStage> staged_soc_schedule(const SocScheduleConfig& cfg) {
    auto check = [](long v, const char* what) {
        if (v < 0) throw std::invalid_argument(std::string("soc schedule: negative budget for ") + what);
    };
    std::vector<SocStage> candidates;
    if (cfg.single_stage) {
        check(cfg.single_stage_iters, "single stage");
        candidates.push_back({"all", {true, true, true}, cfg.single_stage_iters});
    } else {
        check(cfg.endpoint_iters, "endpoint stage");
        check(cfg.control_iters, "control stage");
        check(cfg.running_iters, "running stage");
        candidates.push_back({"endpoints", {true, false, false}, cfg.endpoint_iters});
        candidates.push_back({"control", {true, true, false}, cfg.control_iters});
        candidates.push_back({"running", {true, true, true}, cfg.running_iters});
    }
    std::vector<SocStage> stages;
    for (auto& s : candidates) {
        if (s.iterations == 0) {
            std::cerr << "warning: soc stage '" << s.name << "' has zero budget; skipped\n";
            continue;
        }
        stages.push_back(std::move(s));
    }
    return stages;
}

}  // namespace consflow::objectives
