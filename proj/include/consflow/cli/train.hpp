#pragma once

/// @file train.hpp
/// @brief Optimizer loops for the three objectives. Simulation-free: nothing here
/// (directly or transitively) includes the particle integrator.

#include "consflow/cli/checkpoint.hpp"
#include "consflow/cli/data.hpp"
#include "consflow/objectives/losses.hpp"
#include "consflow/objectives/soc.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace consflow::cli {

struct StepLog {
    long step = 0;
    std::string stage;
    objectives::ObjectiveReport report;
    double lr = 0.0;
};

struct TrainHooks {
    std::function<void(const StepLog&)> on_step;
    std::function<void(long step)> on_checkpoint;
    long checkpoint_every = 500;
};

struct TrainSettings {
    double lr = 3e-4;
    long steps = 1000;
    std::size_t batch_size = 256;
    bool cosine = true;
    unsigned seed = 0;
};

/// Steps for `epochs` passes over `n` rows at the given batch size.
inline long steps_for_epochs(std::size_t n, std::size_t batch, long epochs) {
    const long per_epoch = static_cast<long>((n + batch - 1) / batch);
    return per_epoch * epochs;
}

namespace detail {

inline void optimizer_step(ModelBundle& b, const ad::Tensor& loss, ad::Bindings& params, double lr, long step) {
    if (!std::isfinite(loss.item())) {
        throw NumericalError("non-finite loss at step " + std::to_string(step));
    }
    ad::GradientMap grads = ad::backward(loss, params);
    for (const auto& [name, g] : grads) {
        for (double v : g) {
            if (!std::isfinite(v)) throw NumericalError("non-finite gradient for " + name + " at step " + std::to_string(step));
        }
    }
    ad::adam_step(b.store, grads, lr);
}

inline double scheduled_lr(const TrainSettings& s, long step, long total) {
    return s.cosine ? ad::cosine_lr(step, total, s.lr) : s.lr;
}

inline void after_step(const TrainHooks& hooks, const StepLog& log, long total) {
    if (hooks.on_step) hooks.on_step(log);
    if (hooks.on_checkpoint && (log.step % hooks.checkpoint_every == 0 || log.step == total)) hooks.on_checkpoint(log.step);
}

}  // namespace detail

/// Maximum likelihood on timestamped events; minibatches come from reshuffled epochs.
inline void train_gm(ModelBundle& b, const std::vector<double>& t, const std::vector<double>& x,
                     const TrainSettings& s, const TrainHooks& hooks = {}) {
    const std::size_t D = b.assembly.dim(), n = t.size();
    if (n == 0 || x.size() != n * D) throw std::invalid_argument("train_gm: empty or malformed training data");
    std::mt19937_64 rng(s.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n;
    std::vector<double> bt, bx;
    for (long step = 1; step <= s.steps; ++step) {
        bt.clear();
        bx.clear();
        for (std::size_t k = 0; k < std::min(s.batch_size, n); ++k) {
            if (cursor >= n) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            const std::size_t r = order[cursor++];
            bt.push_back(t[r]);
            bx.insert(bx.end(), x.begin() + static_cast<long>(r * D), x.begin() + static_cast<long>((r + 1) * D));
        }
        ad::Bindings params(b.store);
        const std::size_t m = bt.size();
        ad::Tensor loss = objectives::loss_gm(b.assembly.model, params, ad::Tensor::column(bt), ad::Tensor::constant({m, D}, bx));
        StepLog log{step, "gm", {}, detail::scheduled_lr(s, step - 1, s.steps)};
        log.report.add("nll", loss.item(), 1.0);
        log.report.total = loss.item();
        log.report.samples["data"] = m;
        detail::optimizer_step(b, loss, params, log.lr, step);
        detail::after_step(hooks, log, s.steps);
    }
}

/// Snapshot transport: per-step minibatch from every snapshot, plus kinetic energy.
inline void train_ot(ModelBundle& b, const objectives::SnapshotDataset& data, const objectives::OtOptions& opt,
                     const TrainSettings& s, const TrainHooks& hooks = {}) {
    data.validate();
    if (data.snapshots.size() < 2) throw std::invalid_argument("train_ot: need at least two snapshots");
    const std::size_t D = data.dim;
    if (D != b.assembly.dim()) throw std::invalid_argument("train_ot: data dimension does not match the model");
    std::mt19937_64 rng(s.seed);
    for (long step = 1; step <= s.steps; ++step) {
        std::vector<objectives::SnapshotBatch> batches;
        for (const auto& snap : data.snapshots) {
            const std::size_t n = snap.rows(D);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            objectives::SnapshotBatch sb{snap.t, {}};
            for (std::size_t k = 0; k < std::min(s.batch_size, n); ++k) {
                const std::size_t r = pick(rng);
                sb.x.insert(sb.x.end(), snap.x.begin() + static_cast<long>(r * D),
                            snap.x.begin() + static_cast<long>((r + 1) * D));
            }
            batches.push_back(std::move(sb));
        }
        ad::Bindings params(b.store);
        auto res = objectives::loss_ot(b.assembly, params, batches, opt, rng);
        StepLog log{step, "ot", res.report, detail::scheduled_lr(s, step - 1, s.steps)};
        detail::optimizer_step(b, res.loss, params, log.lr, step);
        detail::after_step(hooks, log, s.steps);
    }
}

/// Staged SOC training; the cosine schedule spans all stages.
inline void train_soc(ModelBundle& b, const objectives::SocEnvironment& env, const objectives::SocScheduleConfig& sched,
                      std::size_t n_mc, const TrainSettings& s, const TrainHooks& hooks = {}) {
    env.validate();
    const auto stages = objectives::staged_soc_schedule(sched);
    long total = 0;
    for (const auto& st : stages) total += st.iterations;
    std::mt19937_64 rng(s.seed);
    long step = 0;
    for (const auto& st : stages) {
        objectives::SocOptions opt{n_mc, st.terms};
        for (long k = 0; k < st.iterations; ++k) {
            ++step;
            auto q0 = draw_endpoint(env.q0, s.batch_size, rng);
            auto q1 = draw_endpoint(env.q1, s.batch_size, rng);
            ad::Bindings params(b.store);
            auto res = objectives::loss_soc(b.assembly, params, env, q0, q1, opt, rng);
            StepLog log{step, st.name, res.report, detail::scheduled_lr(s, step - 1, total)};
            detail::optimizer_step(b, res.loss, params, log.lr, step);
            detail::after_step(hooks, log, total);
        }
    }
}

}  // namespace consflow::cli
