#pragma once

/// @file losses.hpp
/// @brief Likelihood, kinetic-energy and snapshot-transport objectives.
///
/// Every expectation over rho_t uses reparameterized inverse-CDF draws, so
/// training never integrates particle dynamics.

#include "consflow/conservation/flux.hpp"
#include "consflow/density/sampling.hpp"
#include "consflow/objectives/jacobian.hpp"
#include "consflow/objectives/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::objectives {

using ad::Bindings;
using ad::Tensor;
using conservation::FluxAssembly;
using density::DensityModel;

inline constexpr std::size_t kTimeStrata = 16;

struct LossResult {
    Tensor loss;
    ObjectiveReport report;
};

/// Stratified-in-time reparameterized draws: rows are grouped by stratum
/// (stratum s owns rows s*per .. s*per+per-1), weights sum to one overall.
struct StratifiedDraw {
    Tensor t;       ///< [S, 1]
    Tensor x;       ///< [S*per, D]
    Tensor weight;  ///< [S*per, 1]
    double length = 1.0;
    std::size_t strata = 1;
    std::size_t per = 1;
};

inline StratifiedDraw draw_stratified(const DensityModel& model, Bindings& params, double t0, double t1,
                                      std::size_t n_mc, std::mt19937_64& rng, std::size_t strata = kTimeStrata) {
    if (n_mc < 1) throw std::invalid_argument("n_mc must be >= 1");
    if (!(t1 >= t0)) throw std::invalid_argument("time range must be ordered");
    StratifiedDraw d;
    d.strata = std::max<std::size_t>(1, std::min(strata, n_mc));
    const std::size_t K = model.components();
    d.per = (n_mc + d.strata - 1) / d.strata;
    d.per = ((d.per + K - 1) / K) * K;
    d.length = t1 - t0;
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> ts(d.strata);
    for (std::size_t s = 0; s < d.strata; ++s) ts[s] = t0 + (static_cast<double>(s) + U(rng)) / static_cast<double>(d.strata) * d.length;
    d.t = Tensor::column(ts);
    auto ws = density::reparameterized_sample(model, params, d.t, d.strata * d.per, rng);
    d.x = ws.x;
    d.weight = ws.weight;
    return d;
}

/// Mean of -log rho_t(x) over a batch; t is [n,1] or [1,1], x is [n,D].
inline Tensor loss_gm(const DensityModel& model, Bindings& params, const Tensor& t, const Tensor& x) {
    if (x.rows() == 0) throw std::invalid_argument("loss_gm: empty batch");
    Tensor lr = model.log_density(params, t, x);
    for (std::size_t r = 0; r < lr.rows(); ++r) {
        if (!std::isfinite(lr.at(r, 0))) {
            throw std::domain_error("loss_gm: non-finite log density at row " + std::to_string(r));
        }
    }
    return -ad::mean(lr);
}

/// int_{t0}^{t1} E_{rho_t} ||u_t||^2 dt.
inline Tensor kinetic_energy(const FluxAssembly& as, Bindings& params, double t0, double t1, std::size_t n_mc,
                             std::mt19937_64& rng) {
    StratifiedDraw d = draw_stratified(as.model, params, t0, t1, n_mc, rng);
    auto e = conservation::evaluate(as, params, d.t, d.x, {.flux = false, .velocity = true});
    return ad::sum(d.weight * ad::sum_cols(ad::square(e.velocity))) * d.length;
}

/// One minibatch per observed time; x row-major [n_i, D].
struct SnapshotBatch {
    double t = 0.0;
    std::vector<double> x;
};

struct OtOptions {
    double kinetic_weight = 0.1;
    std::size_t n_mc = 256;
    double jac_sym_weight = 0.0;
    std::size_t jac_sym_probes = 1;
};

/// sum_i mean_{x in snapshot i} -log rho_{t_i}(x) + w_kin * int E||u||^2 dt (+ optional Jacobian term).
inline LossResult loss_ot(const FluxAssembly& as, Bindings& params, const std::vector<SnapshotBatch>& batches,
                          const OtOptions& opt, std::mt19937_64& rng) {
    if (batches.size() < 2) throw std::invalid_argument("loss_ot: need at least two snapshots");
    const auto start = std::chrono::steady_clock::now();
    const std::size_t D = as.dim();
    LossResult out;
    Tensor nll = Tensor::constant(0.0);
    std::size_t count = 0;
    for (const auto& b : batches) {
        const std::size_t n = b.x.size() / D;
        nll = nll + loss_gm(as.model, params, Tensor::constant(b.t), Tensor::constant({n, D}, b.x));
        count += n;
    }
    out.loss = nll;
    out.report.add("nll", nll.item(), 1.0);
    out.report.samples["data"] = count;
    if (opt.kinetic_weight > 0.0) {
        Tensor ke = kinetic_energy(as, params, batches.front().t, batches.back().t, opt.n_mc, rng);
        out.loss = out.loss + opt.kinetic_weight * ke;
        out.report.add("kinetic", ke.item(), opt.kinetic_weight);
        out.report.samples["kinetic"] = opt.n_mc;
    }
    if (opt.jac_sym_weight > 0.0) {
        StratifiedDraw d = draw_stratified(as.model, params, batches.front().t, batches.back().t, opt.n_mc, rng);
        Tensor js = loss_jac_sym(as, params, d.t, d.x, opt.jac_sym_probes, rng, d.weight);
        out.loss = out.loss + opt.jac_sym_weight * js;
        out.report.add("jacobian-symmetry", js.item(), opt.jac_sym_weight);
    }
    out.report.total = out.loss.item();
    out.report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace consflow::objectives
