#pragma once

/// @file diagnostics.hpp
/// @brief Numerical certificates for a flux assembly: continuity, divergence-free
/// parts, normalization and far-field decay; plus held-out likelihood.

#include "consflow/density/sampling.hpp"
#include "consflow/eval/residual.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace consflow::eval {

struct Stats {
    double max = 0.0, mean = 0.0, q50 = 0.0, q90 = 0.0, q99 = 0.0;
    std::size_t count = 0;
};

inline Stats summarize(std::vector<double> v) {
    Stats s;
    s.count = v.size();
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) { return v[static_cast<std::size_t>(p * static_cast<double>(v.size() - 1))]; };
    s.max = v.back();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.q50 = q(0.5);
    s.q90 = q(0.9);
    s.q99 = q(0.99);
    return s;
}

inline nlohmann::json to_json(const Stats& s) {
    return {{"max", s.max}, {"mean", s.mean}, {"q50", s.q50}, {"q90", s.q90}, {"q99", s.q99}, {"count", s.count}};
}

// ----------------------------------------------------------------------------
// Far-field probe
// ----------------------------------------------------------------------------

struct FarfieldCurve {
    std::vector<double> radii;
    std::vector<double> spurious;   ///< max_i |(-d_t a)_i| over rays
    std::vector<double> corrected;  ///< max_i |(-d_t a + b)_i| over rays

    /// Corrected curve nonincreasing for radii >= r_from.
    [[nodiscard]] bool corrected_monotone_from(double r_from) const {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < radii.size(); ++k) {
            if (radii[k] < r_from) continue;
            if (corrected[k] > prev) return false;
            prev = corrected[k];
        }
        return true;
    }
};

/// Unit directions: +-e_i for every axis, then `extra` random unit vectors.
inline std::vector<std::vector<double>> probe_directions(std::size_t D, std::size_t extra, unsigned seed) {
    std::vector<std::vector<double>> dirs;
    for (std::size_t i = 0; i < D; ++i) {
        for (double sgn : {1.0, -1.0}) {
            std::vector<double> e(D, 0.0);
            e[i] = sgn;
            dirs.push_back(e);
        }
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    for (std::size_t k = 0; k < extra; ++k) {
        std::vector<double> e(D);
        double norm = 0.0;
        for (auto& v : e) {
            v = N(rng);
            norm += v * v;
        }
        for (auto& v : e) v /= std::sqrt(norm);
        dirs.push_back(e);
    }
    return dirs;
}

/// max |j_i| along rays center + r e for the spurious and corrected fluxes.
inline FarfieldCurve farfield_probe(const conservation::FluxAssembly& as, const ad::ParameterStore& store, double t,
                                    const std::vector<std::vector<double>>& directions, const std::vector<double>& radii,
                                    const std::vector<double>& center = {}) {
    const std::size_t D = as.dim();
    for (std::size_t k = 1; k < radii.size(); ++k) {
        if (!(radii[k] > radii[k - 1])) throw std::invalid_argument("farfield_probe: radii must increase");
    }
    std::vector<double> c = center.empty() ? std::vector<double>(D, 0.0) : center;
    std::vector<double> pts;
    for (double r : radii) {
        for (const auto& e : directions) {
            if (e.size() != D) throw std::invalid_argument("farfield_probe: direction has wrong dimension");
            for (std::size_t d = 0; d < D; ++d) pts.push_back(c[d] + r * e[d]);
        }
    }
    const std::size_t n = pts.size() / D;
    ad::Bindings params(store, false);
    auto sf = conservation::spurious_flux_components(as, params, ad::Tensor::constant(t),
                                                     ad::Tensor::constant({n, D}, pts));
    ad::Tensor corr = sf.minus_dt_a + sf.b;
    FarfieldCurve out;
    out.radii = radii;
    const std::size_t per = directions.size();
    for (std::size_t k = 0; k < radii.size(); ++k) {
        double s = 0.0, cc = 0.0;
        for (std::size_t p = 0; p < per; ++p) {
            const std::size_t r = k * per + p;
            for (std::size_t d = 0; d < D; ++d) {
                s = std::max(s, std::abs(sf.minus_dt_a.at(r, d)));
                cc = std::max(cc, std::abs(corr.at(r, d)));
            }
        }
        out.spurious.push_back(s);
        out.corrected.push_back(cc);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Normalization
// ----------------------------------------------------------------------------

/// Box [lo, hi] per coordinate and a step that resolves the narrowest logistic.
struct QuadratureBox {
    std::vector<double> lo, hi;
    std::size_t points_per_axis = 0;
};

/// Widest/narrowest logistic scale-width 1/s at time t (over sample-conditioned heads).
inline std::pair<double, double> scale_width_range(const density::DensityModel& model, const ad::ParameterStore& store,
                                                   double t, const std::vector<double>& samples) {
    ad::Bindings params(store, false);
    const std::size_t D = model.dim(), n = samples.size() / D;
    auto h = model.heads(params, ad::Tensor::constant(t),
                         model.to_model_order(ad::Tensor::constant({n, D}, samples)));
    auto v = h.inv_scale.values();
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    return {1.0 / *mx, 1.0 / *mn};
}

inline QuadratureBox covering_box(const density::DensityModel& model, const ad::ParameterStore& store, double t,
                                  std::size_t max_points = 600, unsigned seed = 1) {
    const std::size_t D = model.dim();
    std::mt19937_64 rng(seed);
    auto xs = density::sample(model, store, t, 2000, rng);
    auto [narrow, wide] = scale_width_range(model, store, t, xs);
    QuadratureBox box;
    box.lo.assign(D, std::numeric_limits<double>::infinity());
    box.hi.assign(D, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < xs.size() / D; ++r) {
        for (std::size_t d = 0; d < D; ++d) {
            box.lo[d] = std::min(box.lo[d], xs[r * D + d]);
            box.hi[d] = std::max(box.hi[d], xs[r * D + d]);
        }
    }
    double span = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        box.lo[d] -= 14.0 * wide;
        box.hi[d] += 14.0 * wide;
        span = std::max(span, box.hi[d] - box.lo[d]);
    }
    box.points_per_axis = std::min<std::size_t>(max_points, static_cast<std::size_t>(std::ceil(span / narrow * 6.0)) + 1);
    box.points_per_axis = std::max<std::size_t>(box.points_per_axis, 201);
    return box;
}

/// Trapezoid integral of rho_t over a covering grid (D = 1 or 2).
inline double normalization_integral(const density::DensityModel& model, const ad::ParameterStore& store, double t,
                                     std::size_t max_points = 600) {
    const std::size_t D = model.dim();
    if (D > 2) throw std::invalid_argument("normalization_integral: only D <= 2");
    QuadratureBox box = covering_box(model, store, t, max_points);
    const std::size_t m = box.points_per_axis;
    std::vector<std::vector<double>> axis(D, std::vector<double>(m));
    std::vector<double> h(D);
    for (std::size_t d = 0; d < D; ++d) {
        h[d] = (box.hi[d] - box.lo[d]) / static_cast<double>(m - 1);
        for (std::size_t k = 0; k < m; ++k) axis[d][k] = box.lo[d] + h[d] * static_cast<double>(k);
    }
    auto wt = [m](std::size_t k) { return (k == 0 || k + 1 == m) ? 0.5 : 1.0; };
    ad::Bindings params(store, false);
    double total = 0.0;
    if (D == 1) {
        auto lr = model.log_density(params, ad::Tensor::constant(t), ad::Tensor::column(axis[0]));
        for (std::size_t k = 0; k < m; ++k) total += wt(k) * std::exp(lr.at(k, 0));
        return total * h[0];
    }
    // 2D: one grid row per pass to bound memory
    std::vector<double> row(2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            row[2 * j] = axis[0][i];
            row[2 * j + 1] = axis[1][j];
        }
        auto lr = model.log_density(params, ad::Tensor::constant(t), ad::Tensor::constant({m, 2}, row));
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += wt(j) * std::exp(lr.at(j, 0));
        total += wt(i) * acc;
    }
    return total * h[0] * h[1];
}

// ----------------------------------------------------------------------------
// Held-out likelihood
// ----------------------------------------------------------------------------

struct NllResult {
    std::vector<double> per_snapshot;
    double overall = 0.0;
    std::size_t count = 0;
};

/// Mean -log rho_t per snapshot (t_i, x_i row-major) and pooled over all rows.
inline NllResult nll_eval(const density::DensityModel& model, const ad::ParameterStore& store,
                          const std::vector<std::pair<double, std::vector<double>>>& snapshots) {
    const std::size_t D = model.dim();
    NllResult out;
    double pooled = 0.0;
    for (const auto& [t, x] : snapshots) {
        const std::size_t n = x.size() / D;
        if (n == 0) throw std::invalid_argument("nll_eval: empty test snapshot");
        ad::Bindings params(store, false);
        auto lr = model.log_density(params, ad::Tensor::constant(t), ad::Tensor::constant({n, D}, x));
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s -= lr.at(r, 0);
        out.per_snapshot.push_back(s / static_cast<double>(n));
        pooled += s;
        out.count += n;
    }
    if (out.count == 0) throw std::invalid_argument("nll_eval: empty test set");
    out.overall = pooled / static_cast<double>(out.count);
    return out;
}

/// Per-event NLL with individual times (t: n, x: n*D).
inline double nll_events(const density::DensityModel& model, const ad::ParameterStore& store,
                         const std::vector<double>& t, const std::vector<double>& x) {
    const std::size_t D = model.dim(), n = t.size();
    if (n == 0) throw std::invalid_argument("nll_eval: empty test set");
    ad::Bindings params(store, false);
    auto lr = model.log_density(params, ad::Tensor::column(t), ad::Tensor::constant({n, D}, x));
    double s = 0.0;
    for (std::size_t r = 0; r < n; ++r) s -= lr.at(r, 0);
    return s / static_cast<double>(n);
}

// ----------------------------------------------------------------------------
// Report
// ----------------------------------------------------------------------------

struct Tolerances {
    double continuity = 1e-4;
    double divergence = 1e-5;
    double normalization = 1e-3;
    double farfield = 1e-8;
};

struct DiagnoseOptions {
    std::size_t points = 100;
    unsigned seed = 0;
    Tolerances tol;
    std::vector<double> normalization_times{0.0, 0.3, 0.7, 1.0};
    double farfield_time = 0.5;
    std::vector<double> farfield_widths{5, 10, 15, 20, 25, 30, 35, 40};  ///< radii in scale-widths
};

struct DiagnosticReport {
    Stats continuity;  ///< |d_t rho + div j| / (1 + |d_t rho|)
    Stats fokker_planck;
    Stats div_b;  ///< |div b| / (1 + |b|)
    Stats div_v;
    std::vector<std::pair<double, double>> normalization;  ///< (t, integral)
    FarfieldCurve farfield;
    std::size_t far_field_rows = 0;
    Tolerances tol;
    std::map<std::string, bool> pass;

    [[nodiscard]] bool all_pass() const {
        return std::all_of(pass.begin(), pass.end(), [](const auto& kv) { return kv.second; });
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = "diagnostic";
        j["continuity"] = eval::to_json(continuity);
        if (fokker_planck.count) j["fokker_planck"] = eval::to_json(fokker_planck);
        j["div_b"] = eval::to_json(div_b);
        if (div_v.count) j["div_v"] = eval::to_json(div_v);
        nlohmann::json norm = nlohmann::json::array();
        for (const auto& [t, v] : normalization) norm.push_back({{"t", t}, {"integral", v}});
        j["normalization"] = norm;
        j["farfield"] = {{"radii", farfield.radii}, {"spurious", farfield.spurious}, {"corrected", farfield.corrected}};
        j["tolerances"] = {{"continuity", tol.continuity},
                           {"divergence", tol.divergence},
                           {"normalization", tol.normalization},
                           {"farfield", tol.farfield}};
        j["pass"] = pass;
        j["all_pass"] = all_pass();
        return j;
    }

    /// Plain-text summary, one line per check.
    [[nodiscard]] std::string summary() const {
        std::ostringstream s;
        s << std::scientific << std::setprecision(3);
        auto verdict = [&](const std::string& name) {
            const auto it = pass.find(name);
            return it == pass.end() ? "" : (it->second ? "  ok" : "  FAIL");
        };
        auto line = [&](const std::string& name, double v) { s << name << ": " << v << verdict(name) << "\n"; };
        line("continuity", continuity.max);
        if (fokker_planck.count) line("fokker_planck", fokker_planck.max);
        line("div_b", div_b.max);
        if (div_v.count) line("div_v", div_v.max);
        for (const auto& [t, v] : normalization) {
            s << "normalization t=" << std::defaultfloat << t << std::scientific << ": " << std::setprecision(8)
              << std::fixed << v << std::scientific << std::setprecision(3) << "\n";
        }
        if (!normalization.empty()) s << "normalization:" << verdict("normalization") << "\n";
        if (!farfield.corrected.empty()) line("farfield", farfield.corrected.back());
        return s.str();
    }
};

/// Relative divergence |div f| / (1 + |f|) of one FieldEval member at n points.
inline std::vector<double> relative_divergence(const conservation::FluxAssembly& as, const ad::ParameterStore& store,
                                               std::function<ad::Tensor(const conservation::FieldEval&)> pick,
                                               std::span<const double> t, std::span<const double> x) {
    const std::size_t D = as.dim();
    auto field = assembly_field(as, store, pick, {true, false, false});
    auto div = fd_divergence(field, t, x, D);
    auto val = field(std::vector<double>(t.begin(), t.end()), std::vector<double>(x.begin(), x.end()));
    std::vector<double> out(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        double norm = 0.0;
        for (std::size_t d = 0; d < D; ++d) norm += val[r * D + d] * val[r * D + d];
        out[r] = std::abs(div[r]) / (1.0 + std::sqrt(norm));
    }
    return out;
}

/// Random evaluation points: t uniform in (0,1), x drawn from rho_t and spread by
/// up to 6 scale-widths around it.
inline void diagnostic_points(const conservation::FluxAssembly& as, const ad::ParameterStore& store, std::size_t n,
                              unsigned seed, std::vector<double>& t, std::vector<double>& x) {
    const std::size_t D = as.dim();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.02, 0.98), J(-1.0, 1.0);
    t.resize(n);
    x.resize(n * D);
    for (std::size_t r = 0; r < n; ++r) {
        t[r] = U(rng);
        auto s = density::sample(as.model, store, t[r], 1, rng);
        auto [narrow, wide] = scale_width_range(as.model, store, t[r], s);
        (void)narrow;
        for (std::size_t d = 0; d < D; ++d) x[r * D + d] = s[d] + 2.0 * wide * J(rng);
    }
}

inline DiagnosticReport diagnose(const conservation::FluxAssembly& as, const ad::ParameterStore& store,
                                 const DiagnoseOptions& opt = {}) {
    DiagnosticReport rep;
    rep.tol = opt.tol;
    const std::size_t D = as.dim();
    std::vector<double> t, x;
    diagnostic_points(as, store, opt.points, opt.seed, t, x);

    auto cont = continuity_residual(as, store, t, x);
    std::vector<double> rel(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) rel[r] = cont.residual[r] / (1.0 + std::abs(cont.dt_rho[r]));
    rep.continuity = summarize(rel);
    rep.pass["continuity"] = rep.continuity.max < opt.tol.continuity;

    if (!as.options.volatility.is_zero()) {
        auto fp = fokker_planck_residual(as, store, t, x);
        for (std::size_t r = 0; r < t.size(); ++r) rel[r] = fp.residual[r] / (1.0 + std::abs(fp.dt_rho[r]));
        rep.fokker_planck = summarize(rel);
        rep.pass["fokker_planck"] = rep.fokker_planck.max < opt.tol.continuity;
    }

    rep.div_b = summarize(relative_divergence(as, store, [](const auto& e) { return e.b; }, t, x));
    rep.pass["div_b"] = rep.div_b.max < opt.tol.divergence;
    if (as.vnet) {
        rep.div_v = summarize(relative_divergence(as, store, [](const auto& e) { return e.v; }, t, x));
        rep.pass["div_v"] = rep.div_v.max < opt.tol.divergence;
    }

    if (D <= 2) {
        bool ok = true;
        for (double tn : opt.normalization_times) {
            const double z = normalization_integral(as.model, store, tn);
            rep.normalization.emplace_back(tn, z);
            ok = ok && std::abs(z - 1.0) < opt.tol.normalization;
        }
        rep.pass["normalization"] = ok;
    }

    // far field: rays from the sample mean, radii measured in the widest scale-width
    std::mt19937_64 rng(opt.seed + 17);
    auto xs = density::sample(as.model, store, opt.farfield_time, 512, rng);
    std::vector<double> centre(D, 0.0);
    for (std::size_t r = 0; r < 512; ++r) {
        for (std::size_t d = 0; d < D; ++d) centre[d] += xs[r * D + d] / 512.0;
    }
    double extent = 0.0;
    for (std::size_t r = 0; r < 512; ++r) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += (xs[r * D + d] - centre[d]) * (xs[r * D + d] - centre[d]);
        extent = std::max(extent, std::sqrt(s));
    }
    const double wide = scale_width_range(as.model, store, opt.farfield_time, xs).second;
    std::vector<double> radii;
    for (double w : opt.farfield_widths) radii.push_back(extent + w * wide);
    rep.farfield = farfield_probe(as, store, opt.farfield_time, probe_directions(D, 4, opt.seed), radii, centre);
    rep.pass["farfield"] = rep.farfield.corrected.back() < opt.tol.farfield &&
                           rep.farfield.corrected_monotone_from(extent + 10.0 * wide);
    return rep;
}

}  // namespace consflow::eval
