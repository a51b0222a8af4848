#pragma once

/// @file commands.hpp
/// @brief train / eval / sample / diagnose / plot.

#include "consflow/cli/svg.hpp"
#include "consflow/cli/train.hpp"
#include "consflow/eval/diagnostics.hpp"
#include "consflow/eval/integrate.hpp"
#include "consflow/eval/wasserstein.hpp"

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace consflow::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalFailure = 3 };

/// Appends one JSON object per line.
class JsonlWriter {
public:
    explicit JsonlWriter(const fs::path& path, bool append = false)
        : out_(path, append ? std::ios::app : std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
    }
    void write(const json& row) {
        out_ << row.dump() << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

inline json metrics_row(const StepLog& log, unsigned seed) {
    json row;
    row["step"] = log.step;
    row["stage"] = log.stage;
    for (const auto& [k, v] : log.report.terms) row[k] = v;
    row["total"] = log.report.total;
    row["weights"] = log.report.weights;
    row["samples"] = log.report.samples;
    row["lr"] = log.lr;
    row["seed"] = seed;
    return row;
}

/// Per-coordinate centre/spread of row-major data, used to place initial means.
inline void init_from_data(density::ModelSpec& spec, const std::vector<double>& x) {
    const std::size_t D = spec.dim, n = x.size() / D;
    if (n < 2) return;
    spec.init_center.assign(D, 0.0);
    spec.init_spread.assign(D, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < D; ++d) spec.init_center[d] += x[r * D + d] / static_cast<double>(n);
    }
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < D; ++d) {
            const double e = x[r * D + d] - spec.init_center[d];
            spec.init_spread[d] += e * e / static_cast<double>(n - 1);
        }
    }
    for (auto& s : spec.init_spread) s = std::sqrt(s);
}

// ============================================================================
// train
// ============================================================================

inline int cmd_train(const RunConfig& cfg) {
    const fs::path out = cfg.output_dir;
    fs::create_directories(out);
    write_json(cfg.resolved, out / "config.json");
    LoadedData data = load_data(cfg);

    ModelConfig mc = cfg.model;
    std::vector<double> train_t, train_x;
    if (cfg.objective == "gm") {
        data.events.gather(data.events.train, train_t, train_x);
        init_from_data(mc.spec, train_x);
    } else if (cfg.objective == "ot") {
        std::vector<double> all;
        for (const auto& s : data.snapshots.snapshots) all.insert(all.end(), s.x.begin(), s.x.end());
        init_from_data(mc.spec, all);
    } else {
        mc.spec.init_center = {0.5 * (data.env.q0.mx + data.env.q1.mx), 0.5 * (data.env.q0.my + data.env.q1.my)};
        mc.spec.init_spread = {0.5 * std::abs(data.env.q1.mx - data.env.q0.mx) + data.env.q0.std,
                               0.5 * std::abs(data.env.q1.my - data.env.q0.my) + data.env.q0.std};
    }
    ModelBundle bundle;
    build_model(bundle, mc, cfg.volatility, cfg.seed);

    JsonlWriter metrics(out / "metrics.jsonl");
    std::deque<fs::path> kept;
    TrainHooks hooks;
    hooks.checkpoint_every = cfg.checkpoint_every;
    hooks.on_step = [&](const StepLog& log) {
        if (log.step % cfg.log_every == 0) metrics.write(metrics_row(log, cfg.seed));
    };
    hooks.on_checkpoint = [&](long step) {
        std::ostringstream name;
        name << "ckpt_" << std::setw(8) << std::setfill('0') << step << ".json";
        const fs::path p = out / name.str();
        save_checkpoint(bundle, cfg.resolved, p);
        kept.push_back(p);
        while (kept.size() > cfg.keep_checkpoints) {
            fs::remove(kept.front());
            kept.pop_front();
        }
    };

    TrainSettings ts{cfg.optimizer.lr, cfg.optimizer.steps, cfg.optimizer.batch_size, cfg.optimizer.schedule == "cosine",
                     cfg.seed};
    try {
        if (cfg.objective == "gm") {
            if (ts.steps == 0) ts.steps = steps_for_epochs(train_t.size(), ts.batch_size, cfg.optimizer.epochs);
            train_gm(bundle, train_t, train_x, ts, hooks);
        } else if (cfg.objective == "ot") {
            if (ts.steps == 0) {
                ts.steps = steps_for_epochs(data.snapshots.snapshots.front().rows(data.snapshots.dim), ts.batch_size,
                                            cfg.optimizer.epochs);
            }
            train_ot(bundle, data.snapshots, cfg.ot, ts, hooks);
        } else {
            ts.batch_size = cfg.soc_batch;
            train_soc(bundle, data.env, cfg.soc, cfg.ot.n_mc, ts, hooks);
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalFailure;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumericalFailure;
    }
    save_checkpoint(bundle, cfg.resolved, out / "checkpoint.json");
    std::cout << "trained " << bundle.store.step() << " steps; checkpoint at " << (out / "checkpoint.json").string()
              << "\n";
    return kOk;
}

// ============================================================================
// eval
// ============================================================================

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd m;
    if (v.empty()) return m;
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m.mean) * (x - m.mean);
    m.std = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
    return m;
}

/// n rows drawn with replacement from a row-major cloud.
inline std::vector<double> resample_rows(const std::vector<double>& x, std::size_t D, std::size_t n,
                                         std::mt19937_64& rng) {
    const std::size_t m = x.size() / D;
    std::uniform_int_distribution<std::size_t> pick(0, m - 1);
    std::vector<double> out;
    out.reserve(n * D);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t r = pick(rng);
        out.insert(out.end(), x.begin() + static_cast<long>(r * D), x.begin() + static_cast<long>((r + 1) * D));
    }
    return out;
}

struct SnapshotEval {
    std::vector<double> nll;
    std::vector<MeanStd> direct_w2;       ///< per snapshot
    std::vector<MeanStd> transported_w2;  ///< snapshot i -> i+1
    std::vector<MeanStd> raw_w2;          ///< consecutive raw test snapshots
};

/// Direct-sample and transported W2 against held-out snapshots, `runs` replicates.
inline SnapshotEval evaluate_snapshots(const ModelBundle& b, const objectives::SnapshotDataset& data, std::size_t runs,
                                       std::size_t samples, std::size_t steps, unsigned seed) {
    const std::size_t D = data.dim;
    if (D != b.assembly.dim()) throw std::invalid_argument("eval: data dimension does not match the checkpoint");
    SnapshotEval ev;
    std::vector<std::pair<double, std::vector<double>>> tests;
    for (const auto& s : data.snapshots) {
        if (s.test.empty()) throw std::invalid_argument("eval: empty test snapshot");
        tests.emplace_back(s.t, s.test);
    }
    ev.nll = eval::nll_eval(b.assembly.model, b.store, tests).per_snapshot;
    std::mt19937_64 rng(seed);
    const std::size_t S = data.snapshots.size();
    std::vector<std::vector<double>> direct(S), transported(S - 1), raw(S - 1);
    for (std::size_t run = 0; run < runs; ++run) {
        std::vector<std::vector<double>> sub(S);
        for (std::size_t i = 0; i < S; ++i) sub[i] = resample_rows(data.snapshots[i].test, D, samples, rng);
        for (std::size_t i = 0; i < S; ++i) {
            auto xs = density::sample(b.assembly.model, b.store, data.snapshots[i].t, samples, rng);
            direct[i].push_back(eval::wasserstein2(xs, sub[i], D).value);
        }
        for (std::size_t i = 0; i + 1 < S; ++i) {
            const double t0 = data.snapshots[i].t, t1 = data.snapshots[i + 1].t;
            const auto n_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(steps * (t1 - t0))));
            auto traj = eval::integrate(b.assembly, b.store, sub[i], eval::uniform_grid(t0, t1, n_steps),
                                        conservation::VolatilitySchedule{}, rng);
            transported[i].push_back(eval::wasserstein2(traj.slice(n_steps), sub[i + 1], D).value);
            raw[i].push_back(eval::wasserstein2(sub[i], sub[i + 1], D).value);
        }
    }
    for (const auto& v : direct) ev.direct_w2.push_back(mean_std(v));
    for (const auto& v : transported) ev.transported_w2.push_back(mean_std(v));
    for (const auto& v : raw) ev.raw_w2.push_back(mean_std(v));
    return ev;
}

struct SocEval {
    double violation_g0 = 0.0, violation_g05 = 0.0;
    double endpoint_w2_g0 = 0.0, endpoint_w2_g05 = 0.0;
    eval::TrajectoryBatch paths_g0, paths_g05;
};

/// Trajectories from rho_0 samples with g = 0 and g = 0.5; obstacle hits and endpoint W2 to q1.
inline SocEval evaluate_soc(const ModelBundle& b, const objectives::SocEnvironment& env, std::size_t n,
                            std::size_t steps, unsigned seed) {
    std::mt19937_64 rng(seed);
    SocEval ev;
    auto x0 = density::sample(b.assembly.model, b.store, 0.0, n, rng);
    auto q1 = draw_endpoint(env.q1, n, rng);
    const auto grid = eval::uniform_grid(0.0, 1.0, steps);
    ev.paths_g0 = eval::integrate(b.assembly, b.store, x0, grid, conservation::VolatilitySchedule::constant(0.0), rng);
    ev.paths_g05 = eval::integrate(b.assembly, b.store, x0, grid, conservation::VolatilitySchedule::constant(0.5), rng);
    ev.violation_g0 = env.violation_fraction(ev.paths_g0.all_points());
    ev.violation_g05 = env.violation_fraction(ev.paths_g05.all_points());
    ev.endpoint_w2_g0 = eval::wasserstein2(ev.paths_g0.slice(steps), q1, 2).value;
    ev.endpoint_w2_g05 = eval::wasserstein2(ev.paths_g05.slice(steps), q1, 2).value;
    return ev;
}

inline int cmd_eval(const std::string& checkpoint, const std::vector<std::string>& overrides, const std::string& out_dir) {
    ModelBundle b;
    RunConfig cfg = load_checkpoint(checkpoint, b, overrides);
    const fs::path out = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
    fs::create_directories(out);
    LoadedData data = load_data(cfg);
    JsonlWriter rows(out / "eval.jsonl");
    std::ofstream table(out / "eval.txt");
    table << std::fixed << std::setprecision(4);
    if (cfg.dataset.kind == "pinwheel" || cfg.dataset.kind == "csv") {
        std::vector<double> t, x;
        data.events.gather(data.events.test, t, x);
        if (t.empty()) throw std::invalid_argument("eval: empty test set");
        if (data.events.dim != b.assembly.dim()) throw std::invalid_argument("eval: dimension mismatch");
        const double nll = eval::nll_events(b.assembly.model, b.store, t, x);
        rows.write({{"metric", "nll"}, {"split", "test"}, {"value", nll}, {"count", t.size()}});
        table << "test NLL per event: " << nll << " (" << t.size() << " events)\n";
    } else if (cfg.dataset.kind == "snapshots") {
        auto ev = evaluate_snapshots(b, data.snapshots, cfg.evaluation.runs, cfg.evaluation.samples,
                                     cfg.evaluation.steps, cfg.seed);
        table << "snapshot   t      NLL      direct W2 (std)     transported W2 (std)\n";
        for (std::size_t i = 0; i < ev.nll.size(); ++i) {
            json r{{"metric", "snapshot"},
                   {"index", i},
                   {"t", data.snapshots.snapshots[i].t},
                   {"nll", ev.nll[i]},
                   {"direct_w2", ev.direct_w2[i].mean},
                   {"direct_w2_std", ev.direct_w2[i].std},
                   {"runs", cfg.evaluation.runs}};
            table << std::setw(8) << i << "  " << data.snapshots.snapshots[i].t << "  " << ev.nll[i] << "  "
                  << ev.direct_w2[i].mean << " (" << ev.direct_w2[i].std << ")";
            if (i > 0) {
                r["transported_w2"] = ev.transported_w2[i - 1].mean;
                r["transported_w2_std"] = ev.transported_w2[i - 1].std;
                r["raw_consecutive_w2"] = ev.raw_w2[i - 1].mean;
                table << "   " << ev.transported_w2[i - 1].mean << " (" << ev.transported_w2[i - 1].std << ")";
            }
            table << "\n";
            rows.write(r);
        }
    } else {
        auto ev = evaluate_soc(b, data.env, cfg.evaluation.samples, cfg.evaluation.steps, cfg.seed);
        rows.write({{"metric", "soc"},
                    {"violation_g0", ev.violation_g0},
                    {"violation_g0.5", ev.violation_g05},
                    {"endpoint_w2_g0", ev.endpoint_w2_g0},
                    {"endpoint_w2_g0.5", ev.endpoint_w2_g05}});
        table << "obstacle violations g=0: " << ev.violation_g0 << "  g=0.5: " << ev.violation_g05 << "\n"
              << "endpoint W2 g=0: " << ev.endpoint_w2_g0 << "  g=0.5: " << ev.endpoint_w2_g05 << "\n";
    }
    table.close();
    std::ifstream in(out / "eval.txt");
    std::cout << in.rdbuf();
    return kOk;
}

// ============================================================================
// sample / diagnose
// ============================================================================

inline int cmd_sample(const std::string& checkpoint, double t, std::size_t n, unsigned seed, const std::string& path) {
    ModelBundle b;
    load_checkpoint(checkpoint, b);
    if (n < 1) throw ConfigError("sample: n must be >= 1");
    std::mt19937_64 rng(seed);
    auto xs = density::sample(b.assembly.model, b.store, t, n, rng);
    const std::size_t D = b.assembly.dim();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t i = 1; i <= D; ++i) out << (i > 1 ? "," : "") << "x" << i;
    out << "\n" << std::setprecision(17);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t d = 0; d < D; ++d) out << (d ? "," : "") << xs[r * D + d];
        out << "\n";
    }
    return kOk;
}

inline int cmd_diagnose(const std::string& checkpoint, const std::vector<std::string>& overrides,
                        const std::string& out_dir) {
    ModelBundle b;
    RunConfig cfg = load_checkpoint(checkpoint, b, overrides);
    auto rep = eval::diagnose(b.assembly, b.store, cfg.diagnostics);
    const fs::path out = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
    fs::create_directories(out);
    JsonlWriter(out / "diagnostics.jsonl", true).write(rep.to_json());
    std::cout << rep.summary() << (rep.all_pass() ? "all checks passed\n" : "checks FAILED\n");
    return rep.all_pass() ? kOk : kNumericalFailure;
}

// ============================================================================
// plot
// ============================================================================

struct PlotOptions {
    std::size_t axis_x = 0, axis_y = 1;
    std::vector<double> times{0.0, 0.5, 1.0};
    std::size_t grid = 60;
    std::size_t trajectories = 64;
};

namespace plot_detail {

/// Square window around samples of rho_t on the two plotted axes.
inline Rect sample_window(const ModelBundle& b, const PlotOptions& po, std::mt19937_64& rng) {
    const std::size_t D = b.assembly.dim();
    double lo = 1e300, hi = -1e300;
    for (double t : po.times) {
        auto xs = density::sample(b.assembly.model, b.store, t, 400, rng);
        for (std::size_t r = 0; r < 400; ++r) {
            for (std::size_t a : {po.axis_x, po.axis_y}) {
                lo = std::min(lo, xs[r * D + a]);
                hi = std::max(hi, xs[r * D + a]);
            }
        }
    }
    const double pad = 0.1 * (hi - lo) + 0.1;
    return {lo - pad, lo - pad, hi + pad, hi + pad};
}

inline std::vector<double> density_grid(const ModelBundle& b, const PlotOptions& po, double t, const Rect& w,
                                        std::mt19937_64& rng) {
    const std::size_t D = b.assembly.dim(), G = po.grid;
    std::vector<double> v(G * G, 0.0);
    if (D == 2) {
        std::vector<double> pts;
        for (std::size_t j = 0; j < G; ++j) {
            for (std::size_t i = 0; i < G; ++i) {
                std::vector<double> p(2);
                p[po.axis_x] = w.x0 + (i + 0.5) / G * (w.x1 - w.x0);
                p[po.axis_y] = w.y0 + (j + 0.5) / G * (w.y1 - w.y0);
                pts.insert(pts.end(), p.begin(), p.end());
            }
        }
        ad::Bindings params(b.store, false);
        auto lr = b.assembly.model.log_density(params, ad::Tensor::constant(t), ad::Tensor::constant({G * G, 2}, pts));
        for (std::size_t k = 0; k < G * G; ++k) v[k] = std::exp(lr.at(k, 0));
        return v;
    }
    // higher dimensions: histogram of samples projected on the two axes
    auto xs = density::sample(b.assembly.model, b.store, t, 20000, rng);
    for (std::size_t r = 0; r < 20000; ++r) {
        const double x = xs[r * D + po.axis_x], y = xs[r * D + po.axis_y];
        const auto i = static_cast<long>((x - w.x0) / (w.x1 - w.x0) * G);
        const auto j = static_cast<long>((y - w.y0) / (w.y1 - w.y0) * G);
        if (i >= 0 && j >= 0 && i < static_cast<long>(G) && j < static_cast<long>(G)) v[j * G + i] += 1.0;
    }
    return v;
}

inline void draw_paths(Svg& svg, const Panel& p, const eval::TrajectoryBatch& tb, std::size_t ax, std::size_t ay,
                       std::size_t max_paths, const char* colour) {
    for (std::size_t r = 0; r < std::min(max_paths, tb.n); ++r) {
        std::vector<double> xs, ys;
        for (std::size_t k = 0; k <= tb.steps(); ++k) {
            xs.push_back(tb.at(r, k, ax));
            ys.push_back(tb.at(r, k, ay));
        }
        svg.polyline(p, xs, ys, colour, 0.8, 0.6);
    }
}

}  // namespace plot_detail

inline int cmd_plot(const std::string& checkpoint, const std::string& kind, const std::vector<std::string>& overrides,
                    const std::string& out_dir, const PlotOptions& po = {}) {
    if (kind != "density" && kind != "trajectories" && kind != "farfield" && kind != "soc-paths") {
        std::cerr << "unknown plot kind '" << kind << "' (density|trajectories|farfield|soc-paths)\n";
        return kConfigError;
    }
    ModelBundle b;
    RunConfig cfg = load_checkpoint(checkpoint, b, overrides);
    const std::size_t D = b.assembly.dim();
    if (po.axis_x >= D || po.axis_y >= D || po.axis_x == po.axis_y) throw ConfigError("plot: invalid axes");
    const fs::path out = out_dir.empty() ? fs::path(cfg.output_dir) : fs::path(out_dir);
    fs::create_directories(out);
    std::mt19937_64 rng(cfg.seed);
    using namespace plot_detail;

    if (kind == "density") {
        const Rect w = sample_window(b, po, rng);
        for (double t : po.times) {
            Svg svg(420, 440);
            Panel p(30, 40, 360, 360, w);
            svg.heatmap(p, po.grid, po.grid, density_grid(b, po, t, w, rng));
            std::ostringstream title;
            title << "density t=" << t;
            svg.frame(p, title.str());
            std::ostringstream name;
            name << "density_t" << std::fixed << std::setprecision(2) << t << ".svg";
            svg.save((out / name.str()).string());
        }
        return kOk;
    }

    if (kind == "farfield") {
        // quiver of -d_t a vs corrected flux near the support, then decay curves
        const Rect w = sample_window(b, po, rng);
        const double t = 0.5;
        const std::size_t G = 15;
        std::vector<double> pts;
        std::vector<double> base(D, 0.0);
        for (std::size_t j = 0; j < G; ++j) {
            for (std::size_t i = 0; i < G; ++i) {
                std::vector<double> p = base;
                p[po.axis_x] = w.x0 + (i + 0.5) / G * (w.x1 - w.x0);
                p[po.axis_y] = w.y0 + (j + 0.5) / G * (w.y1 - w.y0);
                pts.insert(pts.end(), p.begin(), p.end());
            }
        }
        ad::Bindings params(b.store, false);
        auto sf = conservation::spurious_flux_components(b.assembly, params, ad::Tensor::constant(t),
                                                         ad::Tensor::constant({G * G, D}, pts));
        ad::Tensor corr = sf.minus_dt_a + sf.b;
        Svg svg(1260, 440);
        Panel p1(30, 40, 360, 360, w), p2(450, 40, 360, 360, w);
        double vmax = 1e-300;
        for (double v : sf.minus_dt_a.values()) vmax = std::max(vmax, std::abs(v));
        const double scale = 0.9 * (w.x1 - w.x0) / G / vmax;
        for (std::size_t k = 0; k < G * G; ++k) {
            const double x = pts[k * D + po.axis_x], y = pts[k * D + po.axis_y];
            svg.arrow(p1, x, y, scale * sf.minus_dt_a.at(k, po.axis_x), scale * sf.minus_dt_a.at(k, po.axis_y), "#c0392b");
            svg.arrow(p2, x, y, scale * corr.at(k, po.axis_x), scale * corr.at(k, po.axis_y), "#2471a3");
        }
        svg.frame(p1, "-d_t a");
        svg.frame(p2, "-d_t a + b");
        auto rep_dirs = eval::probe_directions(D, 4, cfg.seed);
        std::vector<double> radii;
        for (int r = 1; r <= 40; ++r) radii.push_back(r);
        auto curve = eval::farfield_probe(b.assembly, b.store, t, rep_dirs, radii);
        auto logv = [](double v) { return std::log10(std::max(v, 1e-30)); };
        double ymax = -30;
        for (double v : curve.spurious) ymax = std::max(ymax, logv(v));
        for (double v : curve.corrected) ymax = std::max(ymax, logv(v));
        Panel p3(870, 40, 360, 360, {0.0, -30.0, 40.0, std::ceil(ymax) + 1});
        std::vector<double> ys, yc;
        for (std::size_t k = 0; k < radii.size(); ++k) {
            ys.push_back(logv(curve.spurious[k]));
            yc.push_back(logv(curve.corrected[k]));
        }
        svg.polyline(p3, radii, ys, "#c0392b", 2.0);
        svg.polyline(p3, radii, yc, "#2471a3", 2.0);
        svg.frame(p3, "log10 max|j| vs radius (red: -d_t a, blue: corrected)");
        svg.save((out / "farfield.svg").string());
        return kOk;
    }

    if (kind == "trajectories") {
        const Rect w = sample_window(b, po, rng);
        auto x0 = density::sample(b.assembly.model, b.store, 0.0, po.trajectories, rng);
        auto tb = eval::integrate(b.assembly, b.store, x0, eval::uniform_grid(0, 1, cfg.evaluation.steps),
                                  b.assembly.options.volatility, rng);
        Svg svg(420, 440);
        Panel p(30, 40, 360, 360, w);
        svg.heatmap(p, po.grid, po.grid, density_grid(b, po, 1.0, w, rng));
        draw_paths(svg, p, tb, po.axis_x, po.axis_y, po.trajectories, "white");
        svg.frame(p, "trajectories over density at t=1");
        svg.save((out / "trajectories.svg").string());
        return kOk;
    }

    // soc-paths: g = 0 and g = 0.5 panels with obstacles
    if (D != 2 || cfg.dataset.kind != "obstacles") throw ConfigError("soc-paths needs a 2-D obstacle run");
    LoadedData data = load_data(cfg);
    auto ev = evaluate_soc(b, data.env, po.trajectories, cfg.evaluation.steps, cfg.seed);
    Svg svg(840, 440);
    const Rect w{data.env.arena_lo, data.env.arena_lo, data.env.arena_hi, data.env.arena_hi};
    Panel p1(30, 40, 360, 360, w), p2(450, 40, 360, 360, w);
    for (const Panel* p : {&p1, &p2}) {
        for (const auto& o : data.env.obstacles) svg.circle(*p, o.cx, o.cy, o.radius, "#bbbbbb", "#555555");
    }
    draw_paths(svg, p1, ev.paths_g0, 0, 1, po.trajectories, "#2471a3");
    draw_paths(svg, p2, ev.paths_g05, 0, 1, po.trajectories, "#c0392b");
    svg.frame(p1, "g = 0.0");
    svg.frame(p2, "g = 0.5");
    svg.save((out / "soc_paths.svg").string());
    return kOk;
}

}  // namespace consflow::cli
