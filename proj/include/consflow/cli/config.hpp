#pragma once

/// @file config.hpp
/// @brief Run configuration: JSON file merged onto defaults, then dotted-key overrides.
///
/// Precedence (lowest to highest): built-in defaults, --config file, --seed/--out flags,
/// --override key=value (applied in the order given).

#include "consflow/conservation/flux.hpp"
#include "consflow/datasets/generators.hpp"
#include "consflow/eval/diagnostics.hpp"
#include "consflow/objectives/soc.hpp"

#include "json.hpp"

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace consflow::cli {

using nlohmann::json;

/// Invalid or unreadable configuration (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or state (exit code 3).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline json default_config() {
    return json::parse(R"({
  "model": {
    "kind": "factorized",
    "dim": 2,
    "mixture_size": 16,
    "pair_components": 32,
    "hidden_width": 256,
    "hidden_layers": 3,
    "embed_width": 128,
    "max_frequency": 20.0,
    "activation": "tanh",
    "learn_pair_weights": true,
    "ordering": [],
    "vnet": false,
    "vnet_hidden": 64,
    "use_bt": true,
    "bt_scale": 1.0
  },
  "objective": {
    "kind": "gm",
    "kinetic_weight": 0.1,
    "entropy_weight": 0.1,
    "obstacle_weight": 1.0,
    "control_sigma": 8.0,
    "jac_sym_weight": 0.0,
    "jac_sym_probes": 1,
    "n_mc": 256
  },
  "optimizer": {
    "lr": 3e-4,
    "epochs": 1000,
    "steps": 0,
    "batch_size": 256,
    "schedule": "cosine"
  },
  "soc": {
    "endpoint_iters": 1000,
    "control_iters": 1000,
    "running_iters": 20000,
    "single_stage": false,
    "batch_size": 512
  },
  "volatility": {"start": 0.0, "end": 0.0},
  "dataset": {
    "kind": "pinwheel",
    "path": "",
    "n": 10000,
    "arms": 5,
    "rotation_rate": 0.25,
    "noise": 0.05,
    "dim": 5,
    "snapshot_std": 0.5,
    "n_train": 1000,
    "n_test": 512,
    "n_obstacles": 3,
    "radius_lo": 0.6,
    "radius_hi": 1.2,
    "seed": 0
  },
  "eval": {"runs": 20, "samples": 512, "steps": 200},
  "diagnostics": {
    "points": 100,
    "continuity": 1e-4,
    "divergence": 1e-5,
    "normalization": 1e-3,
    "farfield": 1e-8
  },
  "seed": 0,
  "output_dir": "runs/default",
  "checkpoint_every": 500,
  "keep_checkpoints": 3,
  "log_every": 1
})");
}

/// Recursively copies `src` onto `dst`; every key must already exist in `dst`.
inline void merge_checked(json& dst, const json& src, const std::string& path = "") {
    if (!src.is_object()) throw ConfigError("config: " + (path.empty() ? std::string("root") : path) + " must be an object");
    for (auto it = src.begin(); it != src.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!dst.contains(it.key())) throw ConfigError("config: unknown field '" + key + "'");
        if (dst[it.key()].is_object()) {
            merge_checked(dst[it.key()], it.value(), key);
        } else {
            dst[it.key()] = it.value();
        }
    }
}

/// Flattens a (partial) config object into "a.b=value" assignments.
inline void flatten_overrides(const json& j, std::vector<std::string>& out, const std::string& prefix = "") {
    if (!j.is_object()) throw ConfigError("config: " + (prefix.empty() ? std::string("root") : prefix) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object()) {
            flatten_overrides(it.value(), out, key);
        } else {
            out.push_back(key + "=" + it.value().dump());
        }
    }
}

/// "a.b.c=value"; value is parsed as JSON when possible, otherwise taken as a string.
inline void apply_override(json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(part)) throw ConfigError("config: unknown field '" + key + "'");
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    *node = value;
}

struct ModelConfig {
    density::ModelSpec spec;
    bool vnet = false;
    std::size_t vnet_hidden = 64;
    bool use_bt = true;
    double bt_scale = 1.0;
};

struct OptimizerConfig {
    double lr = 3e-4;
    long epochs = 1000;
    long steps = 0;  ///< overrides epochs when > 0
    std::size_t batch_size = 256;
    std::string schedule = "cosine";
};

struct DatasetConfig {
    std::string kind = "pinwheel";
    std::string path;
    datasets::PinwheelSpec pinwheel;
    std::size_t dim = 5;
    double snapshot_std = 0.5;
    std::size_t n_train = 1000, n_test = 512;
    datasets::ObstacleEnvSpec obstacles;
    unsigned seed = 0;
};

struct EvalConfig {
    std::size_t runs = 20, samples = 512, steps = 200;
};

struct RunConfig {
    ModelConfig model;
    std::string objective = "gm";
    objectives::OtOptions ot;
    double entropy_weight = 0.1, obstacle_weight = 1.0, control_sigma = 8.0;
    OptimizerConfig optimizer;
    objectives::SocScheduleConfig soc;
    std::size_t soc_batch = 512;
    conservation::VolatilitySchedule volatility;
    DatasetConfig dataset;
    EvalConfig evaluation;
    eval::DiagnoseOptions diagnostics;
    unsigned seed = 0;
    std::string output_dir = "runs/default";
    long checkpoint_every = 500;
    std::size_t keep_checkpoints = 3;
    long log_every = 1;
    json resolved;  ///< fully merged JSON (echoed into outputs)
};

namespace detail {

template <class T>
T get(const json& j, const std::string& section, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: field '" + (section.empty() ? key : section + "." + key) + "' has the wrong type");
    }
}

inline void require(bool ok, const std::string& field, const std::string& msg) {
    if (!ok) throw ConfigError("config: field '" + field + "' " + msg);
}

}  // namespace detail

/// Typed view of a merged JSON config, validated field by field.
inline RunConfig parse_config(const json& j) {
    using detail::get;
    using detail::require;
    RunConfig c;
    c.resolved = j;
    const json& m = j.at("model");
    const std::string kind = get<std::string>(m, "model", "kind");
    try {
        c.model.spec.kind = density::parse_model_kind(kind);
    } catch (const std::invalid_argument&) {
        throw ConfigError("config: field 'model.kind' must be factorized, autoregressive or pair-mixture");
    }
    c.model.spec.dim = get<std::size_t>(m, "model", "dim");
    c.model.spec.mixture_size = get<std::size_t>(m, "model", "mixture_size");
    c.model.spec.pair_components = get<std::size_t>(m, "model", "pair_components");
    c.model.spec.hidden_width = get<std::size_t>(m, "model", "hidden_width");
    c.model.spec.hidden_layers = get<std::size_t>(m, "model", "hidden_layers");
    c.model.spec.embed_width = get<std::size_t>(m, "model", "embed_width");
    c.model.spec.max_frequency = get<double>(m, "model", "max_frequency");
    try {
        c.model.spec.activation = ad::parse_activation(get<std::string>(m, "model", "activation"));
    } catch (const std::invalid_argument&) {
        throw ConfigError("config: field 'model.activation' is not a known activation");
    }
    c.model.spec.learn_pair_weights = get<bool>(m, "model", "learn_pair_weights");
    c.model.spec.ordering = get<std::vector<std::size_t>>(m, "model", "ordering");
    c.model.vnet = get<bool>(m, "model", "vnet");
    c.model.vnet_hidden = get<std::size_t>(m, "model", "vnet_hidden");
    c.model.use_bt = get<bool>(m, "model", "use_bt");
    c.model.bt_scale = get<double>(m, "model", "bt_scale");
    try {
        c.model.spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: model: ") + e.what());
    }

    const json& o = j.at("objective");
    c.objective = get<std::string>(o, "objective", "kind");
    require(c.objective == "gm" || c.objective == "ot" || c.objective == "soc", "objective.kind", "must be gm, ot or soc");
    c.ot.kinetic_weight = get<double>(o, "objective", "kinetic_weight");
    c.entropy_weight = get<double>(o, "objective", "entropy_weight");
    c.obstacle_weight = get<double>(o, "objective", "obstacle_weight");
    c.control_sigma = get<double>(o, "objective", "control_sigma");
    c.ot.jac_sym_weight = get<double>(o, "objective", "jac_sym_weight");
    c.ot.jac_sym_probes = get<std::size_t>(o, "objective", "jac_sym_probes");
    c.ot.n_mc = get<std::size_t>(o, "objective", "n_mc");
    require(c.ot.kinetic_weight >= 0, "objective.kinetic_weight", "must be >= 0");
    require(c.entropy_weight >= 0, "objective.entropy_weight", "must be >= 0");
    require(c.obstacle_weight >= 0, "objective.obstacle_weight", "must be >= 0");
    require(c.control_sigma > 0, "objective.control_sigma", "must be > 0");
    require(c.ot.jac_sym_weight >= 0, "objective.jac_sym_weight", "must be >= 0");
    require(c.ot.n_mc >= 1, "objective.n_mc", "must be >= 1");

    const json& op = j.at("optimizer");
    c.optimizer.lr = get<double>(op, "optimizer", "lr");
    c.optimizer.epochs = get<long>(op, "optimizer", "epochs");
    c.optimizer.steps = get<long>(op, "optimizer", "steps");
    c.optimizer.batch_size = get<std::size_t>(op, "optimizer", "batch_size");
    c.optimizer.schedule = get<std::string>(op, "optimizer", "schedule");
    require(c.optimizer.lr >= 0, "optimizer.lr", "must be >= 0");
    require(c.optimizer.steps >= 1 || c.optimizer.epochs >= 1, "optimizer.steps", "must be >= 1 (or epochs >= 1)");
    require(c.optimizer.steps >= 0, "optimizer.steps", "must be >= 0");
    require(c.optimizer.batch_size >= 1, "optimizer.batch_size", "must be >= 1");
    require(c.optimizer.schedule == "cosine" || c.optimizer.schedule == "constant", "optimizer.schedule",
            "must be cosine or constant");

    const json& s = j.at("soc");
    c.soc.endpoint_iters = get<long>(s, "soc", "endpoint_iters");
    c.soc.control_iters = get<long>(s, "soc", "control_iters");
    c.soc.running_iters = get<long>(s, "soc", "running_iters");
    c.soc.single_stage = get<bool>(s, "soc", "single_stage");
    c.soc.single_stage_iters = c.soc.endpoint_iters + c.soc.control_iters + c.soc.running_iters;
    c.soc_batch = get<std::size_t>(s, "soc", "batch_size");
    require(c.soc.endpoint_iters >= 0 && c.soc.control_iters >= 0 && c.soc.running_iters >= 0, "soc",
            "iteration budgets must be >= 0");
    require(c.soc_batch >= 1, "soc.batch_size", "must be >= 1");

    c.volatility.start = get<double>(j.at("volatility"), "volatility", "start");
    c.volatility.end = get<double>(j.at("volatility"), "volatility", "end");
    require(c.volatility.start >= 0 && c.volatility.end >= 0, "volatility", "must be >= 0");

    const json& d = j.at("dataset");
    c.dataset.kind = get<std::string>(d, "dataset", "kind");
    require(c.dataset.kind == "pinwheel" || c.dataset.kind == "snapshots" || c.dataset.kind == "csv" ||
                c.dataset.kind == "obstacles",
            "dataset.kind", "must be pinwheel, snapshots, csv or obstacles");
    c.dataset.path = get<std::string>(d, "dataset", "path");
    c.dataset.pinwheel.n = get<std::size_t>(d, "dataset", "n");
    c.dataset.pinwheel.arms = get<std::size_t>(d, "dataset", "arms");
    c.dataset.pinwheel.rotation_rate = get<double>(d, "dataset", "rotation_rate");
    c.dataset.pinwheel.noise = get<double>(d, "dataset", "noise");
    c.dataset.dim = get<std::size_t>(d, "dataset", "dim");
    c.dataset.snapshot_std = get<double>(d, "dataset", "snapshot_std");
    c.dataset.n_train = get<std::size_t>(d, "dataset", "n_train");
    c.dataset.n_test = get<std::size_t>(d, "dataset", "n_test");
    c.dataset.obstacles.n_obstacles = get<std::size_t>(d, "dataset", "n_obstacles");
    c.dataset.obstacles.radius_lo = get<double>(d, "dataset", "radius_lo");
    c.dataset.obstacles.radius_hi = get<double>(d, "dataset", "radius_hi");
    c.dataset.seed = get<unsigned>(d, "dataset", "seed");
    require(c.dataset.kind != "csv" || !c.dataset.path.empty(), "dataset.path", "is required for csv datasets");
    require(c.dataset.kind != "pinwheel" || c.dataset.pinwheel.arms >= 2, "dataset.arms", "must be >= 2");
    require(c.dataset.kind != "pinwheel" || c.model.spec.dim == 2, "model.dim", "must be 2 for pinwheel data");
    require(c.dataset.kind != "obstacles" || c.model.spec.dim == 2, "model.dim", "must be 2 for obstacle arenas");
    require(c.dataset.kind != "snapshots" || c.model.spec.dim == c.dataset.dim, "model.dim",
            "must equal dataset.dim for snapshots");
    require(c.objective != "soc" || c.dataset.kind == "obstacles", "dataset.kind", "must be obstacles for soc");
    require(c.objective != "ot" || c.dataset.kind == "snapshots", "dataset.kind", "must be snapshots for ot");

    const json& e = j.at("eval");
    c.evaluation.runs = get<std::size_t>(e, "eval", "runs");
    c.evaluation.samples = get<std::size_t>(e, "eval", "samples");
    c.evaluation.steps = get<std::size_t>(e, "eval", "steps");
    require(c.evaluation.runs >= 1 && c.evaluation.samples >= 1 && c.evaluation.steps >= 1, "eval",
            "runs, samples and steps must be >= 1");

    const json& g = j.at("diagnostics");
    c.diagnostics.points = get<std::size_t>(g, "diagnostics", "points");
    c.diagnostics.tol.continuity = get<double>(g, "diagnostics", "continuity");
    c.diagnostics.tol.divergence = get<double>(g, "diagnostics", "divergence");
    c.diagnostics.tol.normalization = get<double>(g, "diagnostics", "normalization");
    c.diagnostics.tol.farfield = get<double>(g, "diagnostics", "farfield");

    c.seed = get<unsigned>(j, "", "seed");
    c.diagnostics.seed = c.seed;
    c.output_dir = get<std::string>(j, "", "output_dir");
    c.checkpoint_every = get<long>(j, "", "checkpoint_every");
    c.keep_checkpoints = get<std::size_t>(j, "", "keep_checkpoints");
    c.log_every = get<long>(j, "", "log_every");
    require(c.checkpoint_every >= 1, "checkpoint_every", "must be >= 1");
    require(c.keep_checkpoints >= 1, "keep_checkpoints", "must be >= 1");
    require(c.log_every >= 1, "log_every", "must be >= 1");
    return c;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
    return j;
}

/// Defaults <- file <- overrides, then typed validation.
inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    json cfg = default_config();
    if (!path.empty()) merge_checked(cfg, read_json_file(path));
    for (const auto& o : overrides) apply_override(cfg, o);
    try {
        return parse_config(cfg);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace consflow::cli
