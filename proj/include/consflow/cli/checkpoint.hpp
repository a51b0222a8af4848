#pragma once

/// @file checkpoint.hpp
/// @brief Model construction from config and JSON checkpoints.

#include "consflow/cli/config.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <string>

namespace consflow::cli {

inline constexpr int kCheckpointFormat = 1;

/// Parameters plus the assembly built over them.
struct ModelBundle {
    ad::ParameterStore store;
    conservation::FluxAssembly assembly;
};

inline void build_model(ModelBundle& b, const ModelConfig& mc, const conservation::VolatilitySchedule& g,
                        unsigned seed) {
    std::mt19937_64 rng(seed);
    b.assembly.model = density::DensityModel(b.store, mc.spec, rng);
    if (mc.vnet) {
        b.assembly.vnet.emplace(b.store, mc.spec.dim, mc.vnet_hidden, 2, std::min<std::size_t>(mc.spec.embed_width, 32),
                                mc.spec.max_frequency, mc.spec.activation, rng);
    }
    b.assembly.options.use_bt = mc.use_bt;
    b.assembly.options.bt_scale = mc.bt_scale;
    b.assembly.options.volatility = g;
}

inline json checkpoint_json(const ModelBundle& b, const json& config_echo) {
    json j;
    j["format_version"] = kCheckpointFormat;
    const auto& spec = b.assembly.model.spec();
    j["model_kind"] = density::to_string(spec.kind);
    j["mixture"] = {{"L", spec.mixture_size}, {"K", spec.components()}, {"dim", spec.dim}};
    j["step"] = b.store.step();
    j["config"] = config_echo;
    json params = json::object();
    for (const auto& p : b.store.parameters()) {
        params[p.name] = {{"shape", {p.shape.rows, p.shape.cols}}, {"values", p.value}};
    }
    j["parameters"] = params;
    return j;
}

inline void write_json(const json& j, const std::filesystem::path& path) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << std::setprecision(17) << j.dump();
    }
    std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const ModelBundle& b, const json& config_echo, const std::filesystem::path& path) {
    write_json(checkpoint_json(b, config_echo), path);
}

/// Rebuilds the model from the checkpoint's config echo (plus overrides, e.g. ablation
/// flags or tolerances) and restores every parameter.
inline RunConfig load_checkpoint(const std::string& path, ModelBundle& b,
                                 const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("format_version")) throw ConfigError("not a checkpoint file: " + path);
    if (j["format_version"].get<int>() != kCheckpointFormat) {
        throw ConfigError("unsupported checkpoint format " + j["format_version"].dump());
    }
    json cfg = default_config();
    merge_checked(cfg, j.at("config"));
    for (const auto& o : overrides) apply_override(cfg, o);
    RunConfig rc = parse_config(cfg);
    b = ModelBundle{};
    if (density::to_string(rc.model.spec.kind) != j.at("model_kind").get<std::string>()) {
        throw ConfigError("checkpoint model kind does not match its config");
    }
    build_model(b, rc.model, rc.volatility, rc.seed);
    const json& params = j.at("parameters");
    for (auto& p : b.store.parameters()) {
        if (!params.contains(p.name)) throw ConfigError("checkpoint is missing parameter " + p.name);
        const auto shape = params[p.name].at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2 || shape[0] != p.shape.rows || shape[1] != p.shape.cols) {
            throw ConfigError("checkpoint parameter " + p.name + " has the wrong shape");
        }
        p.value = params[p.name].at("values").get<std::vector<double>>();
        if (p.value.size() != p.shape.size()) throw ConfigError("checkpoint parameter " + p.name + " has the wrong size");
    }
    if (params.size() != b.store.parameters().size()) throw ConfigError("checkpoint has unexpected parameters");
    b.store.set_step(j.value("step", 0L));
    return rc;
}

}  // namespace consflow::cli
