#pragma once

/// @file data.hpp
/// @brief Dataset materialization from a RunConfig.

#include "consflow/cli/config.hpp"

#include <random>
#include <vector>

namespace consflow::cli {

struct LoadedData {
    datasets::EventTable events;            ///< pinwheel / csv
    objectives::SnapshotDataset snapshots;  ///< snapshots
    objectives::SocEnvironment env;         ///< obstacles
};

inline LoadedData load_data(const RunConfig& c) {
    LoadedData d;
    const auto& ds = c.dataset;
    try {
        if (ds.kind == "pinwheel") {
            d.events = datasets::gen_pinwheel(ds.pinwheel, ds.seed);
        } else if (ds.kind == "csv") {
            d.events = datasets::load_events_csv(ds.path, ds.seed);
            if (d.events.dim != c.model.spec.dim) {
                throw ConfigError("dataset dimension " + std::to_string(d.events.dim) + " does not match model.dim " +
                                  std::to_string(c.model.spec.dim));
            }
        } else if (ds.kind == "snapshots") {
            d.snapshots = datasets::gen_snapshots(datasets::default_snapshot_spec(ds.dim, ds.snapshot_std), ds.n_train,
                                                  ds.n_test, ds.seed);
        } else {
            d.env = datasets::gen_obstacle_env(ds.obstacles, ds.seed);
            d.env.entropy_weight = c.entropy_weight;
            d.env.obstacle_weight = c.obstacle_weight;
            d.env.control_sigma = c.control_sigma;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
    }
    return d;
}

/// n draws from an isotropic planar Gaussian, row-major [n, 2].
inline std::vector<double> draw_endpoint(const objectives::GaussianEndpoint& q, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> N(0.0, 1.0);
    std::vector<double> out(2 * n);
    for (std::size_t r = 0; r < n; ++r) {
        out[2 * r] = q.mx + q.std * N(rng);
        out[2 * r + 1] = q.my + q.std * N(rng);
    }
    return out;
}

}  // namespace consflow::cli
