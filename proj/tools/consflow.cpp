#include "consflow/cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace cli = consflow::cli;

int main(int argc, char** argv) {
    CLI::App app{"consflow: conservation-law density and flux models"};
    app.require_subcommand(1);

    std::string config, out, checkpoint, kind = "density", samples_out = "samples.csv";
    std::vector<std::string> overrides;
    unsigned seed = 0;
    bool seed_given = false;
    double t = 1.0;
    std::size_t n = 1000;
    cli::PlotOptions po;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "JSON config file (defaults when omitted)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "random seed")->each([&](const std::string&) { seed_given = true; });
        sub->add_option("--out", out, "output directory");
        sub->add_option("--override", overrides, "key.path=value (repeatable)");
    };
    auto* train = app.add_subcommand("train", "fit a model");
    common(train);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    common(eval);
    auto* sample = app.add_subcommand("sample", "draw samples from rho_t");
    common(sample);
    sample->add_option("-t,--time", t, "time in [0,1]");
    sample->add_option("-n,--count", n, "number of samples");
    auto* diagnose = app.add_subcommand("diagnose", "numerical checks on a checkpoint");
    common(diagnose);
    auto* plot = app.add_subcommand("plot", "SVG figures");
    common(plot);
    plot->add_option("--kind", kind, "density|trajectories|farfield|soc-paths");
    plot->add_option("--axis-x", po.axis_x, "first plotted coordinate");
    plot->add_option("--axis-y", po.axis_y, "second plotted coordinate");
    for (auto* sub : {eval, sample, diagnose, plot}) {
        sub->add_option("checkpoint", checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kConfigError;
    }

    try {
        if (seed_given) overrides.push_back("seed=" + std::to_string(seed));
        if (train->parsed()) {
            if (!out.empty()) overrides.push_back("output_dir=" + nlohmann::json(out).dump());
            return cli::cmd_train(cli::load_config(config, overrides));
        }
        if (!config.empty()) {
            // applied on top of the checkpoint's own config, before --override
            std::vector<std::string> from_file;
            cli::flatten_overrides(cli::read_json_file(config), from_file);
            overrides.insert(overrides.begin(), from_file.begin(), from_file.end());
        }
        if (eval->parsed()) return cli::cmd_eval(checkpoint, overrides, out);
        if (sample->parsed()) {
            const std::string path = out.empty() ? samples_out : (std::filesystem::path(out) / samples_out).string();
            if (!out.empty()) std::filesystem::create_directories(out);
            return cli::cmd_sample(checkpoint, t, n, seed, path);
        }
        if (diagnose->parsed()) return cli::cmd_diagnose(checkpoint, overrides, out);
        if (plot->parsed()) return cli::cmd_plot(checkpoint, kind, overrides, out, po);
    } catch (const cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cli::kConfigError;
    } catch (const cli::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return cli::kNumericalFailure;
    } catch (const std::range_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return cli::kNumericalFailure;
    } catch (const std::domain_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return cli::kNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::kConfigError;
    }
    return cli::kOk;
}
