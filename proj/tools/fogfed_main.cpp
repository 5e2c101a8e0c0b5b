// fogfed: run edge/fog/cloud federated training simulations.
//
//   fogfed simulate [--config PATH] [--fogs K] [--rounds R] ... [--out DIR]
//   fogfed gen-data --n N --seed S --sigma X --out PATH
//   fogfed eval --model PATH --data PATH

#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fogfed/cli.hpp"
#include "fogfed/error.hpp"

namespace {

struct SimulateFlags {
    std::optional<std::string> config;
    // (key, value) in the key namespace of cli::apply_setting.
    std::vector<std::pair<std::string, std::optional<std::string>>> settings;
    bool log_transport = false;
};

void add_setting(CLI::App* cmd, SimulateFlags& flags, const std::string& key, const std::string& help) {
    auto& slot = flags.settings.emplace_back(key, std::nullopt);
    cmd->add_option("--" + key, slot.second, help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fog-enabled federated learning simulator"};
    app.require_subcommand(1);

    SimulateFlags sim_flags;
    sim_flags.settings.reserve(16);
    auto* simulate = app.add_subcommand("simulate", "Run a federated training simulation");
    simulate->add_option("--config", sim_flags.config, "key=value config file (flags override it)");
    add_setting(simulate, sim_flags, "fogs", "Number of fog nodes");
    add_setting(simulate, sim_flags, "edges", "Edge devices per fog");
    add_setting(simulate, sim_flags, "rounds", "Round budget");
    add_setting(simulate, sim_flags, "window", "Frames per online-training window");
    add_setting(simulate, sim_flags, "epochs", "Local epochs per round");
    add_setting(simulate, sim_flags, "lr", "Adam learning rate");
    add_setting(simulate, sim_flags, "batch", "Mini-batch size");
    add_setting(simulate, sim_flags, "seed", "Run seed (falls back to FOGFED_SEED)");
    add_setting(simulate, sim_flags, "threads", "Worker threads for fog training");
    add_setting(simulate, sim_flags, "train", "Training set (.csv or raw-f32)");
    add_setting(simulate, sim_flags, "test", "Held-out test set (.csv or raw-f32)");
    add_setting(simulate, sim_flags, "synth", "Synthetic data N,SIGMA instead of files");
    add_setting(simulate, sim_flags, "out", "Output directory");
    add_setting(simulate, sim_flags, "emit", "csv, json or both");
    simulate->add_flag("--log-transport", sim_flags.log_transport, "Write transport.csv");

    std::size_t gen_n = 16000;
    std::uint64_t gen_seed = 0;
    double gen_sigma = 0.05;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic data set in raw-f32 format");
    gen->add_option("--n", gen_n, "Frame count");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--sigma", gen_sigma, "Noise standard deviation");
    gen->add_option("--out", gen_out, "Output file")->required();

    std::string eval_model;
    std::string eval_data;
    auto* eval = app.add_subcommand("eval", "Evaluate a saved global model");
    eval->add_option("--model", eval_model, "GlobalModel frame written by simulate")->required();
    eval->add_option("--data", eval_data, "Data set (.csv or raw-f32)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : fogfed::cli::kConfigError;
    }

    if (*simulate) {
        fogfed::cli::RunConfig config;
        try {
            if (sim_flags.config) fogfed::cli::apply_config_file(config, *sim_flags.config);
            for (const auto& [key, value] : sim_flags.settings) {
                if (value) fogfed::cli::apply_setting(config, key, *value);
            }
            if (sim_flags.log_transport) config.log_transport = true;
            fogfed::cli::finalize(config);
        } catch (const fogfed::Error& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return fogfed::cli::kConfigError;
        }
        return fogfed::cli::cmd_simulate(config, std::cout, std::cerr);
    }
    if (*gen) return fogfed::cli::cmd_gen_data(gen_n, gen_seed, gen_sigma, gen_out, std::cout, std::cerr);
    return fogfed::cli::cmd_eval(eval_model, eval_data, std::cout, std::cerr);
}
