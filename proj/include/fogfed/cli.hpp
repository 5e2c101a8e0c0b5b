#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fogfed/data.hpp"
#include "fogfed/topology.hpp"

namespace fogfed::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,
    kDataError = 3,
    kRuntimeError = 4,
};

struct RunConfig {
    sim::TopologyConfig topology;
    std::optional<std::filesystem::path> train_path;
    std::optional<std::filesystem::path> test_path;
    std::optional<data::SynthSpec> synth;
    std::filesystem::path output_dir = "out";
    bool emit_csv = true;
    bool emit_json = false;
    bool log_transport = false;
    bool seed_set = false;

    // Throws ConfigError unless exactly one data source is configured.
    void validate() const;
};

// Applies one `key=value` setting. Keys mirror the long flag names
// (fogs, rounds, window, epochs, lr, batch, seed, train, test, synth, out,
// emit, log-transport, threads, edges). Throws ConfigError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Flat key=value file; '#' starts a comment, blank lines are ignored.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

// Uses FOGFED_SEED when no seed was set by file or flag.
void apply_seed_env(RunConfig& config);

// Environment seed fallback, then the default synthetic data source
// (16000 frames, sigma 0.05) when no data source was given.
void finalize(RunConfig& config);

// Training and held-out sets for a run: loaded from files, or generated. The
// synthetic held-out set has a tenth as many frames as the training set.
std::pair<data::Dataset, data::Dataset> load_datasets(const RunConfig& config);

std::string metrics_csv(const std::vector<sim::RoundReport>& reports, std::size_t num_fogs);
std::string metrics_json(const RunConfig& config, const std::vector<sim::RoundReport>& reports);
std::string transport_csv(const std::vector<sim::TransportRecord>& log);

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_gen_data(std::size_t n, std::uint64_t seed, double sigma,
                 const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);
int cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
             std::ostream& out, std::ostream& err);

}  // namespace fogfed::cli
