#include "fogfed/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ostream>

#include <nlohmann/json.hpp>

#include "fogfed/error.hpp"
#include "fogfed/io.hpp"
#include "fogfed/protocol.hpp"
#include "fogfed/rng.hpp"

namespace fogfed::cli {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc{} || end != value.data() + value.size()) {
        throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
    }
    return out;
}

std::size_t parse_count(std::string_view key, std::string_view value) {
    const auto n = parse_number<long long>(key, value);
    if (n < 0) throw ConfigError(std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(n);
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(value) + "'");
}

std::string fmt6(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace

void RunConfig::validate() const {
    const bool has_files = train_path.has_value() || test_path.has_value();
    if (has_files && synth.has_value()) {
        throw ConfigError("give either --train/--test or --synth, not both");
    }
    if (has_files && !(train_path && test_path)) {
        throw ConfigError("--train and --test must be given together");
    }
    if (!has_files && !synth) throw ConfigError("no data source configured");
    if (!emit_csv && !emit_json) throw ConfigError("nothing to emit");
    topology.validate();
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    auto& topo = config.topology;
    if (key == "fogs") {
        topo.num_fogs = parse_count(key, value);
    } else if (key == "edges") {
        topo.edges_per_fog = parse_count(key, value);
    } else if (key == "rounds") {
        topo.rounds = parse_count(key, value);
    } else if (key == "window") {
        topo.window_size = parse_count(key, value);
    } else if (key == "epochs") {
        topo.hyper.local_epochs = static_cast<int>(parse_count(key, value));
    } else if (key == "batch") {
        topo.hyper.batch_size = static_cast<int>(parse_count(key, value));
    } else if (key == "lr") {
        topo.hyper.learning_rate = parse_number<double>(key, value);
    } else if (key == "threads") {
        topo.threads = parse_count(key, value);
    } else if (key == "seed") {
        topo.seed = parse_number<std::uint64_t>(key, value);
        config.seed_set = true;
    } else if (key == "train") {
        config.train_path = std::filesystem::path(value);
    } else if (key == "test") {
        config.test_path = std::filesystem::path(value);
    } else if (key == "synth") {
        const auto comma = value.find(',');
        if (comma == std::string_view::npos) throw ConfigError("--synth expects N,SIGMA");
        data::SynthSpec spec;
        spec.count = parse_count(key, trim(value.substr(0, comma)));
        spec.noise_sigma = parse_number<double>(key, trim(value.substr(comma + 1)));
        if (spec.count < 1 || spec.noise_sigma < 0.0) {
            throw ConfigError("--synth needs N >= 1 and SIGMA >= 0");
        }
        config.synth = spec;
    } else if (key == "out") {
        config.output_dir = std::filesystem::path(value);
    } else if (key == "emit") {
        if (value == "csv") {
            config.emit_csv = true;
            config.emit_json = false;
        } else if (value == "json") {
            config.emit_csv = false;
            config.emit_json = true;
        } else if (value == "both") {
            config.emit_csv = config.emit_json = true;
        } else {
            throw ConfigError("--emit expects csv, json or both");
        }
    } else if (key == "log-transport" || key == "log_transport") {
        config.log_transport = parse_bool(key, value);
    } else {
        throw ConfigError("unknown setting '" + std::string(key) + "'");
    }
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
        }
        try {
            apply_setting(config, line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = io::read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    apply_config_text(config, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                      path.string());
}

void apply_seed_env(RunConfig& config) {
    if (config.seed_set) return;
    if (const char* env = std::getenv("FOGFED_SEED"); env != nullptr && *env != '\0') {
        apply_setting(config, "seed", env);
    }
}

void finalize(RunConfig& config) {
    apply_seed_env(config);
    if (!config.train_path && !config.test_path && !config.synth) config.synth = data::SynthSpec{};
}

std::pair<data::Dataset, data::Dataset> load_datasets(const RunConfig& config) {
    if (config.synth) {
        const auto& spec = *config.synth;
        const std::uint64_t seed = config.topology.seed;
        auto train = data::synth_generate(spec.count, hash_seed(seed, 0x747261696eULL), spec.noise_sigma);
        auto test = data::synth_generate(std::max<std::size_t>(1, spec.count / 10),
                                         hash_seed(seed, 0x74657374ULL), spec.noise_sigma);
        return {std::move(train), std::move(test)};
    }
    return {data::load(*config.train_path, data::format_for_path(*config.train_path)),
            data::load(*config.test_path, data::format_for_path(*config.test_path))};
}

std::string metrics_csv(const std::vector<sim::RoundReport>& reports, std::size_t num_fogs) {
    std::string out = "round,global_test_loss,global_test_accuracy";
    for (std::size_t i = 0; i < num_fogs; ++i) out += ",fog_" + std::to_string(i);
    out += '\n';
    for (const auto& r : reports) {
        out += std::to_string(r.round_id) + ',' + fmt6(r.global_test_loss) + ',' +
               fmt6(r.global_test_accuracy);
        for (double acc : r.per_fog_local_accuracy) out += ',' + fmt6(acc);
        out += '\n';
    }
    return out;
}

std::string metrics_json(const RunConfig& config, const std::vector<sim::RoundReport>& reports) {
    using nlohmann::json;
    const auto& topo = config.topology;
    json doc;
    doc["config"] = {
        {"fogs", topo.num_fogs},
        {"rounds", topo.rounds},
        {"window", topo.window_size},
        {"epochs", topo.hyper.local_epochs},
        {"batch", topo.hyper.batch_size},
        {"lr", topo.hyper.learning_rate},
        {"seed", topo.seed},
    };
    json rounds = json::array();
    for (const auto& r : reports) {
        rounds.push_back({
            {"round", r.round_id},
            {"global_test_loss", r.global_test_loss},
            {"global_test_accuracy", r.global_test_accuracy},
            {"per_fog_local_accuracy", r.per_fog_local_accuracy},
            {"per_fog_local_loss", r.per_fog_local_loss},
            {"per_fog_train_loss", r.per_fog_train_loss},
        });
    }
    doc["rounds"] = std::move(rounds);
    return doc.dump(2) + "\n";
}

std::string transport_csv(const std::vector<sim::TransportRecord>& log) {
    std::string out = "round,sender,receiver,msg_type,byte_len\n";
    for (const auto& rec : log) {
        out += std::to_string(rec.round_id) + ',' + rec.sender.name() + ',' + rec.receiver.name() + ',' +
               std::to_string(static_cast<int>(rec.msg_type)) + ',' + std::to_string(rec.byte_len) + '\n';
    }
    return out;
}

int cmd_simulate(const RunConfig& config, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    try {
        config.validate();
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }

    std::pair<data::Dataset, data::Dataset> datasets;
    try {
        datasets = load_datasets(config);
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }

    std::optional<sim::Simulation> simulation;
    try {
        simulation.emplace(sim::Simulation::build(config.topology, datasets.first, datasets.second));
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }
    simulation->transport().set_logging(config.log_transport);

    std::vector<sim::RoundReport> reports;
    try {
        reports = simulation->run();
    } catch (const Error& e) {
        err << "runtime error: " << e.what() << '\n';
        return kRuntimeError;
    }

    try {
        std::filesystem::create_directories(config.output_dir);
        if (config.emit_csv) {
            io::write_file_atomic(config.output_dir / "metrics.csv",
                                  metrics_csv(reports, config.topology.num_fogs));
        }
        if (config.emit_json) {
            io::write_file_atomic(config.output_dir / "metrics.json", metrics_json(config, reports));
        }
        io::write_file_atomic(config.output_dir / "model.ffl", proto::encode(simulation->cloud().global));
        if (config.log_transport) {
            io::write_file_atomic(config.output_dir / "transport.csv",
                                  transport_csv(simulation->transport().log()));
        }
    } catch (const std::exception& e) {
        err << "io error: " << e.what() << '\n';
        return kDataError;
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const double final_acc = reports.empty() ? 0.0 : reports.back().global_test_accuracy;
    out << "final_accuracy=" << fmt6(final_acc) << " rounds=" << reports.size()
        << " wall_time_s=" << fmt6(wall) << '\n';
    return kOk;
}

int cmd_gen_data(std::size_t n, std::uint64_t seed, double sigma, const std::filesystem::path& out_path,
                 std::ostream& out, std::ostream& err) {
    data::Dataset dataset;
    try {
        dataset = data::synth_generate(n, seed, sigma);
    } catch (const Error& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    try {
        data::save(dataset, out_path, data::Format::RawF32);
    } catch (const Error& e) {
        err << "io error: " << e.what() << '\n';
        return kDataError;
    }
    out << "wrote " << n << " frames to " << out_path.string() << '\n';
    return kOk;
}

int cmd_eval(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
             std::ostream& out, std::ostream& err) {
    std::vector<std::uint8_t> bytes;
    data::Dataset dataset;
    try {
        bytes = io::read_file(model_path);
        dataset = data::load(data_path, data::format_for_path(data_path));
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    }

    try {
        const auto msg = proto::decode(bytes);
        const auto* model = std::get_if<proto::GlobalModel>(&msg);
        if (model == nullptr) throw ProtocolError("model file does not hold a GlobalModel frame");
        if (dataset.empty()) throw InvalidArgument("evaluation data set is empty");
        const auto result = nn::evaluate(model->params, dataset.frames);
        nlohmann::json doc = {{"loss", result.loss}, {"accuracy", result.accuracy}};
        out << doc.dump() << '\n';
    } catch (const Error& e) {
        err << "runtime error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

}  // namespace fogfed::cli
