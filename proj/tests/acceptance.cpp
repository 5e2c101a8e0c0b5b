// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any gated criterion fails.
//
// The real-radar reproduction (criterion 6) runs only when FOGFED_FMCW_TRAIN
// and FOGFED_FMCW_TEST point at converted data files; otherwise it is
// reported as SKIP.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fogfed/cli.hpp"
#include "fogfed/data.hpp"
#include "fogfed/error.hpp"
#include "fogfed/io.hpp"
#include "fogfed/nn.hpp"
#include "fogfed/protocol.hpp"
#include "fogfed/topology.hpp"
#include "oracles.hpp"

using namespace fogfed;

namespace {

struct Outcome {
    enum class Status { Pass, Fail, Skip } status;
    std::string detail;
};

Outcome pass(std::string detail) { return {Outcome::Status::Pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Status::Fail, std::move(detail)}; }
Outcome check(bool ok, std::string detail) { return ok ? pass(std::move(detail)) : fail(std::move(detail)); }

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Five fogs, 3200 frames each, 60-frame windows, 53 rounds.
cli::RunConfig desk_run_config() {
    cli::RunConfig rc;
    rc.synth = data::SynthSpec{16000, 0.05};
    rc.topology.num_fogs = 5;
    rc.topology.window_size = 60;
    rc.topology.rounds = 53;
    rc.topology.hyper.local_epochs = 5;
    rc.topology.hyper.learning_rate = 0.001;
    rc.topology.seed = 2024;
    return rc;
}

struct DeskResult {
    std::vector<sim::RoundReport> reports;
    std::vector<sim::TransportRecord> log;
    double wall_s = 0.0;
};

const DeskResult& desk_result() {
    static const DeskResult result = [] {
        const auto rc = desk_run_config();
        const auto start = std::chrono::steady_clock::now();
        const auto [train, test] = cli::load_datasets(rc);
        auto simulation = sim::Simulation::build(rc.topology, train, test);
        simulation.transport().set_logging(true);
        DeskResult r;
        r.reports = simulation.run();
        r.wall_s = seconds_since(start);
        r.log = simulation.transport().log();
        return r;
    }();
    return result;
}

// 1
Outcome gradient_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 gen(20240601);
    double worst = 0.0;
    std::size_t entries = 0;
    std::size_t redrawn = 0;
    for (int instance = 0; instance < 50; ++instance) {
        const nn::Dims dims{1 + gen() % 8, 1 + gen() % 6, 2 + gen() % 3};
        const std::size_t batch = 1 + gen() % 5;
        const auto params = oracle::random_params<double>(dims, gen);
        const auto x = oracle::random_rows(batch, dims.input, gen);
        const auto labels = oracle::random_labels(batch, static_cast<int>(dims.output), gen);
        const auto cache = nn::forward(params, oracle::to_matrix(x));
        // A step of h moves a pre-activation by at most h * (1 + input_dim);
        // closer than that to the ReLU kink the central difference is not a
        // derivative estimate at all, so draw again.
        const double margin = 1e-4 * static_cast<double>(1 + dims.input);
        if (std::ranges::any_of(cache.hidden_pre.data, [&](double v) { return std::abs(v) < margin; })) {
            ++redrawn;
            --instance;
            continue;
        }
        const auto analytic = nn::backward(params, cache, labels);
        const auto numeric = oracle::fd_gradient(params, x, labels, 1e-4);
        const auto a = analytic.arrays();
        const auto n = numeric.arrays();
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t i = 0; i < a[t].size(); ++i) {
                worst = std::max(worst, oracle::relative_error(a[t][i], n[t][i]));
                ++entries;
            }
        }
    }
    const double elapsed = seconds_since(start);
    return check(worst <= 1e-4 && elapsed < 10.0,
                 fmt("50 instances (%zu redrawn at ReLU kink), %zu entries, max rel err %.3g (<= 1e-4), %.2f s (< 10 s)",
                     redrawn, entries, worst, elapsed));
}

// 2
Outcome aggregation_properties() {
    std::mt19937_64 gen(77);
    std::size_t failures = 0;
    double worst_oracle = 0.0, worst_perm = 0.0, worst_scale = 0.0;
    const int cases = 200;
    for (int trial = 0; trial < cases; ++trial) {
        const nn::Dims dims{1 + gen() % 5, 1 + gen() % 4, 1 + gen() % 3};
        const std::size_t k = 1 + gen() % 6;
        std::vector<proto::ModelUpdate> updates;
        for (std::size_t i = 0; i < k; ++i) {
            updates.push_back({3, static_cast<std::uint32_t>(i), 1 + gen() % 1000, 0.0f,
                               oracle::random_params<float>(dims, gen, 5.0)});
        }
        const auto out = proto::aggregate(updates);

        // single-update identity, k-identical identity
        if (!(proto::aggregate(std::span(updates).first(1)) == updates[0].params)) ++failures;
        auto same = updates;
        for (auto& u : same) u.params = updates[0].params;
        if (!(proto::aggregate(same) == updates[0].params)) ++failures;

        auto shuffled = updates;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        auto scaled = updates;
        const std::uint64_t factor = 1 + gen() % 50;
        for (auto& u : scaled) u.sample_count *= factor;
        const auto perm = proto::aggregate(shuffled);
        const auto scale = proto::aggregate(scaled);

        const auto o = out.arrays();
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t e = 0; e < o[t].size(); ++e) {
                std::vector<double> values;
                std::vector<std::uint64_t> counts;
                double lo = INFINITY, hi = -INFINITY;
                for (const auto& u : updates) {
                    const double v = u.params.arrays()[t][e];
                    values.push_back(v);
                    counts.push_back(u.sample_count);
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (o[t][e] < lo || o[t][e] > hi) ++failures;
                // Result is a float; the oracle is the exact double mean.
                const double expected = oracle::weighted_mean(values, counts);
                worst_oracle = std::max(worst_oracle, std::abs(o[t][e] - expected) / std::max(1.0, std::abs(expected)));
                worst_perm = std::max(worst_perm, static_cast<double>(std::abs(o[t][e] - perm.arrays()[t][e])));
                worst_scale = std::max(worst_scale, static_cast<double>(std::abs(o[t][e] - scale.arrays()[t][e])));
            }
        }
    }
    // Hand-computed cases.
    auto scalar = [](float w) {
        auto p = nn::ModelParams::zeros({1, 1, 1});
        p.w1.data[0] = w;
        return p;
    };
    const std::vector<proto::ModelUpdate> equal{{1, 0, 60, 0, scalar(2)}, {1, 1, 60, 0, scalar(4)}};
    const std::vector<proto::ModelUpdate> weighted{{1, 0, 20, 0, scalar(0)}, {1, 1, 60, 0, scalar(4)}};
    if (proto::aggregate(equal).w1.data[0] != 3.0f) ++failures;
    if (proto::aggregate(weighted).w1.data[0] != 3.0f) ++failures;

    // float rounding of the output bounds the oracle gap at one float ulp.
    const bool ok = failures == 0 && worst_oracle <= 1e-6 && worst_perm <= 1e-9 && worst_scale <= 1e-9;
    return check(ok, fmt("%d cases, %zu identity/bound failures, oracle gap %.2g, perm %.2g, scale %.2g",
                         cases, failures, worst_oracle, worst_perm, worst_scale));
}

// 3
Outcome centralized_equivalence() {
    sim::TopologyConfig config;
    config.num_fogs = 1;
    config.rounds = 10;
    config.window_size = 60;
    config.seed = 99;
    const auto train = data::synth_generate(1200, 5, 0.05);
    const auto test = data::synth_generate(200, 6, 0.05);
    auto simulation = sim::Simulation::build(config, train, test);
    const auto shard = simulation.fogs()[0].shard.frames();

    nn::ModelParams sequential = nn::init_params(config.seed, config.dims);
    for (std::uint32_t r = 0; r < 10; ++r) {
        sequential = nn::train_local(sequential, shard.subspan(r * 60, 60), config.hyper,
                                     sim::round_seed(config.seed, 0, r + 1))
                         .params;
    }
    const auto reports = simulation.run();
    const bool ok = reports.size() == 10 && simulation.cloud().global.params == sequential;
    return check(ok, fmt("%zu rounds, global model %s sequential train_local", reports.size(),
                         ok ? "bit-identical to" : "differs from"));
}

// 4
Outcome codec_conformance() {
    std::mt19937_64 gen(4040);
    std::size_t roundtrip_fail = 0;
    for (int i = 0; i < 1000; ++i) {
        const nn::Dims dims{1 + gen() % 16, 1 + gen() % 8, 1 + gen() % 8};
        proto::WireMessage msg;
        switch (i % 3) {
            case 0: msg = proto::RoundStart{static_cast<std::uint32_t>(gen()), static_cast<std::uint32_t>(gen())}; break;
            case 1:
                msg = proto::ModelUpdate{static_cast<std::uint32_t>(gen()), static_cast<std::uint32_t>(gen()),
                                         1 + gen(), static_cast<float>(gen() % 100000) * 1e-3f,
                                         oracle::random_params<float>(dims, gen, 100.0)};
                break;
            default:
                msg = proto::GlobalModel{static_cast<std::uint32_t>(gen()), oracle::random_params<float>(dims, gen)};
        }
        const auto bytes = proto::encode(msg);
        const auto back = proto::decode(bytes);
        if (!(back == msg) || proto::encode(back) != bytes) ++roundtrip_fail;
    }

    // Mutations that always invalidate a frame.
    std::size_t untyped = 0, accepted = 0;
    const auto base = proto::encode(proto::ModelUpdate{1, 2, 60, 0.5f, oracle::random_params<float>({16, 8, 8}, gen)});
    for (int i = 0; i < 1000; ++i) {
        auto bytes = base;
        switch (i % 6) {
            case 0: bytes.resize(gen() % bytes.size()); break;
            case 1: bytes[gen() % 4] ^= static_cast<std::uint8_t>(1 + gen() % 255); break;
            case 2: bytes[5] = static_cast<std::uint8_t>(4 + gen() % 252); break;
            case 3: bytes[4] = static_cast<std::uint8_t>(2 + gen() % 254); break;
            case 4: bytes.insert(bytes.end(), 1 + gen() % 64, static_cast<std::uint8_t>(gen())); break;
            default: {
                // Corrupt the declared payload length.
                const std::uint32_t delta = 1 + static_cast<std::uint32_t>(gen() % 1000);
                std::uint32_t len = bytes[10] | bytes[11] << 8 | bytes[12] << 16 | static_cast<std::uint32_t>(bytes[13]) << 24;
                len = (gen() % 2) ? len + delta : len - delta;
                for (int b = 0; b < 4; ++b) bytes[10 + b] = static_cast<std::uint8_t>(len >> (8 * b));
            }
        }
        try {
            proto::decode(bytes);
            ++accepted;
        } catch (const CodecError&) {
        } catch (...) {
            ++untyped;
        }
    }

    // Totality on arbitrary bytes, including a 1 MiB buffer.
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint8_t> bytes(i == 0 ? (1u << 20) : gen() % 4096);
        for (auto& b : bytes) b = static_cast<std::uint8_t>(gen());
        if (i % 2 == 0 && bytes.size() >= 6) {
            std::copy(proto::kMagic, proto::kMagic + 4, bytes.begin());
            bytes[4] = 1;
            bytes[5] = static_cast<std::uint8_t>(1 + i % 3);
        }
        try {
            proto::decode(bytes);
        } catch (const CodecError&) {
        } catch (...) {
            ++untyped;
        }
    }
    const bool ok = roundtrip_fail == 0 && untyped == 0 && accepted == 0;
    return check(ok, fmt("1000 roundtrips (%zu failed), 1000 mutations (%zu accepted, %zu untyped errors)",
                         roundtrip_fail, accepted, untyped));
}

// 5
Outcome desk_convergence() {
    const auto& run = desk_result();
    const auto& reports = run.reports;
    if (reports.size() != 53) return fail(fmt("%zu rounds, expected 53", reports.size()));
    auto moving = [&](std::size_t round) {
        double sum = 0.0;
        for (std::size_t r = round - 5; r < round; ++r) sum += reports[r].global_test_loss;
        return sum / 5.0;
    };
    const double acc = reports.back().global_test_accuracy;
    const double ma5 = moving(5), ma53 = moving(53);
    return check(acc >= 0.95 && ma53 < ma5 && run.wall_s < 120.0,
                 fmt("final accuracy %.4f (>= 0.95), loss MA5 round 53 %.4f < round 5 %.4f, %.1f s (< 120 s)",
                     acc, ma53, ma5, run.wall_s));
}

// 6
Outcome radar_reproduction() {
    const char* train_path = std::getenv("FOGFED_FMCW_TRAIN");
    const char* test_path = std::getenv("FOGFED_FMCW_TEST");
    if (train_path == nullptr || test_path == nullptr) {
        return {Outcome::Status::Skip, "not CI-gated; set FOGFED_FMCW_TRAIN/FOGFED_FMCW_TEST to converted radar data"};
    }
    try {
        const auto train = data::load(train_path, data::format_for_path(train_path));
        const auto test = data::load(test_path, data::format_for_path(test_path));
        auto config = desk_run_config().topology;
        auto simulation = sim::Simulation::build(config, train, test);
        const auto reports = simulation.run();
        double best = 0.0;
        for (const auto& r : reports) best = std::max(best, r.global_test_accuracy);
        return check(best >= 0.97, fmt("%zu rounds, best test accuracy %.4f (>= 0.97), final %.4f", reports.size(),
                                       best, reports.empty() ? 0.0 : reports.back().global_test_accuracy));
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

// 7
Outcome data_locality() {
    const auto& run = desk_result();
    const auto dims = desk_run_config().topology.dims;
    const std::size_t param_bytes = 4 * dims.parameter_count();
    const std::size_t update_bytes = proto::encoded_size(proto::MsgType::ModelUpdate, dims);
    const std::size_t raw_window = 60 * kFeatureDim * 4;
    const std::size_t header_slack = update_bytes - param_bytes;  // 14-byte frame header + update fields

    std::size_t bad_type = 0, raw_like = 0, bad_update_len = 0;
    std::map<std::uint32_t, std::size_t> up_bytes;
    for (const auto& rec : run.log) {
        const auto t = static_cast<int>(rec.msg_type);
        if (t < 1 || t > 3) ++bad_type;
        if (rec.byte_len >= raw_window && rec.byte_len <= raw_window + header_slack) ++raw_like;
        if (rec.sender.kind == sim::NodeId::Kind::Fog) {
            if (rec.msg_type != proto::MsgType::ModelUpdate || rec.byte_len != update_bytes) ++bad_update_len;
            up_bytes[rec.round_id] += rec.byte_len;
        }
    }
    std::size_t bad_rounds = 0;
    for (const auto& [round, bytes] : up_bytes) {
        if (bytes != 5 * update_bytes) ++bad_rounds;
    }
    const bool ok = !run.log.empty() && bad_type == 0 && raw_like == 0 && bad_update_len == 0 &&
                    bad_rounds == 0 && up_bytes.size() == 53;
    return check(ok, fmt("%zu records; fog->cloud %zu B per fog per round = %zu param B + %zu header B; "
                         "%zu bad types, %zu raw-window-sized records",
                         run.log.size(), update_bytes, param_bytes, header_slack, bad_type, raw_like));
}

// 8
Outcome determinism() {
    const auto base = std::filesystem::temp_directory_path() / "fogfed_acceptance";
    std::filesystem::remove_all(base);
    std::ostringstream sink;
    auto run_cli = [&](const std::string& name, std::size_t threads) {
        auto rc = desk_run_config();
        rc.topology.threads = threads;
        rc.output_dir = base / name;
        if (cli::cmd_simulate(rc, sink, sink) != cli::kOk) throw Error("simulate failed: " + sink.str());
        const auto bytes = io::read_file(rc.output_dir / "metrics.csv");
        return std::string(bytes.begin(), bytes.end());
    };
    try {
        const auto first = run_cli("run_a", 1);
        const auto second = run_cli("run_b", 1);
        const auto threaded = run_cli("run_k", 5);
        const auto direct = cli::metrics_csv(desk_result().reports, 5);
        std::filesystem::remove_all(base);
        const bool ok = first == second && first == threaded && first == direct;
        return check(ok, fmt("metrics.csv repeat %s, 1-thread vs 5-thread %s", first == second ? "identical" : "DIFFERS",
                             first == threaded ? "identical" : "DIFFERS"));
    } catch (const std::exception& e) {
        return fail(e.what());
    }
}

// 9
Outcome table_conformance() {
    std::size_t failures = 0;
    const std::pair<double, int> interiors[] = {{0.25, 1}, {0.75, 2}, {1.25, 3}, {1.75, 4},
                                                {2.25, 5}, {2.75, 6}, {3.25, 7}, {4.5, 0}};
    const std::pair<double, int> boundaries[] = {{0.5, 2}, {1.0, 3}, {1.5, 4}, {2.0, 5},
                                                 {2.5, 6}, {3.0, 7}, {3.5, 0}};
    for (const auto& [d, label] : interiors) failures += data::label_of_distance(d) != label;
    for (const auto& [d, label] : boundaries) failures += data::label_of_distance(d) != label;
    std::size_t grid = 0;
    for (int i = 0; i <= 500; ++i) {
        const double d = i * 0.01;
        failures += data::is_critical(data::label_of_distance(d)) != (d < 1.5);
        ++grid;
    }
    return check(failures == 0, fmt("8 interiors, 7 boundaries, %zu grid points, %zu mismatches", grid, failures));
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const Criterion criteria[] = {
        {1, "gradient oracle", gradient_oracle},
        {2, "aggregation properties", aggregation_properties},
        {3, "centralized equivalence", centralized_equivalence},
        {4, "codec conformance", codec_conformance},
        {5, "desk-scale convergence", desk_convergence},
        {6, "radar data reproduction", radar_reproduction},
        {7, "data locality audit", data_locality},
        {8, "determinism", determinism},
        {9, "class table conformance", table_conformance},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = fail(std::string("exception: ") + e.what());
        }
        const char* tag = outcome.status == Outcome::Status::Pass   ? "PASS"
                          : outcome.status == Outcome::Status::Skip ? "SKIP"
                                                                     : "FAIL";
        if (outcome.status == Outcome::Status::Fail) ++failed;
        std::printf("[%s] %d %s: %s\n", tag, c.id, c.name, outcome.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
