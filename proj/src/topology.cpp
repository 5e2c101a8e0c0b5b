#include "fogfed/topology.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "fogfed/error.hpp"
#include "fogfed/rng.hpp"

namespace fogfed::sim {

namespace {

template <typename M>
M expect(const proto::WireMessage& msg, const char* what) {
    if (const auto* m = std::get_if<M>(&msg)) return *m;
    throw ProtocolError(std::string("expected ") + what + " frame, got msg_type " +
                        std::to_string(static_cast<int>(proto::type_of(msg))));
}

}  // namespace

void TopologyConfig::validate() const {
    if (num_fogs < 1) throw ConfigError("num_fogs must be >= 1");
    if (edges_per_fog < 1) throw ConfigError("edges_per_fog must be >= 1");
    if (window_size < 1) throw ConfigError("window_size must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (dims.input < 1 || dims.hidden < 1 || dims.output < 1) {
        throw ConfigError("network dimensions must be >= 1");
    }
    try {
        hyper.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

std::uint64_t round_seed(std::uint64_t seed, std::uint32_t fog_id, std::uint32_t round_id) {
    return hash_seed(seed, fog_id, round_id);
}

std::string NodeId::name() const {
    return kind == Kind::Cloud ? std::string("cloud") : "fog_" + std::to_string(index);
}

void Transport::send(NodeId from, NodeId to, std::vector<std::uint8_t> frame) {
    if (logging_) {
        // Header fields at fixed offsets: msg_type @5, round_id @6.
        std::uint32_t round_id = 0;
        auto type = proto::MsgType{0};
        if (frame.size() >= proto::kHeaderSize) {
            type = static_cast<proto::MsgType>(frame[5]);
            for (int i = 0; i < 4; ++i) round_id |= static_cast<std::uint32_t>(frame[6 + i]) << (8 * i);
        }
        log_.push_back({round_id, from, to, type, frame.size()});
    }
    queues_[{from, to}].push_back(std::move(frame));
}

std::vector<std::uint8_t> Transport::receive(NodeId from, NodeId to) {
    auto it = queues_.find({from, to});
    if (it == queues_.end() || it->second.empty()) {
        throw ProtocolError("no message queued from " + from.name() + " to " + to.name());
    }
    auto frame = std::move(it->second.front());
    it->second.pop_front();
    return frame;
}

std::size_t Transport::pending(NodeId from, NodeId to) const {
    const auto it = queues_.find({from, to});
    return it == queues_.end() ? 0 : it->second.size();
}

Simulation::Simulation(TopologyConfig config, std::vector<data::Shard> shards,
                       std::vector<Frame> test_set)
    : config_(std::move(config)) {
    config_.validate();
    if (shards.size() != config_.num_fogs) {
        throw ConfigError("expected " + std::to_string(config_.num_fogs) + " shards, got " +
                          std::to_string(shards.size()));
    }
    if (test_set.empty()) throw ConfigError("test set is empty");

    cloud_.global = {0, nn::init_params(config_.seed, config_.dims)};
    cloud_.test_set = std::move(test_set);
    for (std::size_t i = 0; i < shards.size(); ++i) {
        if (shards[i].size() < config_.window_size) {
            throw ConfigError("fog " + std::to_string(i) + " holds " + std::to_string(shards[i].size()) +
                              " frames, fewer than one window of " + std::to_string(config_.window_size));
        }
        FogNodeState fog;
        fog.fog_id = static_cast<std::uint32_t>(i);
        fog.shard = std::move(shards[i]);
        fog.current_params = cloud_.global.params;
        fogs_.push_back(std::move(fog));
    }
}

Simulation Simulation::build(const TopologyConfig& config, const data::Dataset& train,
                             const data::Dataset& test) {
    config.validate();
    if (train.size() < config.num_fogs * config.window_size) {
        throw ConfigError("training set of " + std::to_string(train.size()) +
                          " frames cannot give each of " + std::to_string(config.num_fogs) +
                          " fogs a window of " + std::to_string(config.window_size));
    }
    if (train.feature_dim != config.dims.input || test.feature_dim != config.dims.input) {
        throw ConfigError("dataset feature dim does not match the network input");
    }
    return Simulation(config, data::partition(train, config.num_fogs, config.seed), test.frames);
}

Simulation Simulation::from_shards(const TopologyConfig& config, std::vector<data::Shard> shards,
                                   std::vector<Frame> test_set) {
    return Simulation(config, std::move(shards), std::move(test_set));
}

std::size_t Simulation::max_rounds() const {
    std::size_t limit = config_.rounds;
    for (const auto& fog : fogs_) limit = std::min(limit, fog.shard.full_windows_left(config_.window_size));
    return limit;
}

void Simulation::fog_step(FogNodeState& fog, std::span<const Frame> window,
                          const std::vector<std::uint8_t>& round_start,
                          const std::vector<std::uint8_t>& global_frame,
                          std::vector<std::uint8_t>& reply, std::uint32_t round_id) const {
    const auto start = expect<proto::RoundStart>(proto::decode(round_start), "RoundStart");
    if (start.round_id != round_id || start.window_index != fog.cursor) {
        throw ProtocolError("fog " + std::to_string(fog.fog_id) +
                            ": RoundStart does not match local state");
    }
    const auto global = expect<proto::GlobalModel>(proto::decode(global_frame), "GlobalModel");

    const auto trained = nn::train_local(global.params, window, config_.hyper,
                                         round_seed(config_.seed, fog.fog_id, round_id));
    fog.current_params = trained.params;

    proto::ModelUpdate update;
    update.round_id = round_id;
    update.fog_id = fog.fog_id;
    update.sample_count = window.size();
    update.local_loss = static_cast<float>(trained.local_loss);
    update.params = trained.params;
    reply = proto::encode(update);
}

RoundReport Simulation::run_round() {
    for (const auto& fog : fogs_) {
        if (fog.shard.full_windows_left(config_.window_size) == 0) {
            throw ExhaustedStream("fog " + std::to_string(fog.fog_id) + " has no full window left (" +
                                  std::to_string(fog.shard.size() - fog.shard.cursor()) +
                                  " frames remain)");
        }
    }

    const std::uint32_t round_id = cloud_.global.round_id + 1;
    const NodeId cloud_id = NodeId::cloud();
    const auto global_frame = proto::encode(cloud_.global);

    // Cloud -> fogs: RoundStart then the current global model.
    for (const auto& fog : fogs_) {
        const auto start = static_cast<std::uint32_t>(fog.cursor);
        transport_.send(cloud_id, NodeId::fog(fog.fog_id), proto::encode(proto::RoundStart{round_id, start}));
        transport_.send(cloud_id, NodeId::fog(fog.fog_id), global_frame);
    }

    const std::size_t k = fogs_.size();
    std::vector<std::vector<std::uint8_t>> starts(k), globals(k), replies(k);
    std::vector<std::span<const Frame>> windows(k);
    std::vector<std::size_t> window_begin(k);
    for (std::size_t i = 0; i < k; ++i) {
        auto& fog = fogs_[i];
        starts[i] = transport_.receive(cloud_id, NodeId::fog(fog.fog_id));
        globals[i] = transport_.receive(cloud_id, NodeId::fog(fog.fog_id));
        window_begin[i] = fog.shard.cursor();
        windows[i] = *fog.shard.next_window(config_.window_size);
    }

    // Local training. Each task touches only its own fog state.
    std::vector<std::exception_ptr> errors(k);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < k; i = next++) {
            try {
                fog_step(fogs_[i], windows[i], starts[i], globals[i], replies[i], round_id);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t nthreads = std::min(config_.threads, k);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    }
    for (const auto& error : errors) {
        if (error) std::rethrow_exception(error);
    }

    for (std::size_t i = 0; i < k; ++i) {
        auto& fog = fogs_[i];
        fog.archive.push_back({round_id, window_begin[i], window_begin[i] + windows[i].size()});
        fog.cursor += 1;
        transport_.send(NodeId::fog(fog.fog_id), cloud_id, std::move(replies[i]));
    }

    // Cloud: collect, aggregate, evaluate.
    std::vector<proto::ModelUpdate> updates;
    updates.reserve(k);
    for (const auto& fog : fogs_) {
        auto update = expect<proto::ModelUpdate>(
            proto::decode(transport_.receive(NodeId::fog(fog.fog_id), cloud_id)), "ModelUpdate");
        if (update.round_id != round_id || update.fog_id != fog.fog_id) {
            throw ProtocolError("update from fog " + std::to_string(fog.fog_id) +
                                " carries round " + std::to_string(update.round_id) + ", fog " +
                                std::to_string(update.fog_id));
        }
        updates.push_back(std::move(update));
    }
    cloud_.global = {round_id, proto::aggregate(updates)};

    RoundReport report;
    report.round_id = round_id;
    const auto test_eval = nn::evaluate(cloud_.global.params, cloud_.test_set);
    report.global_test_loss = test_eval.loss;
    report.global_test_accuracy = test_eval.accuracy;
    for (std::size_t i = 0; i < k; ++i) {
        const auto local = nn::evaluate(cloud_.global.params, windows[i]);
        report.per_fog_local_accuracy.push_back(local.accuracy);
        report.per_fog_local_loss.push_back(local.loss);
        report.per_fog_train_loss.push_back(updates[i].local_loss);
    }
    cloud_.history.push_back(report);
    return report;
}

std::vector<RoundReport> Simulation::run() {
    const std::size_t rounds = max_rounds();
    std::vector<RoundReport> reports;
    reports.reserve(rounds);
    for (std::size_t r = 0; r < rounds; ++r) reports.push_back(run_round());
    return reports;
}

}  // namespace fogfed::sim
