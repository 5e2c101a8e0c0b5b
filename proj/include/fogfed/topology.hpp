#pragma once

// Edge/fog/cloud round loop. Edges are stream sources folded into the fog
// shards at build time; fogs train on successive windows; the cloud
// aggregates. Every fog<->cloud exchange goes through the wire codec and an
// in-process FIFO transport.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fogfed/data.hpp"
#include "fogfed/nn.hpp"
#include "fogfed/protocol.hpp"

namespace fogfed::sim {

struct TopologyConfig {
    std::size_t num_fogs = 5;
    std::size_t edges_per_fog = 1;
    std::size_t rounds = 53;
    std::size_t window_size = 60;
    nn::HyperParams hyper;
    std::uint64_t seed = 0;
    nn::Dims dims;
    // Fog training tasks run on up to this many threads; results do not
    // depend on it.
    std::size_t threads = 1;

    void validate() const;
};

// Seed for fog `fog_id`'s local training in round `round_id` (1-based).
std::uint64_t round_seed(std::uint64_t seed, std::uint32_t fog_id, std::uint32_t round_id);

struct NodeId {
    enum class Kind : std::uint8_t { Cloud, Fog };
    Kind kind = Kind::Cloud;
    std::uint32_t index = 0;

    static NodeId cloud() { return {Kind::Cloud, 0}; }
    static NodeId fog(std::uint32_t i) { return {Kind::Fog, i}; }

    std::string name() const;
    auto operator<=>(const NodeId&) const = default;
};

struct TransportRecord {
    std::uint32_t round_id;
    NodeId sender;
    NodeId receiver;
    proto::MsgType msg_type;
    std::size_t byte_len;
};

// Lossless in-process transport with one FIFO queue per directed link.
// Only encoded frames can be sent, and the frame's type byte is logged.
class Transport {
public:
    void send(NodeId from, NodeId to, std::vector<std::uint8_t> frame);
    std::vector<std::uint8_t> receive(NodeId from, NodeId to);
    std::size_t pending(NodeId from, NodeId to) const;

    void set_logging(bool enabled) { logging_ = enabled; }
    const std::vector<TransportRecord>& log() const { return log_; }

private:
    std::map<std::pair<NodeId, NodeId>, std::deque<std::vector<std::uint8_t>>> queues_;
    std::vector<TransportRecord> log_;
    bool logging_ = false;
};

struct WindowRecord {
    std::uint32_t round_id;
    std::size_t begin;  // shard indices [begin, end)
    std::size_t end;
};

struct FogNodeState {
    std::uint32_t fog_id = 0;
    data::Shard shard;
    std::size_t cursor = 0;  // windows consumed
    nn::ModelParams current_params;
    std::vector<WindowRecord> archive;

    // Frames of an archived window, still held in fog-local storage.
    std::span<const Frame> archived(const WindowRecord& record) const {
        return shard.frames().subspan(record.begin, record.end - record.begin);
    }
};

struct RoundReport {
    std::uint32_t round_id = 0;
    double global_test_loss = 0.0;
    double global_test_accuracy = 0.0;
    std::vector<double> per_fog_local_accuracy;
    std::vector<double> per_fog_local_loss;
    std::vector<double> per_fog_train_loss;  // loss each fog reported in its update

    bool operator==(const RoundReport&) const = default;
};

struct CloudState {
    proto::GlobalModel global;
    std::vector<Frame> test_set;
    std::vector<RoundReport> history;
};

class Simulation {
public:
    // Partitions `train` across the fogs and initializes the global model
    // from config.seed. Throws ConfigError when a fog shard cannot hold one
    // window.
    static Simulation build(const TopologyConfig& config, const data::Dataset& train,
                            const data::Dataset& test);

    // Uses caller-provided shards, one per fog, in fog_id order.
    static Simulation from_shards(const TopologyConfig& config, std::vector<data::Shard> shards,
                                  std::vector<Frame> test_set);

    // One synchronous round. Throws ExhaustedStream if any fog lacks a full
    // window, ProtocolError if a frame fails to decode.
    RoundReport run_round();

    // Runs min(config.rounds, full windows per fog) rounds.
    std::vector<RoundReport> run();

    std::size_t max_rounds() const;

    const TopologyConfig& config() const { return config_; }
    const CloudState& cloud() const { return cloud_; }
    const std::vector<FogNodeState>& fogs() const { return fogs_; }
    const Transport& transport() const { return transport_; }
    Transport& transport() { return transport_; }

private:
    Simulation(TopologyConfig config, std::vector<data::Shard> shards, std::vector<Frame> test_set);

    // Fog side of a round: decode the broadcast, train, reply with an update.
    void fog_step(FogNodeState& fog, std::span<const Frame> window,
                  const std::vector<std::uint8_t>& round_start,
                  const std::vector<std::uint8_t>& global_frame, std::vector<std::uint8_t>& reply,
                  std::uint32_t round_id) const;

    TopologyConfig config_;
    std::vector<FogNodeState> fogs_;
    CloudState cloud_;
    Transport transport_;
};

}  // namespace fogfed::sim
