#pragma once

// Federated averaging and the byte-level frame format exchanged between fog
// nodes and the cloud.
//
// Frame layout, all integers little-endian:
//
//   "FFL1" | version u8 (=1) | msg_type u8 | round_id u32 | payload_len u32 | payload
//
//   RoundStart  payload: window_index u32
//   ModelUpdate payload: fog_id u32 | sample_count u64 | local_loss f32 | tensors
//   GlobalModel payload: tensors
//   tensors:             tensor_count u8 (=4) | { elem_count u32 | f32 * elem_count } * 4
//
// Tensors are w1, b1, w2, b2, each row-major.

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "fogfed/nn.hpp"

namespace fogfed::proto {

inline constexpr std::uint8_t kMagic[4] = {0x46, 0x46, 0x4C, 0x31};  // "FFL1"
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 14;
inline constexpr std::uint8_t kTensorCount = 4;

enum class MsgType : std::uint8_t {
    RoundStart = 1,
    ModelUpdate = 2,
    GlobalModel = 3,
};

struct RoundStart {
    std::uint32_t round_id = 0;
    std::uint32_t window_index = 0;

    bool operator==(const RoundStart&) const = default;
};

struct ModelUpdate {
    std::uint32_t round_id = 0;
    std::uint32_t fog_id = 0;
    std::uint64_t sample_count = 1;
    float local_loss = 0.0f;
    nn::ModelParams params;

    bool operator==(const ModelUpdate&) const = default;
};

struct GlobalModel {
    std::uint32_t round_id = 0;
    nn::ModelParams params;

    bool operator==(const GlobalModel&) const = default;
};

using WireMessage = std::variant<RoundStart, ModelUpdate, GlobalModel>;

MsgType type_of(const WireMessage& msg);
std::uint32_t round_of(const WireMessage& msg);

// Sample-count-weighted mean of the update parameters. Accumulates in double,
// visiting updates in ascending fog_id order.
nn::ModelParams aggregate(std::span<const ModelUpdate> updates);

std::vector<std::uint8_t> encode(const WireMessage& msg);

// Throws CodecError for any byte sequence that is not a valid frame.
WireMessage decode(std::span<const std::uint8_t> bytes);

// Total encoded size of a frame carrying the given message kind with a
// network of `dims`. RoundStart ignores dims.
std::size_t encoded_size(MsgType type, const nn::Dims& dims);

}  // namespace fogfed::proto
