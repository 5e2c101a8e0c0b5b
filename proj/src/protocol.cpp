#include "fogfed/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "fogfed/error.hpp"

namespace fogfed::proto {

namespace {

class Writer {
public:
    explicit Writer(std::size_t reserve) { bytes_.reserve(reserve); }

    void u8(std::uint8_t x) { bytes_.push_back(x); }
    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    }
    void u64(std::uint64_t x) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    }
    void f32(float x) { u32(std::bit_cast<std::uint32_t>(x)); }

    void tensors(const nn::ModelParams& params) {
        u8(kTensorCount);
        for (auto tensor : params.arrays()) {
            u32(static_cast<std::uint32_t>(tensor.size()));
            for (float x : tensor) f32(x);
        }
    }

    void patch_u32(std::size_t offset, std::uint32_t x) {
        for (int i = 0; i < 4; ++i) bytes_[offset + i] = static_cast<std::uint8_t>(x >> (8 * i));
    }

    std::size_t size() const { return bytes_.size(); }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

// Bounded reader over a payload. Running off the end means the declared
// payload length disagrees with its contents.
class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return x;
    }
    float f32() { return std::bit_cast<float>(u32()); }

    std::vector<float> tensor() {
        const std::uint32_t count = u32();
        if (static_cast<std::uint64_t>(count) * 4 > remaining()) {
            throw CodecError(CodecError::Kind::LengthMismatch,
                             "tensor declares " + std::to_string(count) + " elements but only " +
                                 std::to_string(remaining()) + " payload bytes remain");
        }
        std::vector<float> out(count);
        for (auto& x : out) x = f32();
        return out;
    }

    nn::ModelParams params() {
        const std::uint8_t count = u8();
        if (count != kTensorCount) {
            throw CodecError(CodecError::Kind::Malformed,
                             "tensor_count " + std::to_string(count) + ", expected 4");
        }
        auto w1 = tensor();
        auto b1 = tensor();
        auto w2 = tensor();
        auto b2 = tensor();
        const std::size_t hidden = b1.size();
        const std::size_t output = b2.size();
        if (hidden == 0 || output == 0 || w2.size() != hidden * output || w1.empty() ||
            w1.size() % hidden != 0) {
            throw CodecError(CodecError::Kind::Malformed, "tensor element counts are inconsistent");
        }
        nn::ModelParams params;
        params.w1.rows = w1.size() / hidden;
        params.w1.cols = hidden;
        params.w1.data = std::move(w1);
        params.b1 = std::move(b1);
        params.w2.rows = hidden;
        params.w2.cols = output;
        params.w2.data = std::move(w2);
        params.b2 = std::move(b2);
        if (!params.all_finite()) {
            throw CodecError(CodecError::Kind::Malformed, "non-finite parameter value");
        }
        return params;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) {
            throw CodecError(CodecError::Kind::LengthMismatch,
                             "payload ended early at byte " + std::to_string(pos_));
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::size_t tensors_size(const nn::Dims& dims) {
    return 1 + 4 * 4 + 4 * dims.parameter_count();
}

}  // namespace

MsgType type_of(const WireMessage& msg) {
    return static_cast<MsgType>(msg.index() + 1);
}

std::uint32_t round_of(const WireMessage& msg) {
    return std::visit([](const auto& m) { return m.round_id; }, msg);
}

std::size_t encoded_size(MsgType type, const nn::Dims& dims) {
    switch (type) {
        case MsgType::RoundStart: return kHeaderSize + 4;
        case MsgType::ModelUpdate: return kHeaderSize + 4 + 8 + 4 + tensors_size(dims);
        case MsgType::GlobalModel: return kHeaderSize + tensors_size(dims);
    }
    throw InvalidArgument("unknown message type");
}

nn::ModelParams aggregate(std::span<const ModelUpdate> updates) {
    if (updates.empty()) throw InvalidArgument("aggregate: no updates");

    const ModelUpdate& first = updates.front();
    for (const auto& update : updates) {
        if (update.round_id != first.round_id) {
            throw ProtocolError("aggregate: updates from rounds " + std::to_string(first.round_id) +
                                " and " + std::to_string(update.round_id));
        }
        if (!update.params.congruent(first.params)) {
            throw ProtocolError("aggregate: update from fog " + std::to_string(update.fog_id) +
                                " has incongruent shapes");
        }
        if (update.sample_count < 1) {
            throw ProtocolError("aggregate: update from fog " + std::to_string(update.fog_id) +
                                " reports zero samples");
        }
    }

    std::vector<std::size_t> order(updates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return updates[a].fog_id < updates[b].fog_id;
    });

    // sum_i n_i * p_i / sum_i n_i. Keeping the counts as integers until the
    // final division makes the mean of identical inputs exact.
    const nn::Dims dims = first.params.dims();
    auto sums = nn::BasicParams<double>::zeros(dims);
    double total = 0.0;
    for (std::size_t idx : order) {
        const auto& update = updates[idx];
        const auto n = static_cast<double>(update.sample_count);
        total += n;
        auto acc = sums.arrays();
        const auto src = update.params.arrays();
        for (std::size_t a = 0; a < acc.size(); ++a) {
            for (std::size_t i = 0; i < acc[a].size(); ++i) {
                acc[a][i] += n * static_cast<double>(src[a][i]);
            }
        }
    }

    auto out = nn::ModelParams::zeros(dims);
    auto dst = out.arrays();
    const auto acc = sums.arrays();
    for (std::size_t a = 0; a < dst.size(); ++a) {
        for (std::size_t i = 0; i < dst[a].size(); ++i) {
            dst[a][i] = static_cast<float>(acc[a][i] / total);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode(const WireMessage& msg) {
    const MsgType type = type_of(msg);
    std::size_t reserve = kHeaderSize + 4;
    if (const auto* u = std::get_if<ModelUpdate>(&msg)) reserve = encoded_size(type, u->params.dims());
    if (const auto* g = std::get_if<GlobalModel>(&msg)) reserve = encoded_size(type, g->params.dims());

    Writer out(reserve);
    for (std::uint8_t b : kMagic) out.u8(b);
    out.u8(kVersion);
    out.u8(static_cast<std::uint8_t>(type));
    out.u32(round_of(msg));
    out.u32(0);  // payload_len, patched below

    std::visit(
        [&out](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, RoundStart>) {
                out.u32(m.window_index);
            } else if constexpr (std::is_same_v<M, ModelUpdate>) {
                out.u32(m.fog_id);
                out.u64(m.sample_count);
                out.f32(m.local_loss);
                out.tensors(m.params);
            } else {
                out.tensors(m.params);
            }
        },
        msg);

    out.patch_u32(10, static_cast<std::uint32_t>(out.size() - kHeaderSize));
    return out.take();
}

WireMessage decode(std::span<const std::uint8_t> bytes) {
    using Kind = CodecError::Kind;

    const std::size_t magic_seen = std::min<std::size_t>(bytes.size(), 4);
    if (!std::equal(bytes.begin(), bytes.begin() + magic_seen, kMagic)) {
        throw CodecError(Kind::BadMagic, "frame does not start with \"FFL1\"");
    }
    if (bytes.size() < kHeaderSize) {
        throw CodecError(Kind::Truncated, "header needs " + std::to_string(kHeaderSize) +
                                              " bytes, have " + std::to_string(bytes.size()));
    }

    Reader header(bytes.subspan(4, kHeaderSize - 4));
    const std::uint8_t version = header.u8();
    if (version != kVersion) {
        throw CodecError(Kind::BadVersion, "version " + std::to_string(version));
    }
    const std::uint8_t raw_type = header.u8();
    if (raw_type < 1 || raw_type > 3) {
        throw CodecError(Kind::UnsupportedMessage, "msg_type " + std::to_string(raw_type));
    }
    const std::uint32_t round_id = header.u32();
    const std::uint32_t payload_len = header.u32();

    const std::size_t available = bytes.size() - kHeaderSize;
    if (available < payload_len) {
        throw CodecError(Kind::Truncated, "payload declares " + std::to_string(payload_len) +
                                              " bytes, have " + std::to_string(available));
    }
    if (available > payload_len) {
        throw CodecError(Kind::LengthMismatch, std::to_string(available - payload_len) +
                                                   " bytes trail the declared payload");
    }

    Reader body(bytes.subspan(kHeaderSize));
    WireMessage msg;
    switch (static_cast<MsgType>(raw_type)) {
        case MsgType::RoundStart: {
            msg = RoundStart{round_id, body.u32()};
            break;
        }
        case MsgType::ModelUpdate: {
            ModelUpdate update;
            update.round_id = round_id;
            update.fog_id = body.u32();
            update.sample_count = body.u64();
            update.local_loss = body.f32();
            if (update.sample_count == 0) throw CodecError(Kind::Malformed, "sample_count is zero");
            if (!std::isfinite(update.local_loss)) {
                throw CodecError(Kind::Malformed, "non-finite local_loss");
            }
            update.params = body.params();
            msg = std::move(update);
            break;
        }
        case MsgType::GlobalModel: {
            msg = GlobalModel{round_id, body.params()};
            break;
        }
    }
    if (body.remaining() != 0) {
        throw CodecError(Kind::LengthMismatch,
                         std::to_string(body.remaining()) + " unread bytes inside the payload");
    }
    return msg;
}

}  // namespace fogfed::proto
