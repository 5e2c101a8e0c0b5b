#include "fogfed/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <string_view>

#include "fogfed/error.hpp"
#include "fogfed/io.hpp"
#include "fogfed/rng.hpp"

namespace fogfed::data {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

Dataset load_csv(const std::filesystem::path& path, std::size_t feature_dim) {
    const auto bytes = io::read_file(path);
    const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    const std::string name = path.string();

    Dataset dataset;
    dataset.feature_dim = feature_dim;
    dataset.source = name;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    std::vector<std::string_view> fields;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;

        fields.clear();
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (fields.size() != feature_dim + 1) {
            throw ParseError(name, line_no,
                             "expected " + std::to_string(feature_dim) + " features and a label, got " +
                                 std::to_string(fields.size()) + " columns");
        }

        Frame frame;
        frame.features.resize(feature_dim);
        for (std::size_t i = 0; i < feature_dim; ++i) {
            const auto field = fields[i];
            float value = 0.0f;
            const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (ec != std::errc{} || end != field.data() + field.size() || field.empty()) {
                throw ParseError(name, line_no,
                                 "column " + std::to_string(i + 1) + ": not a number: '" +
                                     std::string(field) + "'");
            }
            if (!std::isfinite(value)) {
                throw ParseError(name, line_no, "column " + std::to_string(i + 1) + ": non-finite value");
            }
            frame.features[i] = value;
        }
        const auto label_field = fields.back();
        int label = -1;
        const auto [end, ec] =
            std::from_chars(label_field.data(), label_field.data() + label_field.size(), label);
        if (ec != std::errc{} || end != label_field.data() + label_field.size() || label_field.empty()) {
            throw ParseError(name, line_no, "label is not an integer: '" + std::string(label_field) + "'");
        }
        if (label < 0 || label >= kNumClasses) {
            throw ParseError(name, line_no, "label " + std::to_string(label) + " outside [0, 8)");
        }
        frame.label = label;
        dataset.frames.push_back(std::move(frame));
    }
    return dataset;
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    return x;
}

Dataset load_raw(const std::filesystem::path& path, std::size_t feature_dim) {
    const auto bytes = io::read_file(path);
    const std::string name = path.string();
    if (bytes.size() < 8) {
        throw ParseError(name, bytes.size(), "truncated header (need 8 bytes)");
    }
    const std::uint32_t count = read_u32(bytes, 0);
    const std::uint32_t dim = read_u32(bytes, 4);
    if (dim != feature_dim) {
        throw ParseError(name, 4, "feature dim " + std::to_string(dim) + ", expected " +
                                      std::to_string(feature_dim));
    }
    const std::size_t record = std::size_t{dim} * 4 + 1;
    const std::size_t expected = 8 + record * count;
    if (bytes.size() < expected) {
        const std::size_t complete = (bytes.size() - 8) / record;
        throw ParseError(name, 8 + complete * record,
                         "truncated after " + std::to_string(complete) + " of " +
                             std::to_string(count) + " frames");
    }
    if (bytes.size() > expected) {
        throw ParseError(name, expected, std::to_string(bytes.size() - expected) + " trailing bytes");
    }

    Dataset dataset;
    dataset.feature_dim = feature_dim;
    dataset.source = name;
    dataset.frames.resize(count);
    std::size_t offset = 8;
    for (auto& frame : dataset.frames) {
        frame.features.resize(dim);
        for (auto& x : frame.features) {
            x = std::bit_cast<float>(read_u32(bytes, offset));
            if (!std::isfinite(x)) throw ParseError(name, offset, "non-finite feature value");
            offset += 4;
        }
        if (bytes[offset] >= kNumClasses) {
            throw ParseError(name, offset, "label " + std::to_string(bytes[offset]) + " outside [0, 8)");
        }
        frame.label = bytes[offset];
        offset += 1;
    }
    return dataset;
}

}  // namespace

const std::array<ClassRule, 8> kClassRules = {{
    {0.0, 0.5, 1, true},
    {0.5, 1.0, 2, true},
    {1.0, 1.5, 3, true},
    {1.5, 2.0, 4, false},
    {2.0, 2.5, 5, false},
    {2.5, 3.0, 6, false},
    {3.0, 3.5, 7, false},
    {3.5, kInf, 0, false},
}};

int label_of_distance(double meters) {
    if (std::isnan(meters) || meters < 0.0) {
        throw InvalidArgument("distance must be a non-negative number of meters");
    }
    for (const auto& rule : kClassRules) {
        if (meters >= rule.lower_m && meters < rule.upper_m) return rule.label;
    }
    return kClassRules.back().label;  // +inf
}

bool is_critical(int label) {
    if (label < 0 || label >= kNumClasses) {
        throw InvalidArgument("label " + std::to_string(label) + " outside [0, 8)");
    }
    for (const auto& rule : kClassRules) {
        if (rule.label == label) return rule.critical;
    }
    return false;
}

std::pair<double, double> synth_interval(int label) {
    if (label < 0 || label >= kNumClasses) {
        throw InvalidArgument("label " + std::to_string(label) + " outside [0, 8)");
    }
    if (label == 0) return {3.5, kSynthRangeM};
    if (label == 1) return {0.05, 0.5};
    for (const auto& rule : kClassRules) {
        if (rule.label == label) return {rule.lower_m, rule.upper_m};
    }
    return {0.0, 0.0};
}

Format parse_format(const std::string& name) {
    if (name == "csv") return Format::Csv;
    if (name == "raw-f32") return Format::RawF32;
    throw InvalidArgument("unknown data format '" + name + "' (expected csv or raw-f32)");
}

Format format_for_path(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? Format::Csv : Format::RawF32;
}

Dataset load(const std::filesystem::path& path, Format format, std::size_t feature_dim) {
    return format == Format::Csv ? load_csv(path, feature_dim) : load_raw(path, feature_dim);
}

std::vector<std::uint8_t> to_raw_f32(const Dataset& dataset) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + dataset.size() * (dataset.feature_dim * 4 + 1));
    auto put_u32 = [&out](std::uint32_t x) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    };
    put_u32(static_cast<std::uint32_t>(dataset.size()));
    put_u32(static_cast<std::uint32_t>(dataset.feature_dim));
    for (const auto& frame : dataset.frames) {
        if (frame.features.size() != dataset.feature_dim) {
            throw InvalidArgument("frame feature count differs from the dataset's feature_dim");
        }
        for (float x : frame.features) put_u32(std::bit_cast<std::uint32_t>(x));
        out.push_back(static_cast<std::uint8_t>(frame.label));
    }
    return out;
}

void save(const Dataset& dataset, const std::filesystem::path& path, Format format) {
    if (format == Format::RawF32) {
        io::write_file_atomic(path, to_raw_f32(dataset));
        return;
    }
    std::string text;
    char buf[32];
    for (const auto& frame : dataset.frames) {
        for (float x : frame.features) {
            // Shortest representation that round-trips the float.
            const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
            text.append(buf, end);
            text.push_back(',');
        }
        text += std::to_string(frame.label);
        text.push_back('\n');
    }
    io::write_file_atomic(path, text);
}

std::size_t Shard::full_windows_left(std::size_t window_size) const {
    if (window_size == 0) return 0;
    return (frames_.size() - cursor_) / window_size;
}

std::optional<std::span<const Frame>> Shard::next_window(std::size_t window_size) {
    if (window_size == 0 || frames_.size() - cursor_ < window_size) return std::nullopt;
    const std::span<const Frame> window(frames_.data() + cursor_, window_size);
    cursor_ += window_size;
    return window;
}

std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t k,
                                                        std::uint64_t seed) {
    if (k < 1) throw InvalidArgument("partition: k must be >= 1");
    if (k > n) {
        throw InvalidArgument("partition: cannot split " + std::to_string(n) + " frames into " +
                              std::to_string(k) + " shards");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(hash_seed(seed, 0x70617274ULL));
    rng.shuffle(std::span<std::size_t>(perm));

    std::vector<std::vector<std::size_t>> parts(k);
    const std::size_t base = n / k;
    const std::size_t extra = n % k;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t len = base + (i < extra ? 1 : 0);
        parts[i].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                        perm.begin() + static_cast<std::ptrdiff_t>(pos + len));
        pos += len;
    }
    return parts;
}

std::vector<Shard> partition(const Dataset& dataset, std::size_t k, std::uint64_t seed) {
    const auto parts = partition_indices(dataset.size(), k, seed);
    std::vector<Shard> shards;
    shards.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<Frame> frames;
        frames.reserve(parts[i].size());
        for (std::size_t idx : parts[i]) frames.push_back(dataset.frames[idx]);
        shards.emplace_back(static_cast<std::uint32_t>(i), std::move(frames));
    }
    return shards;
}

std::size_t synth_center_bin(double meters) {
    const auto bin = static_cast<std::size_t>(std::floor(static_cast<double>(kFeatureDim) * meters / kSynthRangeM));
    return std::min(bin, kFeatureDim - 1);
}

Dataset synth_generate(std::size_t n, std::uint64_t seed, double noise_sigma) {
    if (n < 1) throw InvalidArgument("synth_generate: n must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw InvalidArgument("synth_generate: noise_sigma must be finite and >= 0");
    }
    Dataset dataset;
    dataset.source = "synthetic";
    dataset.frames.resize(n);
    Rng rng(hash_seed(seed, 0x73796e74ULL));
    const double two_var = 2.0 * kSynthBumpWidthBins * kSynthBumpWidthBins;
    for (auto& frame : dataset.frames) {
        frame.label = static_cast<int>(rng.below(kNumClasses));
        const auto [lo, hi] = synth_interval(frame.label);
        double meters = rng.uniform(lo, hi);
        if (meters >= hi) meters = std::nextafter(hi, lo);
        const auto center = static_cast<double>(synth_center_bin(meters));
        frame.features.resize(kFeatureDim);
        for (std::size_t i = 0; i < kFeatureDim; ++i) {
            const double offset = static_cast<double>(i) - center;
            double value = std::exp(-offset * offset / two_var);
            if (noise_sigma > 0.0) value += noise_sigma * rng.normal();
            frame.features[i] = static_cast<float>(value);
        }
    }
    return dataset;
}

}  // namespace fogfed::data
