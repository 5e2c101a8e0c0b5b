#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fogfed/frame.hpp"

namespace fogfed::data {

// One row of the distance class table: [lower_m, upper_m) -> label.
struct ClassRule {
    double lower_m;
    double upper_m;  // +inf for the open-ended row
    int label;
    bool critical;
};

// Rows ordered by distance. Labels 1-3 (< 1.5 m) are critical.
extern const std::array<ClassRule, 8> kClassRules;

// Throws InvalidArgument for negative or NaN distances.
int label_of_distance(double meters);

// Throws InvalidArgument for labels outside [0, 8).
bool is_critical(int label);

// Distance interval [lo, hi) of a label, as used by the synthetic generator:
// class 0 is capped to [3.5, 4.0) and class 1 starts at 0.05 m.
std::pair<double, double> synth_interval(int label);

struct Dataset {
    std::vector<Frame> frames;
    std::size_t feature_dim = kFeatureDim;
    int num_classes = kNumClasses;
    std::string source;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
};

enum class Format { Csv, RawF32 };

// Parses `name` as "csv" or "raw-f32".
Format parse_format(const std::string& name);

// Picks a format from the file extension: .csv is CSV, anything else raw-f32.
Format format_for_path(const std::filesystem::path& path);

// CSV: one frame per line, `feature_dim` floats then the integer label.
// raw-f32: u32 count | u32 dim | per frame dim f32 LE + u8 label.
// Throws ParseError carrying the line (CSV) or byte offset (raw-f32).
Dataset load(const std::filesystem::path& path, Format format,
             std::size_t feature_dim = kFeatureDim);

void save(const Dataset& dataset, const std::filesystem::path& path, Format format);

// Serialized raw-f32 image of a dataset.
std::vector<std::uint8_t> to_raw_f32(const Dataset& dataset);

class Shard {
public:
    Shard() = default;
    Shard(std::uint32_t fog_id, std::vector<Frame> frames)
        : fog_id_(fog_id), frames_(std::move(frames)) {}

    std::uint32_t fog_id() const { return fog_id_; }
    std::span<const Frame> frames() const { return frames_; }
    std::size_t size() const { return frames_.size(); }
    std::size_t cursor() const { return cursor_; }
    std::size_t full_windows_left(std::size_t window_size) const;

    // Frames [cursor, cursor + window_size) if a full window remains, in which
    // case the cursor advances. Otherwise nullopt and the cursor is unchanged.
    std::optional<std::span<const Frame>> next_window(std::size_t window_size);

private:
    std::uint32_t fog_id_ = 0;
    std::vector<Frame> frames_;
    std::size_t cursor_ = 0;
};

// Seeded permutation of the frame indices followed by a contiguous split into
// k near-equal parts (sizes differ by at most one, larger parts first).
std::vector<std::vector<std::size_t>> partition_indices(std::size_t n, std::size_t k,
                                                        std::uint64_t seed);

std::vector<Shard> partition(const Dataset& dataset, std::size_t k, std::uint64_t seed);

struct SynthSpec {
    std::size_t count = 16000;
    double noise_sigma = 0.05;
};

// Radar-like range profiles: a unit Gaussian bump (std 8 bins) centered at bin
// floor(512 * d / 4.0) for a distance d drawn inside the label's interval,
// plus N(0, noise_sigma^2) noise per bin.
Dataset synth_generate(std::size_t n, std::uint64_t seed, double noise_sigma);

inline constexpr double kSynthRangeM = 4.0;
inline constexpr double kSynthBumpWidthBins = 8.0;

std::size_t synth_center_bin(double meters);

}  // namespace fogfed::data
