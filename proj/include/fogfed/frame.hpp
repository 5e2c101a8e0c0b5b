#pragma once

#include <cstddef>
#include <vector>

namespace fogfed {

inline constexpr std::size_t kFeatureDim = 512;
inline constexpr int kNumClasses = 8;

// One preprocessed radar range profile and its distance class.
struct Frame {
    std::vector<float> features;
    int label = 0;

    bool operator==(const Frame&) const = default;
};

}  // namespace fogfed
