#pragma once

#include "talkhead/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace talkhead {

/// T frames of k-dimensional audio features, stored frame-major.
struct FeatureTimeline {
  std::int64_t k = 34;
  double rate = 30.0;
  std::vector<float> values; // T × k

  std::int64_t frames() const { return k > 0 ? static_cast<std::int64_t>(values.size()) / k : 0; }
  float at(std::int64_t t, std::int64_t i) const {
    return values[static_cast<std::size_t>(t * k + i)];
  }
  void push_frame(const std::vector<float> &frame);
};

/// k × w slab; column j holds frame t − (w−1)/2 + j, clamped to the timeline.
struct FeatureWindow {
  std::int64_t k = 0;
  std::int64_t w = 0;
  std::vector<float> values; // k × w

  float at(std::int64_t i, std::int64_t j) const {
    return values[static_cast<std::size_t>(i * w + j)];
  }
  /// The w × k layout the audio encoder consumes (frames as channels).
  Tensor as_channels() const;
};

FeatureWindow window_at(const FeatureTimeline &timeline, std::int64_t t, std::int64_t w = 6);

enum class FeatureMode { viseme, generic };

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

/// Never throws. In viseme mode every entry must lie in [0, 1].
ValidationReport validate(const FeatureTimeline &timeline, std::int64_t expected_k,
                          FeatureMode mode = FeatureMode::viseme);

FeatureTimeline load_timeline(const std::filesystem::path &path);
void save_timeline(const std::filesystem::path &path, const FeatureTimeline &timeline);

} // namespace talkhead
