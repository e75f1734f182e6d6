#pragma once

// Hierarchical oracle: a mouth network rendered at high resolution, pasted
// into the input of a head network. Plus the keypoint-mashing factory that
// turns it into synthetic training frames.

#include "talkhead/dataset.hpp"
#include "talkhead/network.hpp"
#include "talkhead/training.hpp"
#include "talkhead/weight_store.hpp"

#include <filesystem>
#include <optional>

namespace talkhead {

struct OracleConfig {
  std::int64_t canvas = 512;
  std::int64_t mouth_resolution = 512; // M
  CropRect crop;                       // mouth rect in head space, side c

  /// Throws a config error unless c ≤ S, M ≥ c and both sizes are multiples of 16.
  void validate() const;
  static OracleConfig for_canvas(std::int64_t canvas);
};

namespace oracle_values {
inline constexpr const char *mouth_input = "mouth_drawing";
inline constexpr const char *mouth_output = "oracle_mouth.dec.tanh";
inline constexpr const char *head_input = "head_input";
inline constexpr const char *head_output = "oracle_head.dec.tanh";
} // namespace oracle_values

struct OracleNets {
  NetworkSpec mouth; // 1×M×M drawing → 3×M×M
  NetworkSpec head;  // 4×S×S [drawing ∥ pasted mouth] → 3×S×S
};

OracleNets build_oracle(const OracleConfig &cfg);

struct Oracle {
  OracleConfig config;
  OracleNets nets;
  WeightStore weights; // oracle_mouth.* and oracle_head.*
};

/// Head-net input: the 1-channel drawing stacked on a black canvas holding
/// `mouth` resized to c×c at the crop.
Tensor head_net_input(const Tensor &drawing, const Tensor &mouth, const CropRect &crop);

struct OracleOutput {
  Tensor head;  // 3×S×S
  Tensor mouth; // 3×M×M
};

/// Chained render: mouth net on the crop drawing, then the head net.
OracleOutput oracle_render(const Oracle &oracle, const IdentityConfig &identity,
                           const KeypointSet2D &keypoints, const std::vector<Polyline> &contour);

struct SyntheticFrame {
  FrameRecord record; // image paths left empty
  OracleOutput images;
};

inline constexpr double kDefaultMaxPoseDelta = 25.0;

/// Mouth of frame i in the head pose of frame j. Returns nullopt (skip) when
/// the two poses differ by more than `max_pose_delta` degrees.
std::optional<SyntheticFrame> synthesize_frame(const DatasetManifest &dataset, std::size_t i,
                                               std::size_t j, const Oracle &oracle,
                                               double max_pose_delta = kDefaultMaxPoseDelta);

struct AugmentOptions {
  double ratio = 0.8;      // synthetic fraction
  std::int64_t count = 0;  // total frames emitted
  std::uint64_t seed = 0;
  double max_pose_delta = kDefaultMaxPoseDelta;
};

/// ⌈ratio·count⌉ synthetic frames from uniformly drawn (i, j) pairs plus
/// count − ⌈ratio·count⌉ distinct real frames. Writes synthetic images under
/// `out`/frames and `out`/manifest.json; real frames keep their source images.
DatasetManifest build_augmented_dataset(const DatasetManifest &dataset, const Oracle &oracle,
                                        const AugmentOptions &options,
                                        const std::filesystem::path &out);

struct JitterOptions {
  std::int64_t count = 0;
  std::uint64_t seed = 0;
  double max_shift = 0.03;    // fraction of the canvas
  double max_rotation = 5.0;  // degrees
};

/// Classical baseline: real frames under small random in-plane rotations and
/// shifts (images, keypoints and contours alike). Audio and pose stay paired.
DatasetManifest build_jitter_dataset(const DatasetManifest &dataset, const JitterOptions &options,
                                     const std::filesystem::path &out);

/// Mouth net first, then the head net teacher-forced with ground-truth mouths.
/// Only real frames are used. With `out`, each stage logs and checkpoints
/// under its own tag.
Oracle train_oracle(const DatasetManifest &dataset, const OracleConfig &cfg,
                    const TrainConfig &train,
                    const std::optional<std::filesystem::path> &out = std::nullopt);

} // namespace talkhead
