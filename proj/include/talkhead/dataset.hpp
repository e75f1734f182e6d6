#pragma once

#include "talkhead/features.hpp"
#include "talkhead/geometry.hpp"
#include "talkhead/rig.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace talkhead {

struct IdentityConfig {
  KeypointLayout layout;
  /// Keypoint index polylines drawn into oracle drawings (may be empty).
  std::vector<std::vector<int>> strokes;
  CanonicalFace canonical;
  Projection projection;
};

struct Provenance {
  std::int64_t mouth_source = 0; // frame i: mouth keypoints and audio
  std::int64_t pose_source = 0;  // frame j: head pose and upper face
  friend bool operator==(const Provenance &, const Provenance &) = default;
};

struct FrameRecord {
  std::string image;       // relative to the manifest directory
  std::string mouth_image; // likewise
  KeypointSet2D keypoints;
  PoseMatrix pose;
  std::int64_t feature_index = 0;
  CropRect crop;
  bool synthetic = false;
  std::optional<Provenance> provenance;
  std::vector<Polyline> contour;
  std::optional<double> openness; // rig ground truth when known
};

struct DatasetManifest {
  int version = 1;
  std::int64_t canvas = 512;
  IdentityConfig identity;
  std::string timeline;
  std::vector<FrameRecord> frames;
  std::optional<RigParams> rig;
  /// Directory relative paths resolve against; not serialized.
  std::filesystem::path root;

  std::filesystem::path resolve(const std::string &relative) const { return root / relative; }
};

bool operator==(const FrameRecord &a, const FrameRecord &b);
bool operator==(const DatasetManifest &a, const DatasetManifest &b);

/// Writes the manifest JSON. Paths inside are written as stored.
void save_manifest(const DatasetManifest &manifest, const std::filesystem::path &path);
/// Schema violations raise schema errors naming a JSON pointer; absent image or
/// timeline files raise one missing-file error listing every absent path.
DatasetManifest load_manifest(const std::filesystem::path &path);

/// Re-expresses every path of `manifest` relative to `new_root`.
DatasetManifest rebase(const DatasetManifest &manifest, const std::filesystem::path &new_root);

struct FrameImages {
  Tensor head;  // 3×S×S in [-1, 1]
  Tensor mouth; // 3×S×S
};
FrameImages load_frame_images(const DatasetManifest &manifest, std::size_t index);

/// Renderer conditioning: upper-face keypoints plus contours, replicated to `channels`.
Tensor renderer_drawing(const IdentityConfig &id, const FrameRecord &frame, std::int64_t canvas,
                        std::int64_t channels = 3);
/// Oracle head-net drawing: every keypoint, contours and strokes; 1×S×S.
Tensor oracle_head_drawing(const IdentityConfig &id, const FrameRecord &frame, std::int64_t canvas);
/// Oracle mouth-net drawing of the crop region at M×M.
Tensor oracle_mouth_drawing(const IdentityConfig &id, const FrameRecord &frame, std::int64_t canvas,
                            std::int64_t resolution);

IdentityConfig rig_identity(const RigParams &params, std::int64_t canvas);

struct RigDataset {
  DatasetManifest manifest;
  FeatureTimeline timeline;
};

/// Renders T rig frames into `out` (frames/, timeline.json, manifest.json).
RigDataset rig_dataset(const RigParams &params, std::int64_t frames, std::uint64_t seed,
                       std::int64_t canvas, std::int64_t k, const std::filesystem::path &out);

} // namespace talkhead
