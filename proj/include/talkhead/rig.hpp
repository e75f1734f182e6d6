#pragma once

// Procedural toy face standing in for captured footage. Every frame is an
// exact function of (pose, mouth openness), so any combination has ground truth.

#include "talkhead/geometry.hpp"
#include "talkhead/paint.hpp"

#include <cstdint>
#include <vector>

namespace talkhead {

struct RigParams {
  // Identity geometry in model units.
  double face_a = 0.75;
  double face_b = 1.0;
  double eye_x = 0.3;
  double eye_y = -0.25;
  double feature_z = -0.1;
  double eye_half_width = 0.1;
  double eye_half_height = 0.04;
  double brow_y = -0.45;
  double mouth_y = 0.5;
  double mouth_half_width = 0.3;
  double lip_thickness = 0.05;
  double max_aperture = 0.16; // inner lip gap at openness 1
  double scale_fraction = 0.36; // orthographic pixels per unit, as a fraction of S

  // Pose ranges (degrees, model units).
  double pitch_max = 8.0;
  double yaw_max = 6.0;
  double roll_max = 4.0;
  double translation_max = 0.05;

  double rho = 0.9;
  double noise_scale = 0.1;

  // Openness probe: o ≈ gain · dark_fraction + offset, fitted by calibrate_probe.
  double probe_threshold = 70.0;
  double probe_gain = 1.0;
  double probe_offset = 0.0;

  void validate() const;
  friend bool operator==(const RigParams &, const RigParams &) = default;
};

namespace rig {

inline constexpr int kLandmarks = 24;
inline constexpr int kMouthBegin = 16;

inline constexpr Rgb8 kBackground = {90, 110, 140};
inline constexpr Rgb8 kSkin = {220, 180, 150};
inline constexpr Rgb8 kDark = {60, 40, 30};
inline constexpr Rgb8 kNose = {200, 150, 120};
inline constexpr Rgb8 kLips = {180, 80, 80};
inline constexpr Rgb8 kInterior = {50, 20, 20};

} // namespace rig

/// Indices 0-15 upper face (outline ×8, eye corners ×4, brows ×2, nose tip,
/// nose bridge); 16-23 mouth (outer L, top, R, bottom, then inner likewise).
KeypointLayout rig_layout();
/// Index loops drawn as polylines in oracle drawings (outer and inner lips).
std::vector<std::vector<int>> rig_strokes();

std::vector<Point3> rig_landmarks(const RigParams &params, double openness);
/// Landmarks at identity pose with openness 0.5.
CanonicalFace rig_canonical(const RigParams &params);
Projection rig_projection(const RigParams &params, std::int64_t canvas);
/// Side 3S/8, centred on the mouth at identity pose.
CropRect rig_crop(const RigParams &params, std::int64_t canvas);

struct RigFrame {
  Tensor head;  // 3×S×S, 8-bit quantized
  Tensor mouth; // 3×S×S rendering of the crop rect
  KeypointSet2D keypoints;
  std::vector<Polyline> contour;
};

RigFrame rig_render(const RigParams &params, const PoseMatrix &pose, double openness,
                    std::int64_t canvas);

/// Projected head outline: a closed 64-segment polyline.
std::vector<Polyline> rig_contour(const RigParams &params, const PoseMatrix &pose,
                                  std::int64_t canvas);

struct RigSequence {
  std::vector<PoseMatrix> poses;
  std::vector<double> pitch;
  std::vector<double> openness;
};

/// Smooth pose trajectories with openness
///   o_t = clamp(ρ·p̂_t + (1 − ρ)·u_t + noise_scale·ε_t, 0, 1),
/// p̂_t the pitch normalized to [0, 1], u_t ~ U[0, 1], ε_t ~ N(0, 1).
RigSequence rig_sequence(const RigParams &params, std::int64_t frames, std::uint64_t seed);

/// Two active indices: 0 carries 1 − o (silence), 1 carries o.
std::vector<float> viseme_proxy(double openness, std::int64_t k);

/// Fraction of crop pixels darker than the threshold (BT.601 luma, 0-255).
double dark_fraction(const Tensor &image, const CropRect &rect, double threshold);
/// Two-point affine fit (o = 0 and o = 1, identity pose) at this canvas size.
void calibrate_probe(RigParams &params, std::int64_t canvas);

double pearson(const std::vector<double> &a, const std::vector<double> &b);

} // namespace talkhead
