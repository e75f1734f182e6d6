#pragma once

// Keypoint pose algebra: K = proj(P·K^f) and its inverse with depth taken
// from the posed canonical face.

#include "talkhead/tensor.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

namespace talkhead {

using Point2 = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;
using Point4 = Eigen::Vector4d;
using Polyline = std::vector<Point2>;

/// Which keypoint indices belong to the mouth and which to the upper face.
struct KeypointLayout {
  int count = 0;
  std::vector<int> mouth;
  std::vector<int> upper;

  /// Throws a config error if the sets overlap or leave the index range.
  void validate() const;
};

/// n 2D keypoints in canvas pixels (pixel (i, j) covers [j, j+1) × [i, i+1)).
struct KeypointSet2D {
  std::vector<Point2> points;

  std::size_t size() const { return points.size(); }
  KeypointSet2D select(const std::vector<int> &indices) const;
};

/// n 3D keypoints in unitless model space (x right, y down, z away from camera).
struct CanonicalFace {
  std::vector<Point3> points;
};

/// n homogeneous points; K^f when expressed in the canonical frame.
struct UnposedKeypoints {
  std::vector<Point4> points;
};

/// 4×4 rigid transform.
class PoseMatrix {
public:
  PoseMatrix() : m_(Eigen::Matrix4d::Identity()) {}
  explicit PoseMatrix(const Eigen::Matrix4d &m) : m_(m) {}

  /// R = Rz(roll)·Ry(yaw)·Rx(pitch), angles in degrees; translation in model units.
  static PoseMatrix from_euler(double yaw_deg, double pitch_deg, double roll_deg,
                               const Point3 &translation = Point3::Zero());
  static PoseMatrix from_row_major(const std::vector<double> &values);

  const Eigen::Matrix4d &matrix() const { return m_; }
  Eigen::Matrix3d rotation() const { return m_.topLeftCorner<3, 3>(); }
  Point3 translation() const { return m_.topRightCorner<3, 1>(); }
  std::vector<double> row_major() const;

  /// Throws a geometry error unless the rotation block is orthonormal with
  /// det +1 (tolerance 1e-6) and the bottom row is (0, 0, 0, 1).
  void validate() const;

  PoseMatrix inverse() const;

private:
  Eigen::Matrix4d m_;
};

/// Total rotation angle (degrees) of the relative rotation between two poses.
double rotation_angle_between(const PoseMatrix &a, const PoseMatrix &b);

struct Projection {
  enum class Kind { orthographic, perspective };
  Kind kind = Kind::orthographic;
  double scale = 1.0; // orthographic: pixels per model unit
  double focal = 500.0; // perspective: focal length in pixels
  double cx = 0.0;
  double cy = 0.0;

  static Projection orthographic(double scale, double cx, double cy);
  static Projection perspective(double focal, double cx, double cy);

  /// Camera-space point to canvas pixels.
  Point2 apply(const Point3 &camera) const;
  /// Canvas pixels plus camera-space depth back to a camera-space point.
  Point3 invert(const Point2 &pixel, double depth) const;
};

UnposedKeypoints lift(const CanonicalFace &face);

/// K = proj(P·K^f). Perspective points at or behind the camera plane raise a
/// geometry error.
KeypointSet2D project(const UnposedKeypoints &kf, const PoseMatrix &pose,
                      const Projection &proj);

/// Camera-space points (x, y, z, 1): observed 2D positions lifted with the
/// depth of the correspondingly posed canonical point. Projecting the result
/// with the identity pose reproduces the observation.
UnposedKeypoints recover_depth(const KeypointSet2D &k2d, const CanonicalFace &canonical,
                               const PoseMatrix &pose, const Projection &proj);

/// K^f = P⁻¹·proj⁻¹(K), depth from the posed canonical face.
UnposedKeypoints unpose(const KeypointSet2D &k2d, const CanonicalFace &canonical,
                        const PoseMatrix &pose, const Projection &proj);

/// Keypoints of frame j with the mouth of frame i re-posed into pose j.
KeypointSet2D mash(const KeypointSet2D &k_i, const PoseMatrix &pose_i,
                   const KeypointSet2D &k_j, const PoseMatrix &pose_j,
                   const CanonicalFace &canonical, const Projection &proj,
                   const KeypointLayout &layout);

/// Disc radius at canvas size S: 2 px at 512, proportional otherwise.
double default_disc_radius(std::int64_t canvas);

/// Binary drawing (1×S×S): filled discs at the keypoints plus 1-px Bresenham
/// polylines. Out-of-canvas coordinates are clamped with a warning.
Tensor rasterize(const KeypointSet2D &keypoints, const std::vector<Polyline> &contours,
                 std::int64_t canvas, double radius = -1.0);

struct CropRect {
  std::int64_t top = 0;
  std::int64_t left = 0;
  std::int64_t side = 0;

  friend bool operator==(const CropRect &, const CropRect &) = default;
};

/// Drawing of the canvas region `rect` at resolution R×R. Geometry outside the
/// region is dropped rather than clamped.
Tensor rasterize_region(const KeypointSet2D &keypoints, const std::vector<Polyline> &contours,
                        const CropRect &rect, std::int64_t resolution, double canvas_radius);

} // namespace talkhead
