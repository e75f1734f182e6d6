#include "talkhead/geometry.hpp"
#include "talkhead/log.hpp"

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <set>

namespace talkhead {

void KeypointLayout::validate() const {
  std::set<int> seen;
  for (const auto *set : {&mouth, &upper})
    for (int i : *set) {
      require(i >= 0 && i < count, ErrorKind::config,
              "keypoint index " + std::to_string(i) + " outside [0, " + std::to_string(count) + ")");
      require(seen.insert(i).second, ErrorKind::config,
              "keypoint index " + std::to_string(i) + " is in both mouth and upper-face sets");
    }
}

KeypointSet2D KeypointSet2D::select(const std::vector<int> &indices) const {
  KeypointSet2D out;
  out.points.reserve(indices.size());
  for (int i : indices)
    out.points.push_back(points.at(static_cast<std::size_t>(i)));
  return out;
}

namespace {
double radians(double deg) { return deg * std::numbers::pi / 180.0; }
} // namespace

PoseMatrix PoseMatrix::from_euler(double yaw_deg, double pitch_deg, double roll_deg,
                                  const Point3 &translation) {
  const Eigen::Matrix3d r =
      (Eigen::AngleAxisd(radians(roll_deg), Eigen::Vector3d::UnitZ()) *
       Eigen::AngleAxisd(radians(yaw_deg), Eigen::Vector3d::UnitY()) *
       Eigen::AngleAxisd(radians(pitch_deg), Eigen::Vector3d::UnitX()))
          .toRotationMatrix();
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = translation;
  return PoseMatrix(m);
}

PoseMatrix PoseMatrix::from_row_major(const std::vector<double> &values) {
  require(values.size() == 16, ErrorKind::schema,
          "pose needs 16 values, got " + std::to_string(values.size()));
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      m(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
  return PoseMatrix(m);
}

std::vector<double> PoseMatrix::row_major() const {
  std::vector<double> out(16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      out[static_cast<std::size_t>(r * 4 + c)] = m_(r, c);
  return out;
}

void PoseMatrix::validate() const {
  const Eigen::Matrix3d r = rotation();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = r.determinant();
  const bool bottom = m_(3, 0) == 0 && m_(3, 1) == 0 && m_(3, 2) == 0 && m_(3, 3) == 1;
  if (!std::isfinite(ortho) || ortho > 1e-6 || std::abs(det - 1.0) > 1e-6 || !bottom)
    fail(ErrorKind::geometry, "pose matrix is not a rigid transform (orthonormality error " +
                                  std::to_string(ortho) + ", det " + std::to_string(det) + ")");
}

PoseMatrix PoseMatrix::inverse() const {
  Eigen::Matrix4d inv;
  bool invertible = false;
  double det = 0;
  m_.computeInverseAndDetWithCheck(inv, det, invertible, 1e-12);
  if (!invertible)
    fail(ErrorKind::geometry, "pose matrix is singular");
  return PoseMatrix(inv);
}

double rotation_angle_between(const PoseMatrix &a, const PoseMatrix &b) {
  const Eigen::Matrix3d rel = a.rotation().transpose() * b.rotation();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

Projection Projection::orthographic(double scale, double cx, double cy) {
  Projection p;
  p.kind = Kind::orthographic;
  p.scale = scale;
  p.cx = cx;
  p.cy = cy;
  return p;
}

Projection Projection::perspective(double focal, double cx, double cy) {
  Projection p;
  p.kind = Kind::perspective;
  p.focal = focal;
  p.cx = cx;
  p.cy = cy;
  return p;
}

namespace {
constexpr double kMinDepth = 1e-9;
}

Point2 Projection::apply(const Point3 &c) const {
  if (kind == Kind::orthographic)
    return {cx + scale * c.x(), cy + scale * c.y()};
  if (!(c.z() > kMinDepth))
    fail(ErrorKind::geometry,
         "point at depth " + std::to_string(c.z()) + " is at or behind the camera plane");
  return {cx + focal * c.x() / c.z(), cy + focal * c.y() / c.z()};
}

Point3 Projection::invert(const Point2 &p, double depth) const {
  if (kind == Kind::orthographic)
    return {(p.x() - cx) / scale, (p.y() - cy) / scale, depth};
  if (!(depth > kMinDepth))
    fail(ErrorKind::geometry, "cannot invert perspective at non-positive depth");
  return {(p.x() - cx) * depth / focal, (p.y() - cy) * depth / focal, depth};
}

UnposedKeypoints lift(const CanonicalFace &face) {
  UnposedKeypoints out;
  out.points.reserve(face.points.size());
  for (const auto &p : face.points)
    out.points.emplace_back(p.x(), p.y(), p.z(), 1.0);
  return out;
}

KeypointSet2D project(const UnposedKeypoints &kf, const PoseMatrix &pose,
                      const Projection &proj) {
  pose.validate();
  KeypointSet2D out;
  out.points.reserve(kf.points.size());
  for (const auto &p : kf.points) {
    require(p.w() != 0.0, ErrorKind::geometry, "homogeneous point with w = 0");
    const Point4 c = pose.matrix() * p;
    out.points.push_back(proj.apply(c.head<3>() / c.w()));
  }
  return out;
}

UnposedKeypoints recover_depth(const KeypointSet2D &k2d, const CanonicalFace &canonical,
                               const PoseMatrix &pose, const Projection &proj) {
  pose.validate();
  require(k2d.size() == canonical.points.size(), ErrorKind::geometry,
          "keypoint count " + std::to_string(k2d.size()) + " does not match canonical face (" +
              std::to_string(canonical.points.size()) + ")");
  UnposedKeypoints out;
  out.points.reserve(k2d.size());
  for (std::size_t i = 0; i < k2d.size(); ++i) {
    const Point4 posed = pose.matrix() * canonical.points[i].homogeneous();
    const Point3 camera = proj.invert(k2d.points[i], posed.z() / posed.w());
    out.points.emplace_back(camera.x(), camera.y(), camera.z(), 1.0);
  }
  return out;
}

UnposedKeypoints unpose(const KeypointSet2D &k2d, const CanonicalFace &canonical,
                        const PoseMatrix &pose, const Projection &proj) {
  const PoseMatrix inv = pose.inverse();
  auto lifted = recover_depth(k2d, canonical, pose, proj);
  for (auto &p : lifted.points)
    p = inv.matrix() * p;
  return lifted;
}

KeypointSet2D mash(const KeypointSet2D &k_i, const PoseMatrix &pose_i,
                   const KeypointSet2D &k_j, const PoseMatrix &pose_j,
                   const CanonicalFace &canonical, const Projection &proj,
                   const KeypointLayout &layout) {
  require(k_i.size() == k_j.size() && static_cast<int>(k_i.size()) == layout.count,
          ErrorKind::geometry, "mash: frames disagree on keypoint count");
  const auto unposed = unpose(k_i, canonical, pose_i, proj);
  UnposedKeypoints mouth;
  for (int idx : layout.mouth)
    mouth.points.push_back(unposed.points[static_cast<std::size_t>(idx)]);
  const auto reposed = project(mouth, pose_j, proj);
  KeypointSet2D out = k_j;
  for (std::size_t m = 0; m < layout.mouth.size(); ++m)
    out.points[static_cast<std::size_t>(layout.mouth[m])] = reposed.points[m];
  return out;
}

double default_disc_radius(std::int64_t canvas) {
  return 2.0 * static_cast<double>(canvas) / 512.0;
}

namespace {

struct Pixel {
  std::int64_t x, y;
};

// Rounds toward the containing pixel.
Pixel to_pixel(const Point2 &p) {
  return {static_cast<std::int64_t>(std::floor(p.x())),
          static_cast<std::int64_t>(std::floor(p.y()))};
}

class Canvas {
public:
  Canvas(std::int64_t size) : t_({1, size, size}), size_(size) {}

  void plot(std::int64_t x, std::int64_t y) {
    if (x >= 0 && y >= 0 && x < size_ && y < size_)
      t_.at(0, y, x) = 1.f;
  }

  void disc(Pixel c, double radius) {
    const auto r = static_cast<std::int64_t>(std::floor(radius));
    const double r2 = radius * radius;
    for (std::int64_t dy = -r; dy <= r; ++dy)
      for (std::int64_t dx = -r; dx <= r; ++dx)
        if (static_cast<double>(dx * dx + dy * dy) <= r2)
          plot(c.x + dx, c.y + dy);
  }

  // Integer Bresenham between pixel centres.
  void line(Pixel a, Pixel b) {
    std::int64_t dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
    const std::int64_t sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
    std::int64_t err = dx + dy;
    for (;;) {
      plot(a.x, a.y);
      if (a.x == b.x && a.y == b.y)
        break;
      const std::int64_t e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        a.x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        a.y += sy;
      }
    }
  }

  Tensor take() { return std::move(t_); }

private:
  Tensor t_;
  std::int64_t size_;
};

Point2 clamp_to_canvas(const Point2 &p, std::int64_t canvas, std::size_t &clamped) {
  const double hi = static_cast<double>(canvas) - 1e-9;
  Point2 q(std::clamp(p.x(), 0.0, hi), std::clamp(p.y(), 0.0, hi));
  if (!(q == p))
    ++clamped;
  if (!std::isfinite(p.x()) || !std::isfinite(p.y()))
    fail(ErrorKind::geometry, "non-finite keypoint coordinate");
  return q;
}

} // namespace

Tensor rasterize(const KeypointSet2D &keypoints, const std::vector<Polyline> &contours,
                 std::int64_t canvas, double radius) {
  require(!keypoints.points.empty(), ErrorKind::usage, "rasterize: empty keypoint set");
  require(canvas > 0, ErrorKind::usage, "rasterize: canvas must be positive");
  if (radius < 0)
    radius = default_disc_radius(canvas);
  Canvas out(canvas);
  std::size_t clamped = 0;
  for (const auto &p : keypoints.points)
    out.disc(to_pixel(clamp_to_canvas(p, canvas, clamped)), radius);
  for (const auto &poly : contours)
    for (std::size_t i = 0; i + 1 < poly.size(); ++i)
      out.line(to_pixel(clamp_to_canvas(poly[i], canvas, clamped)),
               to_pixel(clamp_to_canvas(poly[i + 1], canvas, clamped)));
  if (clamped)
    log::warn("rasterize: clamped " + std::to_string(clamped) +
              " out-of-canvas coordinates to the canvas border");
  return out.take();
}

Tensor rasterize_region(const KeypointSet2D &keypoints, const std::vector<Polyline> &contours,
                        const CropRect &rect, std::int64_t resolution, double canvas_radius) {
  require(rect.side > 0 && resolution > 0, ErrorKind::usage, "rasterize_region: empty region");
  const double zoom = static_cast<double>(resolution) / static_cast<double>(rect.side);
  const Point2 origin(static_cast<double>(rect.left), static_cast<double>(rect.top));
  auto map = [&](const Point2 &p) { return to_pixel((p - origin) * zoom); };
  Canvas out(resolution);
  for (const auto &p : keypoints.points)
    out.disc(map(p), canvas_radius * zoom);
  for (const auto &poly : contours)
    for (std::size_t i = 0; i + 1 < poly.size(); ++i)
      out.line(map(poly[i]), map(poly[i + 1]));
  return out.take();
}

} // namespace talkhead
