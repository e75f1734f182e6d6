#include "talkhead/rig.hpp"
#include "talkhead/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace talkhead {

namespace {

constexpr int kOutlineSegments = 64;
constexpr int kLipSegments = 24;
constexpr double kLipBulge = 0.03; // lip midpoints sit this much nearer the camera than the corners

void check(bool ok, const std::string &what) { require(ok, ErrorKind::config, "rig: " + what); }

std::vector<Point3> ellipse(const Point3 &centre, double a, double b, int segments) {
  std::vector<Point3> out;
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    out.push_back(centre + Point3(a * std::cos(t), b * std::sin(t), 0));
  }
  return out;
}

// Closed lip loop through the left corner, top, right corner and bottom.
std::vector<Point3> lip_loop(const RigParams &p, double half_width, double half_height) {
  std::vector<Point3> out;
  for (int i = 0; i <= kLipSegments; ++i) { // left to right across the top
    const double t = std::numbers::pi * i / kLipSegments;
    out.emplace_back(-half_width * std::cos(t), p.mouth_y - half_height * std::sin(t),
                     p.feature_z - kLipBulge * std::sin(t));
  }
  for (int i = kLipSegments - 1; i > 0; --i) { // right to left across the bottom
    const double t = std::numbers::pi * i / kLipSegments;
    out.emplace_back(-half_width * std::cos(t), p.mouth_y + half_height * std::sin(t),
                     p.feature_z - kLipBulge * std::sin(t));
  }
  return out;
}

double inner_half_width(const RigParams &p) { return 0.85 * p.mouth_half_width; }

// Model-space point to pixels in a viewport with the given origin and zoom.
struct View {
  const PoseMatrix &pose;
  const Projection &proj;
  Point2 origin{0, 0};
  double zoom = 1.0;

  Polyline operator()(const std::vector<Point3> &pts) const {
    Polyline out;
    out.reserve(pts.size());
    for (const auto &p : pts) {
      const Point4 c = pose.matrix() * p.homogeneous();
      out.push_back((proj.apply(c.head<3>()) - origin) * zoom);
    }
    return out;
  }
};

Tensor paint_face(const RigParams &p, double o, const View &view, std::int64_t size) {
  using namespace rig;
  Tensor img = solid_image(size, size, kBackground);
  fill_polygon(img, view(ellipse({0, 0, 0}, p.face_a, p.face_b, kOutlineSegments)), kSkin);
  for (double side : {-1.0, 1.0}) {
    fill_polygon(img, view(ellipse({side * p.eye_x, p.brow_y, p.feature_z}, 0.13, 0.025, 32)), kDark);
    fill_polygon(img,
                 view(ellipse({side * p.eye_x, p.eye_y, p.feature_z}, p.eye_half_width,
                              p.eye_half_height, 32)),
                 kDark);
  }
  fill_polygon(img, view({{0, -0.15, -0.3}, {0.08, 0.2, -0.3}, {0, 0.15, -0.6}, {-0.08, 0.2, -0.3}}),
               kNose);
  const double gap = o * p.max_aperture / 2;
  fill_polygon(img, view(lip_loop(p, p.mouth_half_width, gap + p.lip_thickness)), kLips);
  if (gap > 0)
    fill_polygon(img, view(lip_loop(p, inner_half_width(p), gap)), kInterior);
  return quantize8(img);
}

} // namespace

void RigParams::validate() const {
  check(rho >= 0 && rho <= 1, "rho must lie in [0, 1]");
  check(noise_scale >= 0, "noise_scale must be non-negative");
  check(face_a > 0 && face_b > 0 && scale_fraction > 0, "face axes and scale must be positive");
  check(max_aperture >= 0 && lip_thickness >= 0 && mouth_half_width > 0,
        "mouth dimensions must be non-negative");
  check(pitch_max >= 0 && yaw_max >= 0 && roll_max >= 0 && translation_max >= 0,
        "pose ranges must be non-negative");
}

KeypointLayout rig_layout() {
  KeypointLayout l;
  l.count = rig::kLandmarks;
  for (int i = 0; i < rig::kMouthBegin; ++i)
    l.upper.push_back(i);
  for (int i = rig::kMouthBegin; i < rig::kLandmarks; ++i)
    l.mouth.push_back(i);
  return l;
}

std::vector<std::vector<int>> rig_strokes() {
  const int m = rig::kMouthBegin;
  return {{m, m + 1, m + 2, m + 3, m}, {m + 4, m + 5, m + 6, m + 7, m + 4}};
}

std::vector<Point3> rig_landmarks(const RigParams &p, double o) {
  std::vector<Point3> k;
  for (int i = 0; i < 8; ++i) {
    const double t = std::numbers::pi * i / 4;
    k.emplace_back(p.face_a * std::cos(t), p.face_b * std::sin(t), 0);
  }
  for (double side : {-1.0, 1.0})
    for (double end : {-1.0, 1.0})
      k.emplace_back(side * p.eye_x + end * p.eye_half_width, p.eye_y, p.feature_z);
  k.emplace_back(-p.eye_x, p.brow_y, p.feature_z);
  k.emplace_back(p.eye_x, p.brow_y, p.feature_z);
  k.emplace_back(0, 0.15, -0.6);
  k.emplace_back(0, -0.15, -0.3);
  const double gap = o * p.max_aperture / 2;
  const double z_mid = p.feature_z - kLipBulge;
  for (const auto &[hw, hh] : {std::pair{p.mouth_half_width, gap + p.lip_thickness},
                               std::pair{inner_half_width(p), gap}}) {
    k.emplace_back(-hw, p.mouth_y, p.feature_z);
    k.emplace_back(0, p.mouth_y - hh, z_mid);
    k.emplace_back(hw, p.mouth_y, p.feature_z);
    k.emplace_back(0, p.mouth_y + hh, z_mid);
  }
  return k;
}

CanonicalFace rig_canonical(const RigParams &params) { return {rig_landmarks(params, 0.5)}; }

Projection rig_projection(const RigParams &params, std::int64_t canvas) {
  const double half = static_cast<double>(canvas) / 2;
  return Projection::orthographic(params.scale_fraction * static_cast<double>(canvas), half, half);
}

CropRect rig_crop(const RigParams &params, std::int64_t canvas) {
  const auto side = canvas * 3 / 8;
  const auto proj = rig_projection(params, canvas);
  const Point2 centre = proj.apply({0, params.mouth_y, params.feature_z});
  const auto half = static_cast<double>(side) / 2;
  CropRect r{static_cast<std::int64_t>(std::lround(centre.y() - half)),
             static_cast<std::int64_t>(std::lround(centre.x() - half)), side};
  r.top = std::clamp<std::int64_t>(r.top, 0, canvas - side);
  r.left = std::clamp<std::int64_t>(r.left, 0, canvas - side);
  return r;
}

std::vector<Polyline> rig_contour(const RigParams &params, const PoseMatrix &pose,
                                  std::int64_t canvas) {
  const auto proj = rig_projection(params, canvas);
  auto loop = View{pose, proj}(ellipse({0, 0, 0}, params.face_a, params.face_b, kOutlineSegments));
  loop.push_back(loop.front());
  return {loop};
}

RigFrame rig_render(const RigParams &params, const PoseMatrix &pose, double openness,
                    std::int64_t canvas) {
  require(openness >= 0 && openness <= 1, ErrorKind::usage,
          "rig openness " + std::to_string(openness) + " outside [0, 1]");
  pose.validate();
  const auto proj = rig_projection(params, canvas);
  const auto crop = rig_crop(params, canvas);
  RigFrame f;
  f.head = paint_face(params, openness, View{pose, proj}, canvas);
  const View mouth_view{pose, proj,
                        Point2(static_cast<double>(crop.left), static_cast<double>(crop.top)),
                        static_cast<double>(canvas) / static_cast<double>(crop.side)};
  f.mouth = paint_face(params, openness, mouth_view, canvas);
  f.keypoints = project(UnposedKeypoints{[&] {
                          std::vector<Point4> pts;
                          for (const auto &p : rig_landmarks(params, openness))
                            pts.push_back(p.homogeneous());
                          return pts;
                        }()},
                        pose, proj);
  f.contour = rig_contour(params, pose, canvas);
  return f;
}

RigSequence rig_sequence(const RigParams &params, std::int64_t frames, std::uint64_t seed) {
  params.validate();
  require(frames >= 2, ErrorKind::usage, "rig sequence needs at least 2 frames");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Each trajectory is two sinusoids with random periods and phases, in [-1, 1].
  auto trajectory = [&] {
    const double p1 = 60 + 90 * unit(rng), p2 = 15 + 25 * unit(rng);
    const double f1 = 2 * std::numbers::pi * unit(rng), f2 = 2 * std::numbers::pi * unit(rng);
    std::vector<double> v(static_cast<std::size_t>(frames));
    for (std::int64_t t = 0; t < frames; ++t) {
      const double x = static_cast<double>(t);
      v[static_cast<std::size_t>(t)] =
          0.6 * std::sin(2 * std::numbers::pi * x / p1 + f1) + 0.4 * std::sin(2 * std::numbers::pi * x / p2 + f2);
    }
    return v;
  };
  const auto pitch = trajectory(), yaw = trajectory(), roll = trajectory();
  const auto tx = trajectory(), ty = trajectory();
  RigSequence seq;
  for (std::int64_t t = 0; t < frames; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const double u = unit(rng), e = gauss(rng);
    const double p_hat = (pitch[i] + 1) / 2;
    const double o = params.rho * p_hat + (1 - params.rho) * u + params.noise_scale * e;
    seq.openness.push_back(std::clamp(o, 0.0, 1.0));
    seq.pitch.push_back(pitch[i] * params.pitch_max);
    seq.poses.push_back(PoseMatrix::from_euler(
        yaw[i] * params.yaw_max, seq.pitch.back(), roll[i] * params.roll_max,
        Point3(tx[i] * params.translation_max, ty[i] * params.translation_max, 0)));
  }
  return seq;
}

std::vector<float> viseme_proxy(double openness, std::int64_t k) {
  require(k >= 2, ErrorKind::config, "the rig viseme proxy needs k >= 2");
  std::vector<float> v(static_cast<std::size_t>(k), 0.f);
  v[0] = static_cast<float>(1 - openness);
  v[1] = static_cast<float>(openness);
  return v;
}

double dark_fraction(const Tensor &image, const CropRect &rect, double threshold) {
  require(image.rank() == 3 && image.dim(0) == 3, ErrorKind::shape,
          "dark_fraction expects 3×H×W, got " + shape_string(image.shape()));
  require(rect.top >= 0 && rect.left >= 0 && rect.top + rect.side <= image.dim(1) &&
              rect.left + rect.side <= image.dim(2) && rect.side > 0,
          ErrorKind::usage, "crop rect outside image");
  std::int64_t dark = 0;
  for (auto y = rect.top; y < rect.top + rect.side; ++y)
    for (auto x = rect.left; x < rect.left + rect.side; ++x) {
      const double luma = 127.5 * (0.299 * (image.at(0, y, x) + 1) + 0.587 * (image.at(1, y, x) + 1) +
                                   0.114 * (image.at(2, y, x) + 1));
      dark += luma < threshold;
    }
  return static_cast<double>(dark) / static_cast<double>(rect.side * rect.side);
}

void calibrate_probe(RigParams &params, std::int64_t canvas) {
  const auto crop = rig_crop(params, canvas);
  auto fraction = [&](double o) {
    return dark_fraction(rig_render(params, PoseMatrix(), o, canvas).head, crop,
                         params.probe_threshold);
  };
  const double closed = fraction(0.0), open = fraction(1.0);
  require(open > closed, ErrorKind::config,
          "probe calibration: dark fraction does not grow with openness");
  params.probe_gain = 1.0 / (open - closed);
  params.probe_offset = -closed * params.probe_gain;
}

double pearson(const std::vector<double> &a, const std::vector<double> &b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorKind::usage,
          "pearson needs two equal-length samples");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

} // namespace talkhead
