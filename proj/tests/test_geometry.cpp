#include "talkhead/geometry.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace talkhead;

namespace {

CanonicalFace toy_face() {
  CanonicalFace f;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 12; ++i)
    f.points.emplace_back(u(rng), u(rng), 0.3 * u(rng));
  return f;
}

KeypointLayout toy_layout() {
  KeypointLayout l;
  l.count = 12;
  l.mouth = {8, 9, 10, 11};
  l.upper = {0, 1, 2, 3, 4, 5, 6, 7};
  return l;
}

PoseMatrix random_pose(std::mt19937_64 &rng, double depth) {
  std::uniform_real_distribution<double> angle(-30.0, 30.0), shift(-0.2, 0.2);
  return PoseMatrix::from_euler(angle(rng), angle(rng), angle(rng),
                                Point3(shift(rng), shift(rng), depth + shift(rng)));
}

double max_error(const KeypointSet2D &a, const KeypointSet2D &b) {
  double e = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    e = std::max(e, (a.points[i] - b.points[i]).cwiseAbs().maxCoeff());
  return e;
}

const Projection kOrtho = Projection::orthographic(184.32, 256, 256);
const Projection kPersp = Projection::perspective(500, 256, 256);

} // namespace

TEST(Geometry, IdentityOrthographicKeepsCanonicalXY) {
  const auto face = toy_face();
  const auto k = project(lift(face), PoseMatrix(), Projection::orthographic(1, 0, 0));
  for (std::size_t i = 0; i < face.points.size(); ++i) {
    EXPECT_EQ(k.points[i].x(), face.points[i].x());
    EXPECT_EQ(k.points[i].y(), face.points[i].y());
  }
}

TEST(Geometry, TranslationShiftsByScaledOffset) {
  const auto face = toy_face();
  const auto base = project(lift(face), PoseMatrix(), kOrtho);
  const auto moved =
      project(lift(face), PoseMatrix::from_euler(0, 0, 0, Point3(0.1, -0.05, 0)), kOrtho);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_NEAR(moved.points[i].x() - base.points[i].x(), 0.1 * kOrtho.scale, 1e-9);
    EXPECT_NEAR(moved.points[i].y() - base.points[i].y(), -0.05 * kOrtho.scale, 1e-9);
  }
}

TEST(Geometry, PerspectiveYawMatchesDirectMatrixMultiply) {
  const auto face = toy_face();
  const double t = 20.0 * M_PI / 180.0;
  // Rotation about y written out by hand, then a camera offset of 4 units.
  double m[4][4] = {{std::cos(t), 0, std::sin(t), 0},
                    {0, 1, 0, 0},
                    {-std::sin(t), 0, std::cos(t), 4},
                    {0, 0, 0, 1}};
  std::vector<double> flat;
  for (auto &row : m)
    flat.insert(flat.end(), row, row + 4);
  const auto k = project(lift(face), PoseMatrix::from_row_major(flat), kPersp);
  const auto via_euler =
      project(lift(face), PoseMatrix::from_euler(20, 0, 0, Point3(0, 0, 4)), kPersp);
  for (std::size_t i = 0; i < face.points.size(); ++i) {
    const double p[4] = {face.points[i].x(), face.points[i].y(), face.points[i].z(), 1};
    double c[4] = {0, 0, 0, 0};
    for (int r = 0; r < 4; ++r)
      for (int s = 0; s < 4; ++s)
        c[r] += m[r][s] * p[s];
    EXPECT_NEAR(k.points[i].x(), 256 + 500 * c[0] / c[2], 1e-9);
    EXPECT_NEAR(k.points[i].y(), 256 + 500 * c[1] / c[2], 1e-9);
    EXPECT_NEAR(via_euler.points[i].x(), k.points[i].x(), 1e-9);
  }
}

TEST(Geometry, PointBehindCameraIsDegenerate) {
  const auto face = toy_face();
  try {
    project(lift(face), PoseMatrix(), kPersp);
    FAIL() << "expected a geometry error";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::geometry);
  }
}

TEST(Geometry, InvalidPoseRejected) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 0) = 2;
  EXPECT_THROW(project(lift(toy_face()), PoseMatrix(m), kOrtho), Error);
  m = Eigen::Matrix4d::Identity();
  m(0, 0) = -1; // reflection
  EXPECT_THROW(PoseMatrix(m).validate(), Error);
}

TEST(Geometry, RecoverDepthRoundTrip) {
  const auto face = toy_face();
  std::mt19937_64 rng(3);
  const auto pose = random_pose(rng, 0);
  const auto k = project(lift(face), pose, kOrtho);
  const auto lifted = recover_depth(k, face, pose, kOrtho);
  EXPECT_LE(max_error(project(lifted, PoseMatrix(), kOrtho), k), 1e-9);
}

TEST(Geometry, RecoverDepthIdentityUsesCanonicalZ) {
  const auto face = toy_face();
  const auto k = project(lift(face), PoseMatrix(), kOrtho);
  const auto lifted = recover_depth(k, face, PoseMatrix(), kOrtho);
  for (std::size_t i = 0; i < face.points.size(); ++i)
    EXPECT_EQ(lifted.points[i].z(), face.points[i].z());
}

TEST(Geometry, RecoverDepthPitchMatchesPosedCanonical) {
  const auto face = toy_face();
  const auto pose = PoseMatrix::from_euler(0, 15, 0, Point3(0, 0, 4));
  const auto k = project(lift(face), pose, kPersp);
  const auto lifted = recover_depth(k, face, pose, kPersp);
  const double t = 15.0 * M_PI / 180.0;
  for (std::size_t i = 0; i < face.points.size(); ++i) {
    const auto &p = face.points[i];
    const double z = std::sin(t) * p.y() + std::cos(t) * p.z() + 4;
    EXPECT_NEAR(lifted.points[i].z(), z, 1e-12);
  }
}

TEST(Geometry, UnposeIdentityInvertsCanvasScale) {
  KeypointSet2D k;
  k.points = {{300.0, 200.0}, {256.0, 256.0}};
  CanonicalFace face;
  face.points = {{0, 0, 0.5}, {0, 0, -0.5}};
  const auto kf = unpose(k, face, PoseMatrix(), kOrtho);
  EXPECT_NEAR(kf.points[0].x(), 44.0 / kOrtho.scale, 1e-15);
  EXPECT_NEAR(kf.points[0].y(), -56.0 / kOrtho.scale, 1e-15);
  EXPECT_EQ(kf.points[1].x(), 0.0);
  EXPECT_EQ(kf.points[0].w(), 1.0);
}

TEST(Geometry, UnposeProjectRoundTripOrthographic) {
  const auto face = toy_face();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> jitter(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pose = random_pose(rng, 0);
    auto k = project(lift(face), pose, kOrtho);
    for (auto &p : k.points) // off-canonical observations still round-trip
      p += Point2(jitter(rng), jitter(rng));
    EXPECT_LE(max_error(project(unpose(k, face, pose, kOrtho), pose, kOrtho), k), 1e-9);
  }
}

TEST(Geometry, UnposeProjectRoundTripPerspective) {
  const auto face = toy_face();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> jitter(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pose = random_pose(rng, 4);
    auto k = project(lift(face), pose, kPersp);
    for (auto &p : k.points)
      p += Point2(jitter(rng), jitter(rng));
    EXPECT_LE(max_error(project(unpose(k, face, pose, kPersp), pose, kPersp), k), 1e-6);
  }
}

TEST(Geometry, UnposeOfExactProjectionRecoversCanonical) {
  const auto face = toy_face();
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pose = random_pose(rng, 0);
    const auto kf = unpose(project(lift(face), pose, kOrtho), face, pose, kOrtho);
    for (std::size_t i = 0; i < face.points.size(); ++i)
      EXPECT_LE((kf.points[i].head<3>() - face.points[i]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Geometry, UnposeUnderAReprojectUnderB) {
  const auto face = toy_face();
  std::mt19937_64 rng(14);
  for (const auto &proj : {kOrtho, kPersp}) {
    const double depth = proj.kind == Projection::Kind::perspective ? 4 : 0;
    const auto a = random_pose(rng, depth), b = random_pose(rng, depth);
    const auto kf = unpose(project(lift(face), a, proj), face, a, proj);
    EXPECT_LE(max_error(project(kf, b, proj), project(lift(face), b, proj)), 1e-6);
  }
}

TEST(Geometry, SelfMashIsIdentity) {
  const auto face = toy_face();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> jitter(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pose = random_pose(rng, 0);
    auto k = project(lift(face), pose, kOrtho);
    for (auto &p : k.points)
      p += Point2(jitter(rng), jitter(rng));
    EXPECT_LE(max_error(mash(k, pose, k, pose, face, kOrtho, toy_layout()), k), 1e-9);
  }
}

TEST(Geometry, SamePoseMashTransfersMouth) {
  const auto face = toy_face();
  const auto layout = toy_layout();
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> jitter(-3, 3);
  const auto pose = random_pose(rng, 0);
  auto ki = project(lift(face), pose, kOrtho), kj = ki;
  for (auto &p : ki.points)
    p += Point2(jitter(rng), jitter(rng));
  for (auto &p : kj.points)
    p += Point2(jitter(rng), jitter(rng));
  const auto m = mash(ki, pose, kj, pose, face, kOrtho, layout);
  for (int idx : layout.mouth)
    EXPECT_LE((m.points[idx] - ki.points[idx]).cwiseAbs().maxCoeff(), 1e-9);
  for (int idx : layout.upper)
    EXPECT_TRUE(m.points[idx] == kj.points[idx]);
}

TEST(Geometry, MashKeepsUpperFaceBitEqual) {
  const auto face = toy_face();
  const auto layout = toy_layout();
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pi = random_pose(rng, 0), pj = random_pose(rng, 0);
    const auto ki = project(lift(face), pi, kOrtho), kj = project(lift(face), pj, kOrtho);
    const auto m = mash(ki, pi, kj, pj, face, kOrtho, layout);
    for (int idx : layout.upper)
      EXPECT_TRUE(m.points[idx] == kj.points[idx]);
    // Exact observations: the mouth lands where the canonical mouth projects under pose j.
    for (int idx : layout.mouth)
      EXPECT_LE((m.points[idx] - kj.points[idx]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Geometry, LayoutValidation) {
  auto l = toy_layout();
  EXPECT_NO_THROW(l.validate());
  l.upper.push_back(8);
  EXPECT_THROW(l.validate(), Error);
  l = toy_layout();
  l.mouth.push_back(12);
  EXPECT_THROW(l.validate(), Error);
}

TEST(Geometry, RotationAngleBetween) {
  const auto a = PoseMatrix::from_euler(10, 0, 0), b = PoseMatrix::from_euler(-15, 0, 0);
  EXPECT_NEAR(rotation_angle_between(a, b), 25.0, 1e-9);
  EXPECT_NEAR(rotation_angle_between(a, a), 0.0, 1e-6);
}

TEST(Rasterize, SingleDiscHasThirteenPixels) {
  KeypointSet2D k;
  k.points = {{256.5, 256.5}};
  const auto t = rasterize(k, {}, 512, 2.0);
  EXPECT_EQ(t.shape(), (Shape{1, 512, 512}));
  EXPECT_EQ(t.sum(), 13.0);
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx)
      EXPECT_EQ(t.at(0, 256 + dy, 256 + dx), dx * dx + dy * dy <= 4 ? 1.f : 0.f);
  EXPECT_EQ(default_disc_radius(512), 2.0);
}

TEST(Rasterize, HorizontalLineFillsRow) {
  KeypointSet2D k;
  k.points = {{0.0, 0.0}};
  const auto t = rasterize(k, {Polyline{{0.0, 10.0}, {511.0, 10.0}}}, 512, 0.0);
  for (int x = 0; x < 512; ++x)
    EXPECT_EQ(t.at(0, 10, x), 1.f);
  EXPECT_EQ(t.sum(), 513.0); // row plus the zero-radius keypoint at the origin
}

TEST(Rasterize, BinaryDeterministicAndOrderIndependent) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 128);
  KeypointSet2D k;
  for (int i = 0; i < 30; ++i)
    k.points.emplace_back(u(rng), u(rng));
  Polyline poly;
  for (int i = 0; i < 10; ++i)
    poly.emplace_back(u(rng), u(rng));
  const auto a = rasterize(k, {poly}, 128);
  EXPECT_TRUE(a == rasterize(k, {poly}, 128));
  auto shuffled = k;
  std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
  EXPECT_TRUE(a == rasterize(shuffled, {poly}, 128));
  for (float v : a.data())
    EXPECT_TRUE(v == 0.f || v == 1.f);
}

TEST(Rasterize, EmptyKeypointsIsUsageError) {
  try {
    rasterize(KeypointSet2D{}, {}, 64);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::usage);
  }
}

TEST(Rasterize, OutOfCanvasIsClamped) {
  KeypointSet2D k;
  k.points = {{-10.0, 500.0}};
  const auto t = rasterize(k, {}, 64, 0.0);
  EXPECT_EQ(t.sum(), 1.0);
  EXPECT_EQ(t.at(0, 63, 0), 1.f);
}

TEST(Rasterize, RegionMatchesCanvasAtUnitZoom) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(20, 44);
  KeypointSet2D k;
  for (int i = 0; i < 8; ++i)
    k.points.emplace_back(u(rng), u(rng));
  const Polyline poly{{22.0, 30.0}, {40.0, 35.0}};
  const auto full = rasterize(k, {poly}, 64, 1.0);
  const CropRect rect{16, 16, 32};
  const auto region = rasterize_region(k, {poly}, rect, 32, 1.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      EXPECT_EQ(region.at(0, y, x), full.at(0, y + 16, x + 16));
}
