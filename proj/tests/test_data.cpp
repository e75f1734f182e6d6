#include "talkhead/dataset.hpp"
#include "talkhead/image_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace talkhead;
namespace fs = std::filesystem;

namespace {

// rho 0.9, T 500, seed 7; measured once and frozen.
constexpr double kPinnedCorrelation = 0.91454984256239313;

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("talkhead_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Blend weight of colour `a` in pixel (y, x) assuming it mixes a and b.
double weight_of(const Tensor &img, std::int64_t y, std::int64_t x, const Rgb8 &a, const Rgb8 &b) {
  double num = 0, den = 0;
  for (int c = 0; c < 3; ++c) {
    const double pa = a[c] / 127.5 - 1, pb = b[c] / 127.5 - 1;
    num += (img.at(c, y, x) - pb) * (pa - pb);
    den += (pa - pb) * (pa - pb);
  }
  return num / den;
}

// True when the 3×3 neighbourhood of p contains mostly-a and mostly-b pixels.
bool edge_near(const Tensor &img, const Point2 &p, const Rgb8 &a, const Rgb8 &b) {
  const auto cx = static_cast<std::int64_t>(std::floor(p.x()));
  const auto cy = static_cast<std::int64_t>(std::floor(p.y()));
  double lo = 1e9, hi = -1e9;
  for (std::int64_t dy = -1; dy <= 1; ++dy)
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      const double w = weight_of(img, cy + dy, cx + dx, a, b);
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  return hi >= 0.5 && lo <= 0.5;
}

UnposedKeypoints homogeneous(const std::vector<Point3> &pts) {
  UnposedKeypoints out;
  for (const auto &p : pts)
    out.points.push_back(p.homogeneous());
  return out;
}

} // namespace

TEST(ImageIO, ByteMapping) {
  EXPECT_EQ(to_byte(-1.f), 0);
  EXPECT_EQ(to_byte(1.f), 255);
  EXPECT_EQ(to_byte(0.f), 128);
  EXPECT_EQ(to_byte(7.f), 255);
  for (int b = 0; b < 256; ++b)
    EXPECT_EQ(to_byte(from_byte(static_cast<std::uint8_t>(b))), b);
}

TEST(ImageIO, PngRoundTrip) {
  const auto dir = scratch("png");
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (std::int64_t channels : {1, 3}) {
    Tensor img({channels, 7, 5});
    for (float &v : img.data())
      v = u(rng);
    write_png(dir / "a.png", img);
    const auto back = read_png(dir / "a.png");
    EXPECT_TRUE(back == quantize8(img));
  }
  try {
    read_png(dir / "absent.png");
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::missing_file);
  }
  fs::remove_all(dir);
}

TEST(Paint, FullCoverageAndHalfPixel) {
  auto img = solid_image(4, 4, {0, 0, 0});
  fill_polygon(img, {{0, 0}, {4, 0}, {4, 4}, {0, 4}}, {255, 255, 255});
  for (float v : img.data())
    EXPECT_FLOAT_EQ(v, 1.f);
  img = solid_image(4, 4, {0, 0, 0});
  fill_polygon(img, {{1.5, 0}, {4, 0}, {4, 4}, {1.5, 4}}, {255, 255, 255});
  EXPECT_FLOAT_EQ(img.at(0, 2, 0), -1.f);
  EXPECT_FLOAT_EQ(img.at(0, 2, 1), 0.f); // half covered: halfway between -1 and 1
  EXPECT_FLOAT_EQ(img.at(0, 2, 2), 1.f);
}

TEST(Paint, CoverageMatchesShoelaceArea) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(2, 62);
  for (int trial = 0; trial < 20; ++trial) {
    Polyline tri{{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
    double area = 0, perimeter = 0;
    for (int i = 0; i < 3; ++i) {
      const auto &a = tri[i], &b = tri[(i + 1) % 3];
      area += a.x() * b.y() - b.x() * a.y();
      perimeter += (b - a).norm();
    }
    area = std::abs(area) / 2;
    auto img = solid_image(64, 64, {0, 0, 0});
    fill_polygon(img, tri, {255, 255, 255});
    double covered = 0;
    for (std::int64_t y = 0; y < 64; ++y)
      for (std::int64_t x = 0; x < 64; ++x)
        covered += (img.at(0, y, x) + 1) / 2;
    // Vertical sampling error is bounded by one sub-row per unit of edge length.
    EXPECT_NEAR(covered, area, perimeter / 8 + 1e-3);
  }
}

TEST(Rig, ClosedMouthHasNoGap) {
  RigParams p;
  const auto f = rig_render(p, PoseMatrix::from_euler(3, -5, 2), 0.0, 512);
  const auto &k = f.keypoints.points;
  EXPECT_NEAR((k[rig::kMouthBegin + 7] - k[rig::kMouthBegin + 5]).norm(), 0.0, 1e-12);
}

TEST(Rig, FullOpennessGapIsMaxAperture) {
  RigParams p;
  const auto f = rig_render(p, PoseMatrix(), 1.0, 512);
  const auto &k = f.keypoints.points;
  const double gap = k[rig::kMouthBegin + 7].y() - k[rig::kMouthBegin + 5].y();
  EXPECT_NEAR(gap, p.max_aperture * p.scale_fraction * 512, 1e-9);
}

TEST(Rig, RenderIsDeterministic) {
  RigParams p;
  const auto pose = PoseMatrix::from_euler(4, 6, -2, Point3(0.02, 0, 0));
  const auto a = rig_render(p, pose, 0.37, 64), b = rig_render(p, pose, 0.37, 64);
  EXPECT_TRUE(a.head == b.head);
  EXPECT_TRUE(a.mouth == b.mouth);
  EXPECT_EQ(a.keypoints.points, b.keypoints.points);
  EXPECT_TRUE(quantize8(a.head) == a.head);
}

TEST(Rig, CanonicalIsHalfOpenIdentity) {
  RigParams p;
  EXPECT_EQ(rig_canonical(p).points, rig_landmarks(p, 0.5));
  EXPECT_NO_THROW(rig_layout().validate());
  EXPECT_EQ(rig_crop(p, 512), (CropRect{252, 160, 192}));
  EXPECT_EQ(rig_crop(p, 64), (CropRect{32, 20, 24}));
}

TEST(Rig, KeypointsSitOnRenderedEdges) {
  RigParams p;
  const auto pose = PoseMatrix::from_euler(-5, 6, 3, Point3(0.03, -0.02, 0));
  const auto f = rig_render(p, pose, 0.6, 512);
  const auto &k = f.keypoints.points;
  for (int i = 0; i < 8; ++i)
    EXPECT_TRUE(edge_near(f.head, k[i], rig::kSkin, rig::kBackground)) << "outline point " << i;
  for (int i : {rig::kMouthBegin, rig::kMouthBegin + 2})
    EXPECT_TRUE(edge_near(f.head, k[i], rig::kLips, rig::kSkin)) << "mouth corner " << i;
  // The rasterized contour passes through the same edge.
  const auto drawing = rasterize(f.keypoints.select(rig_layout().upper), f.contour, 512);
  for (int i = 0; i < 8; ++i) {
    const auto x = static_cast<std::int64_t>(k[i].x()), y = static_cast<std::int64_t>(k[i].y());
    EXPECT_EQ(drawing.at(0, y, x), 1.f);
  }
}

TEST(Rig, CorrelationBounds) {
  RigParams p;
  p.rho = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto s = rig_sequence(p, 500, seed);
    EXPECT_LT(std::abs(pearson(s.pitch, s.openness)), 0.15);
  }
  p.rho = 1;
  p.noise_scale = 0;
  const auto s = rig_sequence(p, 500, 9);
  EXPECT_NEAR(pearson(s.pitch, s.openness), 1.0, 1e-12);
}

TEST(Rig, EntangledCorrelationRegression) {
  RigParams p; // rho 0.9
  const auto s = rig_sequence(p, 500, 7);
  const double corr = pearson(s.pitch, s.openness);
  EXPECT_GE(corr, 0.75);
  EXPECT_LE(corr, 0.98);
  EXPECT_NEAR(corr, kPinnedCorrelation, 1e-12);
}

TEST(Rig, MashMatchesRigGroundTruth) {
  RigParams p;
  const auto layout = rig_layout();
  const auto canonical = rig_canonical(p);
  const auto proj = rig_projection(p, 512);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1), unit(0, 1);
  auto pose = [&] {
    return PoseMatrix::from_euler(u(rng) * p.yaw_max, u(rng) * p.pitch_max, u(rng) * p.roll_max,
                                  Point3(u(rng), u(rng), 0) * p.translation_max);
  };
  double worst = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto pi = pose(), pj = pose();
    const double oi = unit(rng), oj = unit(rng);
    const auto ki = project(homogeneous(rig_landmarks(p, oi)), pi, proj);
    const auto kj = project(homogeneous(rig_landmarks(p, oj)), pj, proj);
    const auto mashed = mash(ki, pi, kj, pj, canonical, proj, layout);
    const auto truth = project(homogeneous(rig_landmarks(p, oi)), pj, proj);
    for (std::size_t i = 0; i < truth.size(); ++i)
      worst = std::max(worst, (mashed.points[i] - truth.points[i]).norm());
  }
  EXPECT_LT(worst, 0.5);
}

TEST(Rig, PearsonMatchesSumFormula) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<double> a, b;
  for (int i = 0; i < 200; ++i) {
    a.push_back(g(rng));
    b.push_back(0.3 * a.back() + g(rng));
  }
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  const double n = 200;
  for (int i = 0; i < 200; ++i) {
    sa += a[i];
    sb += b[i];
    saa += a[i] * a[i];
    sbb += b[i] * b[i];
    sab += a[i] * b[i];
  }
  const double r = (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
  EXPECT_NEAR(pearson(a, b), r, 1e-12);
}

TEST(Rig, VisemeProxy) {
  const auto v = viseme_proxy(0.25, 34);
  ASSERT_EQ(v.size(), 34u);
  EXPECT_EQ(v[0], 0.75f);
  EXPECT_EQ(v[1], 0.25f);
  for (std::size_t i = 2; i < v.size(); ++i)
    EXPECT_EQ(v[i], 0.f);
}

TEST(Manifest, RigDatasetRoundTripAndDeterminism) {
  const auto a = scratch("rig_a"), b = scratch("rig_b");
  RigParams p;
  const auto ds = rig_dataset(p, 6, 3, 64, 34, a);
  rig_dataset(p, 6, 3, 64, 34, b);
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  EXPECT_EQ(slurp(a / "timeline.json"), slurp(b / "timeline.json"));
  EXPECT_EQ(slurp(a / "frames/head_00004.png"), slurp(b / "frames/head_00004.png"));

  const auto loaded = load_manifest(a / "manifest.json");
  EXPECT_TRUE(loaded == ds.manifest);
  save_manifest(loaded, b / "again.json");
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "again.json"));
  EXPECT_TRUE(validate(load_timeline(a / "timeline.json"), 34).ok());

  const auto images = load_frame_images(loaded, 2);
  const auto truth = rig_render(p, loaded.frames[2].pose, *loaded.frames[2].openness, 64);
  EXPECT_TRUE(images.head == truth.head);
  EXPECT_TRUE(images.mouth == quantize8(truth.mouth));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Manifest, SchemaAndMissingFileErrors) {
  const auto dir = scratch("schema");
  rig_dataset(RigParams{}, 3, 1, 64, 34, dir);
  const auto text = slurp(dir / "manifest.json");
  auto j = nlohmann::json::parse(text);

  auto expect_error = [&](const nlohmann::json &doc, ErrorKind kind, const std::string &needle) {
    std::ofstream(dir / "edited.json") << doc.dump();
    try {
      load_manifest(dir / "edited.json");
      ADD_FAILURE() << "expected " << to_string(kind);
    } catch (const Error &e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };

  auto bad = j;
  bad["frames"][1]["pose"].erase(15);
  expect_error(bad, ErrorKind::schema, "/frames/1/pose");
  bad = j;
  bad["frames"][0]["keypoints"].push_back(1.0);
  expect_error(bad, ErrorKind::schema, "/frames/0/keypoints");
  bad = j;
  bad["identity"].erase("canonical");
  expect_error(bad, ErrorKind::schema, "/identity/canonical");
  bad = j;
  bad["frames"][2]["feature_index"] = 3;
  expect_error(bad, ErrorKind::schema, "/frames/2/feature_index");
  bad = j;
  bad["frames"][2]["image"] = "frames/nope.png";
  expect_error(bad, ErrorKind::missing_file, "frames/nope.png");
  fs::remove_all(dir);
}

TEST(Manifest, DrawingsHaveExpectedShapes) {
  const auto dir = scratch("drawings");
  const auto ds = rig_dataset(RigParams{}, 2, 1, 64, 34, dir);
  const auto &m = ds.manifest;
  const auto d = renderer_drawing(m.identity, m.frames[0], 64);
  EXPECT_EQ(d.shape(), (Shape{3, 64, 64}));
  for (std::int64_t i = 0; i < 64 * 64; ++i) {
    EXPECT_EQ(d[i], d[i + 64 * 64]);
    EXPECT_TRUE(d[i] == 0.f || d[i] == 1.f);
  }
  EXPECT_EQ(oracle_head_drawing(m.identity, m.frames[0], 64).shape(), (Shape{1, 64, 64}));
  const auto mouth = oracle_mouth_drawing(m.identity, m.frames[0], 64, 64);
  EXPECT_EQ(mouth.shape(), (Shape{1, 64, 64}));
  EXPECT_GT(mouth.sum(), 20.0);
  fs::remove_all(dir);
}
