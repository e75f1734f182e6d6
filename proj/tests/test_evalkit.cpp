#include "talkhead/evalkit.hpp"
#include "talkhead/image_io.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace talkhead;

namespace {

Tensor bytes_image(std::int64_t c, std::int64_t h, std::int64_t w,
                   const std::function<int(std::int64_t, std::int64_t, std::int64_t)> &value) {
  Tensor t({c, h, w});
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x)
        t.at(ch, y, x) = from_byte(static_cast<std::uint8_t>(value(ch, y, x)));
  return t;
}

Tensor structured(std::int64_t s) {
  return bytes_image(1, s, s, [](auto, auto y, auto x) {
    return static_cast<int>(127.5 + 100 * std::sin(0.7 * x) * std::cos(0.45 * y));
  });
}

// Direct (non-separable) SSIM on a single-channel byte image.
double reference_ssim(const Tensor &a, const Tensor &b) {
  const int n = 11;
  double w[11][11], total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      total += w[i][j];
    }
  const double c1 = 6.5025, c2 = 58.5225;
  double sum = 0;
  int windows = 0;
  auto px = [](const Tensor &t, std::int64_t y, std::int64_t x) {
    return static_cast<double>(to_byte(t.at(0, y, x)));
  };
  for (std::int64_t y = 0; y + n <= a.dim(1); ++y)
    for (std::int64_t x = 0; x + n <= a.dim(2); ++x) {
      double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double g = w[i][j] / total, va = px(a, y + i, x + j), vb = px(b, y + i, x + j);
          ma += g * va;
          mb += g * vb;
          aa += g * va * va;
          bb += g * vb * vb;
          ab += g * va * vb;
        }
      const double sa = aa - ma * ma, sb = bb - mb * mb, sab = ab - ma * mb;
      sum += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
      ++windows;
    }
  return sum / windows;
}

} // namespace

TEST(Psnr, IdenticalIsInfinite) {
  const auto a = structured(16);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
}

TEST(Psnr, ConstantOffsetOfOne) {
  const auto a = bytes_image(3, 8, 8, [](auto, auto, auto) { return 100; });
  const auto b = bytes_image(3, 8, 8, [](auto, auto, auto) { return 101; });
  EXPECT_NEAR(psnr(a, b), 48.130803608679102, 1e-6);
  EXPECT_NEAR(psnr(a, b), 20 * std::log10(255.0), 1e-6);
}

TEST(Psnr, HandComputedFixtureAndSymmetry) {
  const int va[] = {0, 10, 20, 30}, vb[] = {1, 12, 20, 27};
  const auto a = bytes_image(1, 2, 2, [&](auto, auto y, auto x) { return va[y * 2 + x]; });
  const auto b = bytes_image(1, 2, 2, [&](auto, auto y, auto x) { return vb[y * 2 + x]; });
  // Differences 1, 2, 0, 3: MSE = 14 / 4.
  EXPECT_NEAR(psnr(a, b), 10 * std::log10(65025.0 / 3.5), 1e-6);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, structured(4)), Error);
}

TEST(Ssim, IdenticalIsOne) {
  const auto a = structured(24);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesReduceToLuminanceTerm) {
  const auto a = bytes_image(1, 16, 16, [](auto, auto, auto) { return 100; });
  const auto b = bytes_image(1, 16, 16, [](auto, auto, auto) { return 150; });
  const double c1 = std::pow(0.01 * 255, 2);
  EXPECT_NEAR(ssim(a, b), (2 * 100.0 * 150.0 + c1) / (100.0 * 100 + 150.0 * 150 + c1), 1e-6);
}

TEST(Ssim, RgbUsesBt601Luma) {
  const auto rgb = bytes_image(3, 16, 16, [](auto c, auto, auto) { return c == 0 ? 200 : 50; });
  const auto grey = bytes_image(3, 16, 16, [](auto, auto, auto) { return 100; });
  const double y = 0.299 * 200 + 0.587 * 50 + 0.114 * 50;
  const double c1 = std::pow(0.01 * 255, 2);
  EXPECT_NEAR(ssim(rgb, grey), (2 * y * 100.0 + c1) / (y * y + 100.0 * 100 + c1), 1e-6);
}

TEST(Ssim, MatchesDirectWindowReference) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 255);
  const auto a = bytes_image(1, 19, 23, [&](auto, auto, auto) { return u(rng); });
  const auto b = bytes_image(1, 19, 23, [&](auto, auto, auto) { return u(rng); });
  EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-9);
}

TEST(Ssim, ContrastInversionScoresLow) {
  const auto a = structured(32);
  Tensor inv(a.shape());
  double mean = 0;
  for (float v : a.data())
    mean += v;
  mean /= static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    inv[i] = static_cast<float>(2 * mean - a[i]);
  EXPECT_LT(ssim(a, inv), 0.5);
  EXPECT_NEAR(ssim(a, inv), ssim(inv, a), 1e-12);
}

TEST(Ssim, TooSmallIsAnError) {
  EXPECT_THROW(ssim(structured(10), structured(10)), Error);
}

TEST(Dlip, Fixtures) {
  KeypointSet2D base;
  for (int i = 0; i < 6; ++i)
    base.points.emplace_back(10.0 * i, 5.0 + i);
  const std::vector<int> mouth = {2, 3, 4, 5};
  EXPECT_EQ(dlip({base}, {base}, mouth), 0.0);
  auto shifted = base;
  for (int i : mouth)
    shifted.points[static_cast<std::size_t>(i)].x() += 3;
  shifted.points[0].x() += 50; // not a mouth point
  EXPECT_NEAR(dlip({shifted}, {base}, mouth), 3.0, 1e-12);

  // Per-point distances 5, 0, 10, 1 (mean 4) and 2, 2, 2, 2 (mean 2).
  auto f1 = base, f2 = base;
  const Point2 offsets[] = {{3, 4}, {0, 0}, {6, -8}, {-1, 0}};
  for (int k = 0; k < 4; ++k) {
    f1.points[static_cast<std::size_t>(mouth[k])] += offsets[k];
    f2.points[static_cast<std::size_t>(mouth[k])] += Point2(0, 2);
  }
  EXPECT_NEAR(dlip({f1, f2}, {base, base}, mouth), 3.0, 1e-6);
  EXPECT_THROW(dlip({base}, {base, base}, mouth), Error);
  EXPECT_THROW(dlip({base}, {base}, {7}), Error);
}

TEST(LipFit, RecoversRigLipKeypoints) {
  RigParams p;
  for (std::int64_t s : {64, 512}) {
    for (double o : {0.0, 0.3, 1.0}) {
      const auto f = rig_render(p, PoseMatrix::from_euler(4, -3, 2), o, s);
      const auto fit = fit_lip_keypoints(f.head, rig_crop(p, s));
      KeypointSet2D truth;
      for (int i = rig::kMouthBegin; i < rig::kLandmarks; ++i)
        truth.points.push_back(f.keypoints.points[static_cast<std::size_t>(i)]);
      EXPECT_LT(dlip({fit}, {truth}, {0, 1, 2, 3, 4, 5, 6, 7}), 1.0) << s << " " << o;
    }
  }
}

TEST(OpennessProbe, CalibratedEndpointsAndMonotone) {
  for (std::int64_t s : {64, 128}) {
    RigParams p;
    calibrate_probe(p, s);
    const auto crop = rig_crop(p, s);
    auto probe = [&](double o) {
      return openness_probe(rig_render(p, PoseMatrix(), o, s).head, crop, p);
    };
    EXPECT_LE(probe(0.0), 0.05);
    EXPECT_GE(probe(1.0), 0.9);
    EXPECT_GT(probe(0.8), probe(0.2));
  }
}

TEST(Sharpness, LaplacianVariance) {
  const auto flat = bytes_image(1, 8, 8, [](auto, auto, auto) { return 90; });
  EXPECT_EQ(laplacian_variance(flat, {0, 0, 8}), 0.0);
  const auto checker = bytes_image(1, 8, 8, [](auto, auto y, auto x) { return (x + y) % 2 ? 255 : 0; });
  EXPECT_NEAR(laplacian_variance(checker, {0, 0, 8}), 1020.0 * 1020.0, 1e-6);
  EXPECT_THROW(laplacian_variance(flat, {6, 6, 4}), Error);
}

TEST(Report, JsonAndCsv) {
  MetricReport r;
  r.frames = {{kPsnrIdentical, 1.0, 0.0, 0.1}, {30.0, 0.9, 2.0, 0.3}};
  r.aggregate();
  EXPECT_NEAR(r.mean.ssim, 0.95, 1e-12);
  EXPECT_NEAR(r.mean.dlip, 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(r.mean.psnr));
  const auto dir = std::filesystem::temp_directory_path() / "talkhead_evalkit";
  std::filesystem::create_directories(dir);
  write_report_json(dir / "r.json", r);
  write_report_csv(dir / "r.csv", r);
  std::ifstream in(dir / "r.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["count"], 2);
  EXPECT_EQ(j["mean"]["psnr"], "inf");
  EXPECT_DOUBLE_EQ(j["frames"][1]["psnr"].get<double>(), 30.0);
  std::ifstream csv(dir / "r.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "frame,psnr,ssim,dlip,openness");
  std::filesystem::remove_all(dir);
}

TEST(Bench, SummaryStatistics) {
  const auto r = summarize_latency({5, 1, 4, 2, 3, 100, 6, 7, 8, 9}, 2, 64);
  EXPECT_EQ(r.iterations, 10);
  EXPECT_DOUBLE_EQ(r.median_ms, 5.5);
  EXPECT_DOUBLE_EQ(r.mean_ms, 14.5);
  EXPECT_DOUBLE_EQ(r.p95_ms, 100.0);
  EXPECT_NEAR(r.fps, 1000.0 / 14.5, 1e-12);
  EXPECT_THROW(summarize_latency({}, 0, 64), Error);
}

TEST(Bench, SingleIterationAndOrdering) {
  const auto cfg = RendererConfig::for_canvas(32);
  const auto net = build_renderer(cfg);
  const auto w = init_parameters<float>(net, 1);
  const auto one = bench(net, w, cfg, 1, 0);
  EXPECT_EQ(one.samples_ms.size(), 1u);
  EXPECT_EQ(one.iterations, 1);
  const auto r = bench(net, w, cfg, 9, 1);
  EXPECT_GE(r.mean_ms, 0.5 * r.median_ms);
  EXPECT_GE(r.p95_ms, r.median_ms);
  EXPECT_EQ(r.canvas, 32);
}
