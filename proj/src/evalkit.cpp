#include "talkhead/evalkit.hpp"
#include "talkhead/image_io.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace talkhead {

namespace {

void check_pair(const Tensor &a, const Tensor &b, const char *what) {
  require(a.shape() == b.shape(), ErrorKind::shape,
          std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
              shape_string(b.shape()) + " differ");
  require(a.rank() == 3 && (a.dim(0) == 1 || a.dim(0) == 3), ErrorKind::shape,
          std::string(what) + " expects 1×H×W or 3×H×W images");
}

// BT.601 luma of the 8-bit values, row-major H×W.
std::vector<double> luma(const Tensor &img) {
  const auto h = img.dim(1), w = img.dim(2);
  std::vector<double> y(static_cast<std::size_t>(h * w));
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      auto byte = [&](std::int64_t ch) { return static_cast<double>(to_byte(img.at(ch, r, c))); };
      y[static_cast<std::size_t>(r * w + c)] =
          img.dim(0) == 1 ? byte(0) : 0.299 * byte(0) + 0.587 * byte(1) + 0.114 * byte(2);
    }
  return y;
}

} // namespace

double psnr(const Tensor &a, const Tensor &b) {
  check_pair(a, b, "psnr");
  double sse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(to_byte(a[i])) - static_cast<double>(to_byte(b[i]));
    sse += d * d;
  }
  if (sse == 0)
    return kPsnrIdentical;
  return 10.0 * std::log10(255.0 * 255.0 / (sse / static_cast<double>(a.size())));
}

double ssim(const Tensor &a, const Tensor &b) {
  check_pair(a, b, "ssim");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  const auto h = a.dim(1), w = a.dim(2);
  require(h >= kWin && w >= kWin, ErrorKind::usage,
          "ssim needs images of at least 11×11, got " + shape_string(a.shape()));
  std::array<double, kWin> g{};
  double gsum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    gsum += g[i];
  }
  for (auto &v : g)
    v /= gsum;
  const auto ya = luma(a), yb = luma(b);
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  const auto oh = h - kWin + 1, ow = w - kWin + 1;

  // Separable filtering of x, y, x², y², xy: horizontal pass, then vertical.
  auto filter = [&](auto &&value) {
    std::vector<double> horiz(static_cast<std::size_t>(h * ow));
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t c = 0; c < ow; ++c) {
        double s = 0;
        for (int k = 0; k < kWin; ++k)
          s += g[k] * value(static_cast<std::size_t>(r * w + c + k));
        horiz[static_cast<std::size_t>(r * ow + c)] = s;
      }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t r = 0; r < oh; ++r)
      for (std::int64_t c = 0; c < ow; ++c) {
        double s = 0;
        for (int k = 0; k < kWin; ++k)
          s += g[k] * horiz[static_cast<std::size_t>((r + k) * ow + c)];
        out[static_cast<std::size_t>(r * ow + c)] = s;
      }
    return out;
  };
  const auto mx = filter([&](std::size_t i) { return ya[i]; });
  const auto my = filter([&](std::size_t i) { return yb[i]; });
  const auto mxx = filter([&](std::size_t i) { return ya[i] * ya[i]; });
  const auto myy = filter([&](std::size_t i) { return yb[i] * yb[i]; });
  const auto mxy = filter([&](std::size_t i) { return ya[i] * yb[i]; });
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i], vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    total += (2 * mx[i] * my[i] + c1) * (2 * cov + c2) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double dlip(const std::vector<KeypointSet2D> &pred, const std::vector<KeypointSet2D> &truth,
            const std::vector<int> &mouth_indices) {
  require(pred.size() == truth.size(), ErrorKind::usage,
          "dlip: " + std::to_string(pred.size()) + " predicted frames vs " +
              std::to_string(truth.size()) + " reference frames");
  require(!pred.empty() && !mouth_indices.empty(), ErrorKind::usage,
          "dlip needs at least one frame and one mouth index");
  double total = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    require(pred[f].size() == truth[f].size(), ErrorKind::usage,
            "dlip: keypoint counts differ at frame " + std::to_string(f));
    double frame = 0;
    for (int i : mouth_indices) {
      require(i >= 0 && static_cast<std::size_t>(i) < pred[f].size(), ErrorKind::usage,
              "dlip: mouth index " + std::to_string(i) + " out of range");
      frame += (pred[f].points[static_cast<std::size_t>(i)] -
                truth[f].points[static_cast<std::size_t>(i)])
                   .norm();
    }
    total += frame / static_cast<double>(mouth_indices.size());
  }
  return total / static_cast<double>(pred.size());
}

namespace {

struct Moments {
  double count = 0;
  Point2 centre = Point2::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
};

template <typename Pred> Moments region_moments(const CropRect &crop, Pred &&inside) {
  Moments m;
  Eigen::Vector2d sum = Eigen::Vector2d::Zero();
  Eigen::Matrix2d sq = Eigen::Matrix2d::Zero();
  for (auto r = crop.top; r < crop.top + crop.side; ++r)
    for (auto c = crop.left; c < crop.left + crop.side; ++c)
      if (inside(r, c)) {
        const Eigen::Vector2d p(c + 0.5, r + 0.5);
        m.count += 1;
        sum += p;
        sq += p * p.transpose();
      }
  if (m.count > 0) {
    m.centre = sum / m.count;
    m.cov = sq / m.count - m.centre * m.centre.transpose();
  }
  return m;
}

// Extreme points of the uniform ellipse with these moments (semi-axis = 2σ),
// ordered left, top, right, bottom in image axes.
std::array<Point2, 4> ellipse_extremes(const Moments &m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(m.cov);
  Eigen::Vector2d major = eig.eigenvectors().col(1), minor = eig.eigenvectors().col(0);
  if (major.x() < 0)
    major = -major;
  if (minor.y() < 0)
    minor = -minor;
  const double a = 2 * std::sqrt(std::max(eig.eigenvalues()(1), 0.0));
  const double b = 2 * std::sqrt(std::max(eig.eigenvalues()(0), 0.0));
  return {m.centre - a * major, m.centre - b * minor, m.centre + a * major, m.centre + b * minor};
}

} // namespace

KeypointSet2D fit_lip_keypoints(const Tensor &image, const CropRect &crop, double redness,
                                double interior_threshold) {
  require(image.rank() == 3 && image.dim(0) == 3 && crop.top >= 0 && crop.left >= 0 &&
              crop.top + crop.side <= image.dim(1) && crop.left + crop.side <= image.dim(2),
          ErrorKind::usage, "lip fit needs an RGB image and a crop inside it");
  const auto y = luma(image);
  const auto w = image.dim(2);
  auto dark = [&](std::int64_t r, std::int64_t c) {
    return y[static_cast<std::size_t>(r * w + c)] < interior_threshold;
  };
  auto mouth = [&](std::int64_t r, std::int64_t c) {
    const double red = static_cast<double>(to_byte(image.at(0, r, c))) -
                       static_cast<double>(to_byte(image.at(1, r, c)));
    return red >= redness || dark(r, c);
  };
  const auto outer_m = region_moments(crop, mouth);
  KeypointSet2D out;
  if (outer_m.count < 3) {
    // Nothing mouth-coloured: collapse every point onto the crop centre.
    const Point2 c(crop.left + crop.side / 2.0, crop.top + crop.side / 2.0);
    out.points.assign(8, c);
    return out;
  }
  const auto outer = ellipse_extremes(outer_m);
  out.points.assign(outer.begin(), outer.end());
  const auto interior = region_moments(crop, dark);
  if (interior.count >= 3) {
    const auto inner = ellipse_extremes(interior);
    out.points.insert(out.points.end(), inner.begin(), inner.end());
  } else {
    const Point2 mid = 0.5 * (outer[1] + outer[3]);
    const Point2 half = 0.85 * 0.5 * (outer[2] - outer[0]);
    out.points.insert(out.points.end(), {mid - half, mid, mid + half, mid});
  }
  return out;
}

double openness_probe(const Tensor &image, const CropRect &crop, const RigParams &cal) {
  const double o =
      cal.probe_gain * dark_fraction(image, crop, cal.probe_threshold) + cal.probe_offset;
  return std::clamp(o, 0.0, 1.0);
}

double laplacian_variance(const Tensor &image, const CropRect &rect) {
  require(rect.side >= 3 && rect.top >= 0 && rect.left >= 0 &&
              rect.top + rect.side <= image.dim(1) && rect.left + rect.side <= image.dim(2),
          ErrorKind::usage, "laplacian rect must be at least 3×3 and inside the image");
  const auto y = luma(image);
  const auto w = image.dim(2);
  auto at = [&](std::int64_t r, std::int64_t c) { return y[static_cast<std::size_t>(r * w + c)]; };
  std::vector<double> lap;
  for (auto r = rect.top + 1; r < rect.top + rect.side - 1; ++r)
    for (auto c = rect.left + 1; c < rect.left + rect.side - 1; ++c)
      lap.push_back(at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1) - 4 * at(r, c));
  const double mean = std::accumulate(lap.begin(), lap.end(), 0.0) / static_cast<double>(lap.size());
  double var = 0;
  for (double v : lap)
    var += (v - mean) * (v - mean);
  return var / static_cast<double>(lap.size());
}

void MetricReport::aggregate() {
  mean = FrameMetrics{};
  if (frames.empty())
    return;
  for (const auto &f : frames) {
    mean.psnr += f.psnr;
    mean.ssim += f.ssim;
    mean.dlip += f.dlip;
    mean.openness += f.openness;
  }
  const double n = static_cast<double>(frames.size());
  mean.psnr /= n;
  mean.ssim /= n;
  mean.dlip /= n;
  mean.openness /= n;
}

namespace {

nlohmann::json number(double v) {
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  return v;
}

nlohmann::json to_json(const FrameMetrics &m) {
  return {{"psnr", number(m.psnr)},
          {"ssim", number(m.ssim)},
          {"dlip", number(m.dlip)},
          {"openness", number(m.openness)}};
}

std::ofstream open_out(const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  return out;
}

} // namespace

void write_report_json(const std::filesystem::path &path, const MetricReport &report) {
  nlohmann::json j;
  j["count"] = report.count();
  j["mean"] = to_json(report.mean);
  j["frames"] = nlohmann::json::array();
  for (const auto &f : report.frames)
    j["frames"].push_back(to_json(f));
  open_out(path) << j.dump(1) << '\n';
}

void write_report_csv(const std::filesystem::path &path, const MetricReport &report) {
  auto out = open_out(path);
  out << "frame,psnr,ssim,dlip,openness\n";
  char line[160];
  for (std::size_t i = 0; i < report.frames.size(); ++i) {
    const auto &f = report.frames[i];
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.9g\n", i, f.psnr, f.ssim, f.dlip,
                  f.openness);
    out << line;
  }
}

BenchReport summarize_latency(std::vector<double> samples, std::int64_t warmup,
                              std::int64_t canvas) {
  require(!samples.empty(), ErrorKind::usage, "bench needs at least one iteration");
  BenchReport r;
  r.warmup = warmup;
  r.iterations = static_cast<std::int64_t>(samples.size());
  r.canvas = canvas;
  r.samples_ms = samples;
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  r.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  r.median_ms = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  r.p95_ms = samples[static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n))) - 1];
  r.fps = r.mean_ms > 0 ? 1000.0 / r.mean_ms : 0.0;
  return r;
}

BenchReport bench(const NetworkSpec &net, const WeightStore &weights, const RendererConfig &cfg,
                  std::int64_t iterations, std::int64_t warmup) {
  require(iterations >= 1 && warmup >= 0, ErrorKind::usage,
          "bench needs iterations ≥ 1 and warmup ≥ 0");
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  FeatureWindow window;
  window.k = cfg.k;
  window.w = cfg.window;
  window.values.resize(static_cast<std::size_t>(cfg.k * cfg.window));
  for (float &v : window.values)
    v = u(rng);
  Tensor drawing({cfg.kp_channels, cfg.canvas, cfg.canvas});
  for (float &v : drawing.data())
    v = u(rng) < 0.02f ? 1.f : 0.f;
  for (std::int64_t i = 0; i < warmup; ++i)
    render(net, weights, window, drawing);
  std::vector<double> samples;
  for (std::int64_t i = 0; i < iterations; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    render(net, weights, window, drawing);
    samples.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return summarize_latency(std::move(samples), warmup, cfg.canvas);
}

void write_bench_json(const std::filesystem::path &path, const BenchReport &r) {
  const nlohmann::json j = {{"warmup", r.warmup},       {"iterations", r.iterations},
                            {"mean_ms", r.mean_ms},     {"median_ms", r.median_ms},
                            {"p95_ms", r.p95_ms},       {"fps", r.fps},
                            {"canvas", r.canvas},       {"precision", r.precision},
                            {"samples_ms", r.samples_ms}};
  open_out(path) << j.dump(1) << '\n';
}

} // namespace talkhead
