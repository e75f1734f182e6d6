#pragma once

// Image-quality and lip-sync metrics plus the render latency benchmark.
// Image metrics work on the 8-bit values an image would be saved with.

#include "talkhead/geometry.hpp"
#include "talkhead/network.hpp"
#include "talkhead/renderer.hpp"
#include "talkhead/rig.hpp"

#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace talkhead {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10·log10(255²/MSE) over every sample; +∞ when the images are identical.
double psnr(const Tensor &a, const Tensor &b);

/// Mean local SSIM of the BT.601 luma planes: 11×11 Gaussian window (σ 1.5),
/// K1 0.01, K2 0.03, L 255, windows fully inside the image.
double ssim(const Tensor &a, const Tensor &b);

/// Mean over mouth points of the point distance, then mean over frames.
double dlip(const std::vector<KeypointSet2D> &pred, const std::vector<KeypointSet2D> &truth,
            const std::vector<int> &mouth_indices);

/// Outer and inner lip points (left, top, right, bottom each) fitted to an
/// RGB image. Mouth pixels inside `crop` are red-dominant (R − G ≥ `redness`)
/// or dark (luma < `interior_threshold`); the outer points come from the
/// uniform-ellipse moments of all mouth pixels, the inner ones from the dark
/// pixels. A closed mouth puts the inner points on the lip midline.
KeypointSet2D fit_lip_keypoints(const Tensor &image, const CropRect &crop, double redness = 60.0,
                                double interior_threshold = 70.0);

/// Calibrated openness: clamp(gain · dark_fraction + offset, 0, 1).
double openness_probe(const Tensor &image, const CropRect &crop, const RigParams &calibration);

/// Variance of the 4-neighbour Laplacian of the luma plane inside `rect`.
double laplacian_variance(const Tensor &image, const CropRect &rect);

struct FrameMetrics {
  double psnr = 0;
  double ssim = 0;
  double dlip = 0;
  double openness = 0;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  FrameMetrics mean;

  std::size_t count() const { return frames.size(); }
  /// Recomputes `mean` from `frames`.
  void aggregate();
};

/// JSON with "frames", "mean" and "count"; an infinite PSNR is written as "inf".
void write_report_json(const std::filesystem::path &path, const MetricReport &report);
void write_report_csv(const std::filesystem::path &path, const MetricReport &report);

struct BenchReport {
  std::int64_t warmup = 0;
  std::int64_t iterations = 0;
  std::vector<double> samples_ms;
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0; // nearest rank
  double fps = 0;    // 1000 / mean
  std::int64_t canvas = 0;
  std::string precision = "fp32";
};

/// Summary statistics of raw samples (iterations must be ≥ 1).
BenchReport summarize_latency(std::vector<double> samples_ms, std::int64_t warmup,
                              std::int64_t canvas);

/// Steady-state latency of render() on a fixed random window and drawing.
BenchReport bench(const NetworkSpec &net, const WeightStore &weights, const RendererConfig &cfg,
                  std::int64_t iterations, std::int64_t warmup);

void write_bench_json(const std::filesystem::path &path, const BenchReport &report);

} // namespace talkhead
