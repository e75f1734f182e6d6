#pragma once

// Glue between datasets and the renderer: training samples, training runs,
// frame-sequence inference and evaluation.

#include "talkhead/dataset.hpp"
#include "talkhead/evalkit.hpp"
#include "talkhead/renderer.hpp"
#include "talkhead/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace talkhead {

/// Renderer training pairs for the listed frames (every frame when empty):
/// drawing and feature window in, head image (and mouth image) out.
SampleSource renderer_samples(const DatasetManifest &dataset, const FeatureTimeline &timeline,
                              const RendererConfig &cfg,
                              std::vector<std::size_t> frames = {});

std::vector<Branch> renderer_branches(const RendererConfig &cfg);

/// Trains a renderer from fresh weights seeded by `train.seed`. With `out`,
/// logs and checkpoints under `tag` and writes `<tag>.avwt`.
WeightStore train_renderer(const DatasetManifest &dataset, const FeatureTimeline &timeline,
                           const RendererConfig &cfg, const TrainConfig &train,
                           const std::optional<std::filesystem::path> &out = std::nullopt,
                           const std::string &tag = "renderer",
                           std::vector<std::size_t> frames = {});

/// Canvas-sized config whose decoder layout matches the stored weights.
RendererConfig renderer_config_for(const WeightStore &weights, std::int64_t canvas,
                                   std::int64_t k);

/// One rendering per timeline frame t. The drawing comes from the dataset
/// frame whose feature index is t, or frame t mod N when none matches.
std::vector<RenderOutput> infer_sequence(const NetworkSpec &net, const WeightStore &weights,
                                         const DatasetManifest &drawings,
                                         const FeatureTimeline &timeline,
                                         const RendererConfig &cfg);

/// Writes head_%05d.png (and mouth_%05d.png) for each rendering.
void write_sequence(const std::filesystem::path &dir, const std::vector<RenderOutput> &frames);

/// PSNR and SSIM against the ground-truth head, D_lip between lip fits on the
/// generated and ground-truth heads, openness from the rig's calibrated probe
/// (0 without rig parameters).
MetricReport evaluate_renderer(const NetworkSpec &net, const WeightStore &weights,
                               const DatasetManifest &dataset, const FeatureTimeline &timeline,
                               const RendererConfig &cfg, std::vector<std::size_t> frames = {});

} // namespace talkhead
