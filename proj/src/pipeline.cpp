#include "talkhead/pipeline.hpp"

#include "talkhead/error.hpp"
#include "talkhead/image_io.hpp"
#include "talkhead/weight_store.hpp"

#include <cstdio>
#include <map>
#include <numeric>

namespace talkhead {

namespace {

std::vector<std::size_t> all_or(std::vector<std::size_t> frames, std::size_t n) {
  if (frames.empty()) {
    frames.resize(n);
    std::iota(frames.begin(), frames.end(), std::size_t{0});
  }
  for (auto i : frames)
    require(i < n, ErrorKind::usage, "frame index " + std::to_string(i) + " out of range");
  return frames;
}

void check_dataset(const DatasetManifest &dataset, const FeatureTimeline &timeline,
                   const RendererConfig &cfg) {
  cfg.validate();
  require(dataset.canvas == cfg.canvas, ErrorKind::config,
          "renderer canvas " + std::to_string(cfg.canvas) + " differs from dataset canvas " +
              std::to_string(dataset.canvas));
  require(timeline.k == cfg.k, ErrorKind::config,
          "timeline has k=" + std::to_string(timeline.k) + ", renderer expects " +
              std::to_string(cfg.k));
}

} // namespace

SampleSource renderer_samples(const DatasetManifest &dataset, const FeatureTimeline &timeline,
                              const RendererConfig &cfg, std::vector<std::size_t> frames) {
  check_dataset(dataset, timeline, cfg);
  frames = all_or(std::move(frames), dataset.frames.size());
  return {frames.size(), [&dataset, &timeline, cfg, frames](std::size_t n) {
            const auto i = frames[n];
            const auto &f = dataset.frames[i];
            const auto img = load_frame_images(dataset, i);
            Sample s;
            s.inputs = renderer_inputs(window_at(timeline, f.feature_index, cfg.window),
                                       renderer_drawing(dataset.identity, f, cfg.canvas,
                                                        cfg.kp_channels));
            s.targets[renderer_values::head] = img.head;
            if (cfg.dual_decoder)
              s.targets[renderer_values::mouth] = img.mouth;
            return s;
          }};
}

std::vector<Branch> renderer_branches(const RendererConfig &cfg) {
  std::vector<Branch> b{{renderer_values::head, "disc_head"}};
  if (cfg.dual_decoder)
    b.push_back({renderer_values::mouth, "disc_mouth"});
  return b;
}

WeightStore train_renderer(const DatasetManifest &dataset, const FeatureTimeline &timeline,
                           const RendererConfig &cfg, const TrainConfig &train,
                           const std::optional<std::filesystem::path> &out,
                           const std::string &tag, std::vector<std::size_t> frames) {
  const auto data = cached(renderer_samples(dataset, timeline, cfg, std::move(frames)));
  GanTrainer trainer(build_renderer(cfg), renderer_branches(cfg), cfg.canvas, train,
                     default_extractor(cfg.canvas));
  auto result = train_gan(trainer, data, train, out, tag);
  if (out)
    save_weights(*out / (tag + ".avwt"), result.generator);
  return std::move(result.generator);
}

RendererConfig renderer_config_for(const WeightStore &weights, std::int64_t canvas,
                                   std::int64_t k) {
  auto cfg = RendererConfig::for_canvas(canvas);
  cfg.k = k;
  cfg.dual_decoder = !weights.subset("mouth_dec.").tensors().empty();
  return cfg;
}

std::vector<RenderOutput> infer_sequence(const NetworkSpec &net, const WeightStore &weights,
                                         const DatasetManifest &drawings,
                                         const FeatureTimeline &timeline,
                                         const RendererConfig &cfg) {
  check_dataset(drawings, timeline, cfg);
  require(!drawings.frames.empty(), ErrorKind::usage, "no drawings to render");
  std::map<std::int64_t, std::size_t> by_feature;
  for (std::size_t i = 0; i < drawings.frames.size(); ++i)
    by_feature.emplace(drawings.frames[i].feature_index, i);
  std::vector<RenderOutput> out;
  for (std::int64_t t = 0; t < timeline.frames(); ++t) {
    auto it = by_feature.find(t);
    const auto i = it != by_feature.end() ? it->second
                                          : static_cast<std::size_t>(t) % drawings.frames.size();
    out.push_back(render(net, weights, window_at(timeline, t, cfg.window),
                         renderer_drawing(drawings.identity, drawings.frames[i], cfg.canvas,
                                          cfg.kp_channels)));
  }
  return out;
}

void write_sequence(const std::filesystem::path &dir, const std::vector<RenderOutput> &frames) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t t = 0; t < frames.size(); ++t) {
    std::snprintf(name, sizeof name, "head_%05zu.png", t);
    write_png(dir / name, frames[t].head);
    if (!frames[t].mouth.empty()) {
      std::snprintf(name, sizeof name, "mouth_%05zu.png", t);
      write_png(dir / name, frames[t].mouth);
    }
  }
}

MetricReport evaluate_renderer(const NetworkSpec &net, const WeightStore &weights,
                               const DatasetManifest &dataset, const FeatureTimeline &timeline,
                               const RendererConfig &cfg, std::vector<std::size_t> frames) {
  check_dataset(dataset, timeline, cfg);
  frames = all_or(std::move(frames), dataset.frames.size());
  const auto &mouth = dataset.identity.layout.mouth;
  MetricReport report;
  for (auto i : frames) {
    const auto &f = dataset.frames[i];
    const auto truth = load_frame_images(dataset, i);
    const auto out = render(net, weights, window_at(timeline, f.feature_index, cfg.window),
                            renderer_drawing(dataset.identity, f, cfg.canvas, cfg.kp_channels));
    // Metrics see what a PNG of the output would hold.
    const auto head = quantize8(out.head);
    FrameMetrics m;
    m.psnr = psnr(head, truth.head);
    m.ssim = ssim(head, truth.head);
    std::vector<int> lips(mouth.size());
    std::iota(lips.begin(), lips.end(), 0);
    m.dlip = dlip({fit_lip_keypoints(head, f.crop)}, {fit_lip_keypoints(truth.head, f.crop)}, lips);
    m.openness = dataset.rig ? openness_probe(head, f.crop, *dataset.rig) : 0.0;
    report.frames.push_back(m);
  }
  report.aggregate();
  return report;
}

} // namespace talkhead
