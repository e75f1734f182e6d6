#include "talkhead/pipeline.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace talkhead;
namespace fs = std::filesystem;

namespace {

RigDataset small_rig(const fs::path &dir, std::int64_t frames = 4) {
  RigParams p;
  calibrate_probe(p, 64);
  fs::remove_all(dir);
  return rig_dataset(p, frames, 3, 64, 34, dir);
}

RendererConfig config_for(const DatasetManifest &m, bool dual) {
  auto cfg = RendererConfig::for_canvas(m.canvas);
  cfg.crop = m.frames.front().crop;
  cfg.dual_decoder = dual;
  return cfg;
}

} // namespace

TEST(Pipeline, SamplesCarryDrawingAudioAndTargets) {
  const auto ds = small_rig(fs::temp_directory_path() / "talkhead_pipeline_samples");
  const auto cfg = config_for(ds.manifest, true);
  const auto src = renderer_samples(ds.manifest, ds.timeline, cfg, {2, 0});
  ASSERT_EQ(src.size, 2u);
  const auto s = src.get(0);
  EXPECT_EQ(s.inputs.at(renderer_values::drawing).shape(), (Shape{3, 64, 64}));
  EXPECT_EQ(s.inputs.at(renderer_values::audio).shape(), (Shape{6, 34}));
  EXPECT_TRUE(s.targets.at(renderer_values::head) == load_frame_images(ds.manifest, 2).head);
  EXPECT_TRUE(s.targets.at(renderer_values::mouth) == load_frame_images(ds.manifest, 2).mouth);

  const auto single = renderer_samples(ds.manifest, ds.timeline, config_for(ds.manifest, false));
  EXPECT_EQ(single.size, 4u);
  EXPECT_EQ(single.get(1).targets.count(renderer_values::mouth), 0u);
  EXPECT_EQ(renderer_branches(config_for(ds.manifest, false)).size(), 1u);
  EXPECT_THROW(renderer_samples(ds.manifest, ds.timeline, cfg, {9}), Error);
}

TEST(Pipeline, CanvasMismatchIsConfigError) {
  const auto ds = small_rig(fs::temp_directory_path() / "talkhead_pipeline_mismatch");
  try {
    renderer_samples(ds.manifest, ds.timeline, RendererConfig::for_canvas(128));
    FAIL() << "expected a config error";
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Pipeline, DecoderLayoutInferredFromWeights) {
  for (bool dual : {true, false}) {
    auto cfg = RendererConfig::for_canvas(64);
    cfg.dual_decoder = dual;
    const auto w = init_parameters<float>(build_renderer(cfg), 1);
    EXPECT_EQ(renderer_config_for(w, 64, 34).dual_decoder, dual);
  }
}

TEST(Pipeline, InferOneFramePerTimelineStep) {
  const auto dir = fs::temp_directory_path() / "talkhead_pipeline_infer";
  const auto ds = small_rig(dir / "data", 3);
  const auto cfg = config_for(ds.manifest, true);
  const auto net = build_renderer(cfg);
  const auto w = init_parameters<float>(net, 2);
  auto timeline = ds.timeline;
  for (int extra = 0; extra < 2; ++extra) // longer than the drawing set
    timeline.push_frame(viseme_proxy(0.5, 34));
  const auto frames = infer_sequence(net, w, ds.manifest, timeline, cfg);
  ASSERT_EQ(frames.size(), 5u);
  // Frame 0 has feature index 0, so t=0 renders exactly that drawing.
  const auto direct = render(net, w, window_at(timeline, 0, cfg.window),
                             renderer_drawing(ds.manifest.identity, ds.manifest.frames[0], 64));
  EXPECT_TRUE(frames[0].head == direct.head);
  write_sequence(dir / "out", frames);
  for (const char *name : {"head_00000.png", "head_00004.png", "mouth_00004.png"})
    EXPECT_TRUE(fs::exists(dir / "out" / name)) << name;
  EXPECT_FALSE(fs::exists(dir / "out" / "head_00005.png"));
}

TEST(Pipeline, EvaluationIsBoundedAndRepeatable) {
  const auto ds = small_rig(fs::temp_directory_path() / "talkhead_pipeline_eval");
  const auto cfg = config_for(ds.manifest, true);
  const auto net = build_renderer(cfg);
  const auto w = init_parameters<float>(net, 4);
  const auto a = evaluate_renderer(net, w, ds.manifest, ds.timeline, cfg);
  const auto b = evaluate_renderer(net, w, ds.manifest, ds.timeline, cfg);
  ASSERT_EQ(a.count(), 4u);
  for (std::size_t i = 0; i < a.count(); ++i) {
    const auto &m = a.frames[i];
    EXPECT_GE(m.psnr, 0.0);
    EXPECT_GE(m.ssim, -1.0);
    EXPECT_LE(m.ssim, 1.0);
    EXPECT_GE(m.dlip, 0.0);
    EXPECT_GE(m.openness, 0.0);
    EXPECT_LE(m.openness, 1.0);
    EXPECT_EQ(m.psnr, b.frames[i].psnr);
    EXPECT_EQ(m.ssim, b.frames[i].ssim);
    EXPECT_EQ(m.dlip, b.frames[i].dlip);
  }
}

TEST(Pipeline, TrainRendererIsDeterministicAndWritesWeights) {
  const auto dir = fs::temp_directory_path() / "talkhead_pipeline_train";
  const auto ds = small_rig(dir / "data", 3);
  const auto cfg = config_for(ds.manifest, false);
  TrainConfig t;
  t.steps = 2;
  t.seed = 5;
  const auto a = train_renderer(ds.manifest, ds.timeline, cfg, t, dir / "a");
  const auto b = train_renderer(ds.manifest, ds.timeline, cfg, t);
  EXPECT_EQ(a, b);
  EXPECT_EQ(load_weights<float>(dir / "a" / "renderer.avwt"), a);
  EXPECT_TRUE(fs::exists(dir / "a" / "renderer_loss.csv"));
}
