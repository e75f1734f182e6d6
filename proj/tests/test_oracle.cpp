#include "talkhead/image_io.hpp"
#include "talkhead/kernels.hpp"
#include "talkhead/oracle.hpp"
#include "talkhead/renderer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace talkhead;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("talkhead_oracle_" + name);
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

Oracle untrained(std::int64_t canvas, std::uint64_t seed = 1) {
  Oracle o{OracleConfig::for_canvas(canvas), build_oracle(OracleConfig::for_canvas(canvas)), {}};
  o.weights = init_parameters<float>(o.nets.mouth, seed);
  o.weights.merge(init_parameters<float>(o.nets.head, seed + 1));
  return o;
}

float max_abs_diff(const Tensor &a, const Tensor &b) {
  float m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

const std::vector<Point2> &ref_points(const DatasetManifest &m, std::size_t i) {
  return m.frames[i].keypoints.points;
}

// R = Rz(roll)·Ry(yaw)·Rx(pitch) gives pitch = atan2(R21, R22).
double pitch_of(const PoseMatrix &p) {
  const auto r = p.rotation();
  return std::atan2(r(2, 1), r(2, 2)) * 180.0 / M_PI;
}

} // namespace

TEST(Oracle, ShapesAtFullScale) {
  const auto nets = build_oracle(OracleConfig::for_canvas(512));
  const auto head = nets.head.infer_shapes();
  EXPECT_EQ(nets.head.input(oracle_values::head_input).shape, (Shape{4, 512, 512}));
  EXPECT_EQ(head.at(oracle_values::head_output), (Shape{3, 512, 512}));
  const auto mouth = nets.mouth.infer_shapes();
  EXPECT_EQ(nets.mouth.input(oracle_values::mouth_input).shape, (Shape{1, 512, 512}));
  EXPECT_EQ(mouth.at(oracle_values::mouth_output), (Shape{3, 512, 512}));
  for (const auto &slot : nets.head.parameter_slots())
    EXPECT_EQ(slot.name.rfind("oracle_head.", 0), 0u) << slot.name;
  for (const auto &slot : nets.mouth.parameter_slots())
    EXPECT_EQ(slot.name.rfind("oracle_mouth.", 0), 0u) << slot.name;
}

TEST(Oracle, ConfigInvariants) {
  auto cfg = OracleConfig::for_canvas(64);
  EXPECT_NO_THROW(cfg.validate());
  cfg.mouth_resolution = 16; // below c = 24
  EXPECT_THROW(cfg.validate(), Error);
  cfg = OracleConfig::for_canvas(64);
  cfg.crop = {0, 0, 80};
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Oracle, PastedMouthIsExactResize) {
  const auto crop = default_crop(64);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor drawing({1, 64, 64}), mouth({3, 64, 64});
  for (float &v : drawing.data())
    v = u(rng);
  for (float &v : mouth.data())
    v = u(rng);
  const auto in = head_net_input(drawing, mouth, crop);
  ASSERT_EQ(in.shape(), (Shape{4, 64, 64}));
  const auto small = kernels::resize_bilinear_forward(mouth, crop.side, crop.side);
  for (std::int64_t y = 0; y < 64; ++y)
    for (std::int64_t x = 0; x < 64; ++x) {
      EXPECT_EQ(in.at(0, y, x), drawing.at(0, y, x));
      const bool inside = y >= crop.top && y < crop.top + crop.side && x >= crop.left &&
                          x < crop.left + crop.side;
      for (std::int64_t c = 0; c < 3; ++c)
        EXPECT_EQ(in.at(c + 1, y, x), inside ? small.at(c, y - crop.top, x - crop.left) : 0.f);
    }
}

TEST(Oracle, ZeroWeightsGiveConstantOutputs) {
  auto o = untrained(32);
  for (auto &[name, t] : o.weights.tensors())
    t.fill(0.f);
  o.weights.get("oracle_head.dec.out.bias").fill(0.25f);
  const auto dir = scratch("zero");
  const auto ds = rig_dataset(RigParams{}, 2, 1, 32, 34, dir);
  const auto f = ds.manifest.frames[0];
  const auto out = oracle_render(o, ds.manifest.identity, f.keypoints, f.contour);
  for (float v : out.head.data())
    EXPECT_FLOAT_EQ(v, std::tanh(0.25f));
  for (float v : out.mouth.data())
    EXPECT_EQ(v, 0.f);
}

TEST(Oracle, RenderIsDeterministic) {
  const auto o = untrained(32);
  const auto dir = scratch("det");
  const auto ds = rig_dataset(RigParams{}, 2, 1, 32, 34, dir);
  const auto &f = ds.manifest.frames[1];
  const auto a = oracle_render(o, ds.manifest.identity, f.keypoints, f.contour);
  const auto b = oracle_render(o, ds.manifest.identity, f.keypoints, f.contour);
  EXPECT_EQ(a.head, b.head);
  EXPECT_EQ(a.mouth, b.mouth);
}

TEST(Synthesize, SelfMashReconstructs) {
  const auto o = untrained(32);
  const auto ds = rig_dataset(RigParams{}, 5, 3, 32, 34, scratch("self"));
  for (std::size_t i = 0; i < 5; ++i) {
    const auto s = synthesize_frame(ds.manifest, i, i, o);
    ASSERT_TRUE(s);
    const auto &src = ds.manifest.frames[i];
    for (std::size_t p = 0; p < src.keypoints.size(); ++p)
      EXPECT_LT((s->record.keypoints.points[p] - src.keypoints.points[p]).norm(), 1e-9);
    const auto direct = oracle_render(o, ds.manifest.identity, src.keypoints, src.contour);
    EXPECT_LT(max_abs_diff(s->images.head, direct.head), 1e-5f);
  }
}

TEST(Synthesize, LargePoseDeltaIsSkipped) {
  auto ds = rig_dataset(RigParams{}, 2, 3, 32, 34, scratch("skip")).manifest;
  ds.frames[0].pose = PoseMatrix::from_euler(0, 0, 0);
  ds.frames[1].pose = PoseMatrix::from_euler(40, 0, 0);
  const auto o = untrained(32);
  EXPECT_FALSE(synthesize_frame(ds, 0, 1, o));
  EXPECT_FALSE(synthesize_frame(ds, 0, 1, o, 25.0));
  EXPECT_TRUE(synthesize_frame(ds, 0, 1, o, 45.0));
  EXPECT_TRUE(synthesize_frame(ds, 1, 1, o));
}

TEST(Augment, RatioCounts) {
  const auto src = scratch("counts");
  const auto ds = rig_dataset(RigParams{}, 20, 5, 32, 34, src / "rig");
  const auto o = untrained(32);
  auto count = [](const DatasetManifest &m) {
    std::int64_t syn = 0;
    for (const auto &f : m.frames)
      syn += f.synthetic;
    return syn;
  };
  const auto all_real = build_augmented_dataset(ds.manifest, o, {0.0, 20, 1}, src / "r0");
  EXPECT_EQ(all_real.frames.size(), 20u);
  EXPECT_EQ(count(all_real), 0);
  // Identity: every source frame, unchanged apart from path rebasing.
  const auto rebased = rebase(ds.manifest, src / "r0");
  for (std::size_t i = 0; i < 20; ++i)
    EXPECT_EQ(all_real.frames[i], rebased.frames[i]);
  const auto all_syn = build_augmented_dataset(ds.manifest, o, {1.0, 100, 1}, src / "r1");
  EXPECT_EQ(count(all_syn), 100);
  EXPECT_EQ(all_syn.frames.size(), 100u);
  const auto mixed = build_augmented_dataset(ds.manifest, o, {0.75, 10, 1}, src / "r75");
  EXPECT_EQ(count(mixed), 8); // ceil(7.5)
  EXPECT_THROW(build_augmented_dataset(ds.manifest, o, {0.0, 21, 1}, src / "big"), Error);
  EXPECT_THROW(build_augmented_dataset(ds.manifest, o, {1.5, 10, 1}, src / "bad"), Error);
  // The emitted manifest loads back with all images present.
  const auto loaded = load_manifest(src / "r75" / "manifest.json");
  EXPECT_EQ(loaded.frames.size(), 10u);
  EXPECT_NO_THROW(load_frame_images(loaded, 9));
  fs::remove_all(src);
}

TEST(Augment, ThousandFramesReproducible) {
  const auto src = scratch("thousand");
  const auto ds = rig_dataset(RigParams{}, 250, 5, 32, 34, src / "rig");
  const auto o = untrained(32);
  const auto a = build_augmented_dataset(ds.manifest, o, {0.8, 1000, 42}, src / "a");
  const auto b = build_augmented_dataset(ds.manifest, o, {0.8, 1000, 42}, src / "b");
  std::int64_t syn = 0;
  for (const auto &f : a.frames)
    syn += f.synthetic;
  EXPECT_EQ(syn, 800);
  EXPECT_EQ(a.frames.size() - syn, 200u);
  EXPECT_EQ(slurp(src / "a" / "manifest.json"), slurp(src / "b" / "manifest.json"));
  for (std::size_t n : {0u, 399u, 799u})
    EXPECT_EQ(slurp(src / "a" / a.frames[200 + n].image), slurp(src / "b" / b.frames[200 + n].image));
  const auto c = build_augmented_dataset(ds.manifest, o, {0.8, 1000, 43}, src / "c");
  EXPECT_NE(slurp(src / "a" / "manifest.json"), slurp(src / "c" / "manifest.json"));
  fs::remove_all(src);
}

TEST(Augment, ProvenanceAudit) {
  const auto src = scratch("audit");
  const auto ds = rig_dataset(RigParams{}, 30, 8, 32, 34, src / "rig");
  const auto m = build_augmented_dataset(ds.manifest, untrained(32), {1.0, 60, 3}, src / "aug");
  const auto &layout = ds.manifest.identity.layout;
  for (const auto &f : m.frames) {
    ASSERT_TRUE(f.synthetic);
    ASSERT_TRUE(f.provenance);
    const auto &fi = ds.manifest.frames[static_cast<std::size_t>(f.provenance->mouth_source)];
    const auto &fj = ds.manifest.frames[static_cast<std::size_t>(f.provenance->pose_source)];
    for (int u : layout.upper)
      EXPECT_LT((f.keypoints.points[u] - fj.keypoints.points[u]).norm(), 1e-9);
    EXPECT_EQ(f.feature_index, fi.feature_index);
    EXPECT_EQ(f.pose.matrix(), fj.pose.matrix());
    EXPECT_EQ(f.openness, fi.openness);
  }
  fs::remove_all(src);
}

TEST(Augment, BreaksOpennessPitchCorrelation) {
  const auto src = scratch("decorrelate");
  const auto ds = rig_dataset(RigParams{}, 500, 7, 32, 34, src / "rig");
  std::vector<double> pitch, open;
  for (const auto &f : ds.manifest.frames) {
    pitch.push_back(pitch_of(f.pose));
    open.push_back(ds.timeline.at(f.feature_index, 1));
  }
  ASSERT_GE(pearson(pitch, open), 0.8);
  const auto m = build_augmented_dataset(ds.manifest, untrained(32), {1.0, 1000, 11}, src / "aug");
  pitch.clear();
  open.clear();
  for (const auto &f : m.frames) {
    pitch.push_back(pitch_of(f.pose));
    open.push_back(ds.timeline.at(f.feature_index, 1));
  }
  EXPECT_LE(std::abs(pearson(pitch, open)), 0.1);
  fs::remove_all(src);
}

TEST(Jitter, IdentityJitterReproducesSources) {
  const auto src = scratch("jitter");
  const auto ds = rig_dataset(RigParams{}, 4, 2, 32, 34, src / "rig");
  const auto m = build_jitter_dataset(ds.manifest, {6, 1, 0.0, 0.0}, src / "j0");
  ASSERT_EQ(m.frames.size(), 6u);
  for (std::size_t n = 0; n < m.frames.size(); ++n) {
    const auto imgs = load_frame_images(m, n);
    bool matched = false;
    for (std::size_t i = 0; i < 4 && !matched; ++i) {
      const auto ref = load_frame_images(ds.manifest, i);
      matched = imgs.head == ref.head && imgs.mouth == ref.mouth;
      for (std::size_t p = 0; matched && p < ref_points(ds.manifest, i).size(); ++p)
        matched = (m.frames[n].keypoints.points[p] - ref_points(ds.manifest, i)[p]).norm() < 1e-9;
    }
    EXPECT_TRUE(matched) << n;
  }
  const auto a = build_jitter_dataset(ds.manifest, {5, 9}, src / "ja");
  const auto b = build_jitter_dataset(ds.manifest, {5, 9}, src / "jb");
  EXPECT_EQ(slurp(src / "ja" / "manifest.json"), slurp(src / "jb" / "manifest.json"));
  EXPECT_EQ(slurp(src / "ja" / a.frames[3].image), slurp(src / "jb" / b.frames[3].image));
  fs::remove_all(src);
}

TEST(TrainOracle, SmokeAndDeterminism) {
  const auto src = scratch("train");
  const auto ds = rig_dataset(RigParams{}, 3, 2, 32, 34, src / "rig");
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.seed = 5;
  const auto a = train_oracle(ds.manifest, OracleConfig::for_canvas(32), cfg, src / "out");
  const auto b = train_oracle(ds.manifest, OracleConfig::for_canvas(32), cfg);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_GT(a.weights.subset("oracle_mouth.").size(), 0u);
  EXPECT_GT(a.weights.subset("oracle_head.").size(), 0u);
  EXPECT_TRUE(fs::exists(src / "out" / "oracle_mouth_loss.csv"));
  EXPECT_TRUE(fs::exists(src / "out" / "oracle_head_loss.csv"));
  EXPECT_TRUE(fs::exists(src / "out" / "oracle.avwt"));
  fs::remove_all(src);
}
