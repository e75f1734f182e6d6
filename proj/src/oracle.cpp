#include "talkhead/oracle.hpp"
#include "talkhead/image_io.hpp"
#include "talkhead/kernels.hpp"
#include "talkhead/log.hpp"
#include "talkhead/renderer.hpp"
#include "talkhead/seed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

namespace talkhead {

void OracleConfig::validate() const {
  require(canvas > 0 && canvas % 16 == 0, ErrorKind::config,
          "oracle canvas must be a positive multiple of 16");
  require(mouth_resolution > 0 && mouth_resolution % 16 == 0, ErrorKind::config,
          "mouth resolution must be a positive multiple of 16");
  require(crop.side > 0 && crop.side <= canvas && crop.top >= 0 && crop.left >= 0 &&
              crop.top + crop.side <= canvas && crop.left + crop.side <= canvas,
          ErrorKind::config, "oracle crop must lie inside the canvas");
  require(mouth_resolution >= crop.side, ErrorKind::config,
          "mouth resolution must be at least the crop side");
}

OracleConfig OracleConfig::for_canvas(std::int64_t canvas) {
  return {canvas, canvas, default_crop(canvas)};
}

OracleNets build_oracle(const OracleConfig &cfg) {
  cfg.validate();
  namespace v = oracle_values;
  OracleNets nets;
  nets.mouth.name = "oracle_mouth";
  nets.mouth.inputs = {{v::mouth_input, {1, cfg.mouth_resolution, cfg.mouth_resolution}}};
  auto latent = add_keypoint_encoder(nets.mouth, "oracle_mouth.enc", v::mouth_input, 1);
  nets.mouth.outputs = {add_decoder_head(
      nets.mouth, "oracle_mouth.dec", add_decoder_body(nets.mouth, "oracle_mouth.dec", latent))};
  nets.mouth.infer_shapes();

  nets.head.name = "oracle_head";
  nets.head.inputs = {{v::head_input, {4, cfg.canvas, cfg.canvas}}};
  latent = add_keypoint_encoder(nets.head, "oracle_head.enc", v::head_input, 4);
  nets.head.outputs = {add_decoder_head(nets.head, "oracle_head.dec",
                                        add_decoder_body(nets.head, "oracle_head.dec", latent))};
  nets.head.infer_shapes();
  return nets;
}

Tensor head_net_input(const Tensor &drawing, const Tensor &mouth, const CropRect &crop) {
  require(drawing.rank() == 3 && drawing.dim(0) == 1, ErrorKind::shape,
          "head-net drawing must be 1×S×S, got " + shape_string(drawing.shape()));
  require(mouth.rank() == 3 && mouth.dim(0) == 3, ErrorKind::shape,
          "mouth image must be 3×M×M, got " + shape_string(mouth.shape()));
  const auto small = kernels::resize_bilinear_forward(mouth, crop.side, crop.side);
  const Tensor canvas({3, drawing.dim(1), drawing.dim(2)});
  const auto pasted = kernels::paste_forward(canvas, small, crop.top, crop.left);
  return kernels::concat_channels<float>({&drawing, &pasted});
}

namespace {

FrameRecord drawing_frame(const KeypointSet2D &keypoints, const std::vector<Polyline> &contour,
                          const CropRect &crop) {
  FrameRecord f;
  f.keypoints = keypoints;
  f.contour = contour;
  f.crop = crop;
  return f;
}

} // namespace

OracleOutput oracle_render(const Oracle &oracle, const IdentityConfig &identity,
                           const KeypointSet2D &keypoints, const std::vector<Polyline> &contour) {
  namespace v = oracle_values;
  const auto &cfg = oracle.config;
  const auto frame = drawing_frame(keypoints, contour, cfg.crop);
  OracleOutput out;
  out.mouth = forward(oracle.nets.mouth, oracle.weights,
                      {{v::mouth_input, oracle_mouth_drawing(identity, frame, cfg.canvas,
                                                             cfg.mouth_resolution)}})
                  .at(v::mouth_output);
  const auto input =
      head_net_input(oracle_head_drawing(identity, frame, cfg.canvas), out.mouth, cfg.crop);
  out.head = forward(oracle.nets.head, oracle.weights, {{v::head_input, input}}).at(v::head_output);
  return out;
}

std::optional<SyntheticFrame> synthesize_frame(const DatasetManifest &dataset, std::size_t i,
                                               std::size_t j, const Oracle &oracle,
                                               double max_pose_delta) {
  const auto &fi = dataset.frames.at(i);
  const auto &fj = dataset.frames.at(j);
  if (rotation_angle_between(fi.pose, fj.pose) > max_pose_delta)
    return std::nullopt;
  const auto &id = dataset.identity;
  SyntheticFrame s;
  auto &r = s.record;
  r.keypoints = mash(fi.keypoints, fi.pose, fj.keypoints, fj.pose, id.canonical, id.projection,
                     id.layout);
  r.pose = fj.pose;
  r.feature_index = fi.feature_index;
  r.crop = oracle.config.crop;
  r.synthetic = true;
  r.provenance = Provenance{static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)};
  r.contour = fj.contour;
  r.openness = fi.openness;
  s.images = oracle_render(oracle, id, r.keypoints, r.contour);
  return s;
}

namespace {

std::string frame_name(const char *stem, std::size_t n) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "frames/%s_%05zu.png", stem, n);
  return buf;
}

Tensor mouth_at_canvas(const Tensor &mouth, std::int64_t canvas) {
  if (mouth.dim(1) == canvas && mouth.dim(2) == canvas)
    return mouth;
  return kernels::resize_bilinear_forward(mouth, canvas, canvas);
}

// Distinct real frames, drawn uniformly and kept in source order.
std::vector<std::size_t> pick_real(std::size_t available, std::size_t wanted, std::mt19937_64 &rng) {
  std::vector<std::size_t> idx(available);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(wanted);
  std::sort(idx.begin(), idx.end());
  return idx;
}

} // namespace

DatasetManifest build_augmented_dataset(const DatasetManifest &dataset, const Oracle &oracle,
                                        const AugmentOptions &opt,
                                        const std::filesystem::path &out) {
  require(opt.ratio >= 0 && opt.ratio <= 1, ErrorKind::config, "augment ratio must lie in [0, 1]");
  require(opt.count >= 0, ErrorKind::config, "augment count must be non-negative");
  require(oracle.config.canvas == dataset.canvas, ErrorKind::config,
          "oracle canvas " + std::to_string(oracle.config.canvas) + " differs from dataset canvas " +
              std::to_string(dataset.canvas));
  const auto n = dataset.frames.size();
  const auto synthetic =
      static_cast<std::size_t>(std::ceil(opt.ratio * static_cast<double>(opt.count) - 1e-9));
  const auto real = static_cast<std::size_t>(opt.count) - synthetic;
  require(real <= n && (synthetic == 0 || n > 0), ErrorKind::usage,
          "dataset has " + std::to_string(n) + " frames; " + std::to_string(real) +
              " real frames were requested");

  std::filesystem::create_directories(out / "frames");
  auto result = rebase(dataset, out);
  const auto sources = std::move(result.frames);
  result.frames.clear();
  std::mt19937_64 rng(derive_seed(opt.seed, "augment"));
  for (auto idx : pick_real(n, real, rng))
    result.frames.push_back(sources[idx]);

  std::uniform_int_distribution<std::size_t> pick(0, n == 0 ? 0 : n - 1);
  const std::size_t max_attempts = 1000 * std::max<std::size_t>(synthetic, 1);
  std::size_t attempts = 0, skipped = 0;
  for (std::size_t s = 0; s < synthetic;) {
    require(++attempts <= max_attempts, ErrorKind::usage,
            "pose-delta threshold rejects nearly every frame pair");
    const auto i = pick(rng);
    const auto j = pick(rng);
    auto frame = synthesize_frame(dataset, i, j, oracle, opt.max_pose_delta);
    if (!frame) {
      ++skipped;
      continue;
    }
    frame->record.image = frame_name("syn_head", s);
    frame->record.mouth_image = frame_name("syn_mouth", s);
    write_png(out / frame->record.image, frame->images.head);
    write_png(out / frame->record.mouth_image, mouth_at_canvas(frame->images.mouth, dataset.canvas));
    result.frames.push_back(std::move(frame->record));
    ++s;
  }
  if (skipped > 0)
    log::info("augment: resampled " + std::to_string(skipped) + " pairs over the pose-delta limit");
  save_manifest(result, out / "manifest.json");
  return result;
}

namespace {

struct Affine2 {
  double c = 1, s = 0, tx = 0, ty = 0, cx = 0, cy = 0; // rotate about (cx, cy), then shift

  Point2 apply(const Point2 &p) const {
    const double x = p.x() - cx, y = p.y() - cy;
    return {c * x - s * y + cx + tx, s * x + c * y + cy + ty};
  }
  Point2 invert(const Point2 &p) const {
    const double x = p.x() - cx - tx, y = p.y() - cy - ty;
    return {c * x + s * y + cx, -s * x + c * y + cy};
  }
};

// Bilinear sample at continuous pixel coordinates (pixel centres at +0.5),
// edges replicated.
float sample(const Tensor &img, std::int64_t ch, double x, double y) {
  const auto h = img.dim(1), w = img.dim(2);
  x = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::int64_t>(x), y0 = static_cast<std::int64_t>(y);
  const auto x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  return static_cast<float>((1 - fy) * ((1 - fx) * img.at(ch, y0, x0) + fx * img.at(ch, y0, x1)) +
                            fy * ((1 - fx) * img.at(ch, y1, x0) + fx * img.at(ch, y1, x1)));
}

Tensor warp_head(const Tensor &head, const Affine2 &a) {
  Tensor out(head.shape());
  for (std::int64_t y = 0; y < head.dim(1); ++y)
    for (std::int64_t x = 0; x < head.dim(2); ++x) {
      const auto src = a.invert({x + 0.5, y + 0.5});
      for (std::int64_t ch = 0; ch < head.dim(0); ++ch)
        out.at(ch, y, x) = sample(head, ch, src.x(), src.y());
    }
  return out;
}

// The mouth image is the crop viewport at high resolution; content that the
// warp brings in from outside the crop comes from the head image.
Tensor warp_mouth(const Tensor &mouth, const Tensor &head, const CropRect &crop, const Affine2 &a) {
  Tensor out(mouth.shape());
  const double scale = static_cast<double>(crop.side) / static_cast<double>(mouth.dim(2));
  for (std::int64_t v = 0; v < mouth.dim(1); ++v)
    for (std::int64_t u = 0; u < mouth.dim(2); ++u) {
      const Point2 q{crop.left + (u + 0.5) * scale, crop.top + (v + 0.5) * scale};
      const auto src = a.invert(q);
      const double mu = (src.x() - crop.left) / scale, mv = (src.y() - crop.top) / scale;
      const bool inside = mu >= 0 && mv >= 0 && mu < mouth.dim(2) && mv < mouth.dim(1);
      for (std::int64_t ch = 0; ch < 3; ++ch)
        out.at(ch, v, u) = inside ? sample(mouth, ch, mu, mv) : sample(head, ch, src.x(), src.y());
    }
  return out;
}

} // namespace

DatasetManifest build_jitter_dataset(const DatasetManifest &dataset, const JitterOptions &opt,
                                     const std::filesystem::path &out) {
  require(opt.count >= 0 && opt.max_shift >= 0 && opt.max_rotation >= 0, ErrorKind::config,
          "jitter options must be non-negative");
  require(!dataset.frames.empty() || opt.count == 0, ErrorKind::usage, "dataset is empty");
  std::filesystem::create_directories(out / "frames");
  auto result = rebase(dataset, out);
  const auto sources = result.frames;
  result.frames.clear();
  std::mt19937_64 rng(derive_seed(opt.seed, "jitter"));
  std::uniform_int_distribution<std::size_t> pick(0, dataset.frames.size() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double S = static_cast<double>(dataset.canvas);
  for (std::int64_t n = 0; n < opt.count; ++n) {
    const auto idx = pick(rng);
    const double angle = unit(rng) * opt.max_rotation * std::numbers::pi / 180.0;
    Affine2 a{std::cos(angle), std::sin(angle), unit(rng) * opt.max_shift * S,
              unit(rng) * opt.max_shift * S, S / 2, S / 2};
    auto f = sources[idx];
    const auto images = load_frame_images(dataset, idx);
    for (auto &p : f.keypoints.points)
      p = a.apply(p);
    for (auto &line : f.contour)
      for (auto &p : line)
        p = a.apply(p);
    f.image = frame_name("jit_head", static_cast<std::size_t>(n));
    f.mouth_image = frame_name("jit_mouth", static_cast<std::size_t>(n));
    write_png(out / f.image, warp_head(images.head, a));
    write_png(out / f.mouth_image, warp_mouth(images.mouth, images.head, f.crop, a));
    result.frames.push_back(std::move(f));
  }
  save_manifest(result, out / "manifest.json");
  return result;
}

Oracle train_oracle(const DatasetManifest &dataset, const OracleConfig &cfg,
                    const TrainConfig &train, const std::optional<std::filesystem::path> &out) {
  namespace v = oracle_values;
  cfg.validate();
  require(cfg.canvas == dataset.canvas, ErrorKind::config,
          "oracle canvas differs from the dataset canvas");
  std::vector<std::size_t> real;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i)
    if (!dataset.frames[i].synthetic)
      real.push_back(i);
  require(!real.empty(), ErrorKind::usage, "oracle training needs real frames");

  Oracle oracle{cfg, build_oracle(cfg), {}};
  const auto M = cfg.mouth_resolution;
  const auto &id = dataset.identity;
  auto mouth_target = [&](const Tensor &mouth) {
    return M == dataset.canvas ? mouth : kernels::resize_bilinear_forward(mouth, M, M);
  };

  // Frames keep the fixed oracle crop so drawings line up with the paste.
  auto frame = [&](std::size_t i) {
    auto f = dataset.frames[real[i]];
    f.crop = cfg.crop;
    return f;
  };

  const SampleSource mouth_data = cached({real.size(), [&](std::size_t i) {
                                            const auto f = frame(i);
                                            const auto img = load_frame_images(dataset, real[i]);
                                            Sample s;
                                            s.inputs[v::mouth_input] =
                                                oracle_mouth_drawing(id, f, cfg.canvas, M);
                                            s.targets[v::mouth_output] = mouth_target(img.mouth);
                                            return s;
                                          }});
  auto mouth_cfg = train;
  mouth_cfg.seed = derive_seed(train.seed, "oracle_mouth");
  GanTrainer mouth(oracle.nets.mouth, {{v::mouth_output, "disc_mouth"}}, M, mouth_cfg,
                   default_extractor(M));
  oracle.weights.merge(train_gan(mouth, mouth_data, mouth_cfg, out, "oracle_mouth").generator);

  const SampleSource head_data = cached({real.size(), [&](std::size_t i) {
                                           const auto f = frame(i);
                                           const auto img = load_frame_images(dataset, real[i]);
                                           Sample s;
                                           s.inputs[v::head_input] = head_net_input(
                                               oracle_head_drawing(id, f, cfg.canvas),
                                               mouth_target(img.mouth), cfg.crop);
                                           s.targets[v::head_output] = img.head;
                                           return s;
                                         }});
  auto head_cfg = train;
  head_cfg.seed = derive_seed(train.seed, "oracle_head");
  GanTrainer head(oracle.nets.head, {{v::head_output, "disc_head"}}, cfg.canvas, head_cfg,
                  default_extractor(cfg.canvas));
  oracle.weights.merge(train_gan(head, head_data, head_cfg, out, "oracle_head").generator);
  if (out)
    save_weights(*out / "oracle.avwt", oracle.weights);
  return oracle;
}

} // namespace talkhead
