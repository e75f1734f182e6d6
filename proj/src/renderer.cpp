#include "talkhead/renderer.hpp"
#include "talkhead/rig.hpp"

namespace talkhead {

namespace {

void conv_block(NetworkSpec &net, const std::string &prefix, const std::string &index,
                std::string &value, LayerSpec conv) {
  const auto c_out = conv.c_out;
  net.add(std::move(conv));
  net.add(layers::instance_norm(prefix + ".norm" + index, prefix + ".conv" + index,
                                prefix + ".norm" + index, c_out));
  net.add(layers::leaky_relu(prefix + ".act" + index, prefix + ".norm" + index,
                             prefix + ".act" + index));
  value = prefix + ".act" + index;
}

} // namespace

CropRect default_crop(std::int64_t canvas) { return rig_crop(RigParams{}, canvas); }

RendererConfig RendererConfig::for_canvas(std::int64_t canvas) {
  RendererConfig cfg;
  cfg.canvas = canvas;
  cfg.crop = default_crop(canvas);
  return cfg;
}

void RendererConfig::validate() const {
  require(canvas > 0 && canvas % 16 == 0, ErrorKind::config,
          "renderer canvas " + std::to_string(canvas) + " is not divisible by 16");
  require(k >= 1 && window >= 1 && kp_channels >= 1, ErrorKind::config,
          "renderer k, window and keypoint channels must be positive");
  require(crop.side > 0 && crop.top >= 0 && crop.left >= 0 && crop.top + crop.side <= canvas &&
              crop.left + crop.side <= canvas,
          ErrorKind::config, "mouth crop rect lies outside the canvas");
}

std::string add_keypoint_encoder(NetworkSpec &net, const std::string &p, const std::string &input,
                                 std::int64_t c_in) {
  const std::int64_t widths[] = {8, 16, 32, 64};
  std::string value = input;
  for (int i = 0; i < 4; ++i) {
    const auto idx = std::to_string(i + 1);
    conv_block(net, p, idx, value,
               layers::conv2d(p + ".conv" + idx, value, p + ".conv" + idx,
                              i == 0 ? c_in : widths[i - 1], widths[i], 3, 2, 1));
    if (i < 3) {
      net.add(layers::residual_block(p + ".res" + idx, value, p + ".res" + idx, widths[i]));
      value = p + ".res" + idx;
    }
  }
  return value;
}

std::string add_decoder_body(NetworkSpec &net, const std::string &p, const std::string &input) {
  const std::int64_t widths[] = {64, 32, 16, 8, 8};
  std::string value = input;
  for (int i = 0; i < 4; ++i) {
    const auto idx = std::to_string(i + 1);
    auto up = layers::tconv2d(p + ".conv" + idx, value, p + ".conv" + idx, widths[i],
                              widths[i + 1], 3, 2, 1, 1);
    conv_block(net, p, idx, value, std::move(up));
  }
  conv_block(net, p, "5", value, layers::conv2d(p + ".conv5", value, p + ".conv5", 8, 8, 3, 1, 1));
  return value;
}

std::string add_decoder_head(NetworkSpec &net, const std::string &p, const std::string &input) {
  net.add(layers::conv2d(p + ".out", input, p + ".out", 8, 3, 7, 1, 3, true));
  net.add(layers::tanh(p + ".tanh", p + ".out", p + ".tanh"));
  return p + ".tanh";
}

NetworkSpec build_renderer(const RendererConfig &cfg) {
  cfg.validate();
  namespace v = renderer_values;
  const auto L = cfg.latent();
  NetworkSpec net;
  net.name = cfg.dual_decoder ? "renderer" : "renderer-single-decoder";
  net.inputs = {{v::drawing, {cfg.kp_channels, cfg.canvas, cfg.canvas}},
                {v::audio, {cfg.window, cfg.k}}};

  const auto kp = add_keypoint_encoder(net, "kp_enc", v::drawing, cfg.kp_channels);

  net.add(layers::conv1d("audio_enc.conv", v::audio, "audio_enc.conv", cfg.window, 1, 1));
  net.add(layers::leaky_relu("audio_enc.act0", "audio_enc.conv", "audio_enc.act0"));
  net.add(layers::linear("audio_enc.fc1", "audio_enc.act0", "audio_enc.fc1", cfg.k, L * L));
  net.add(layers::leaky_relu("audio_enc.act1", "audio_enc.fc1", "audio_enc.act1"));
  net.add(layers::linear("audio_enc.fc2", "audio_enc.act1", "audio_enc.fc2", L * L, L * L));
  net.add(layers::leaky_relu("audio_enc.act2", "audio_enc.fc2", "audio_enc.act2"));
  net.add(layers::reshape(v::audio_latent, "audio_enc.act2", v::audio_latent, {1, L, L}));

  net.add(layers::concat("fusion.cat", {kp, v::audio_latent}, "fusion.cat"));
  std::string fused;
  conv_block(net, "fusion", "", fused,
             layers::conv2d("fusion.conv", "fusion.cat", "fusion.conv", 65, 64, 3, 1, 1));

  const auto face = add_decoder_body(net, "face_dec", fused);
  if (cfg.dual_decoder) {
    const auto mouth = add_decoder_body(net, "mouth_dec", fused);
    net.add(layers::resize_bilinear("mouth_dec.resize", mouth, "mouth_dec.resize", cfg.crop.side,
                                    cfg.crop.side));
    net.add(layers::paste(v::pasted, face, "mouth_dec.resize", v::pasted, cfg.crop.top,
                          cfg.crop.left));
    add_decoder_head(net, "face_dec", v::pasted);
    add_decoder_head(net, "mouth_dec", mouth);
    net.outputs = {v::head, v::mouth};
  } else {
    add_decoder_head(net, "face_dec", face);
    net.outputs = {v::head};
  }
  net.infer_shapes();
  return net;
}

NetworkSpec build_discriminator(const std::string &p, std::int64_t canvas, std::int64_t channels) {
  NetworkSpec net;
  net.name = p;
  net.inputs = {{"image", {channels, canvas, canvas}}};
  const std::int64_t widths[] = {channels, 64, 128, 256, 512};
  std::string value = "image";
  for (int i = 0; i < 4; ++i) {
    const auto idx = std::to_string(i + 1);
    const bool norm = i > 0;
    net.add(layers::conv2d(p + ".conv" + idx, value, p + ".conv" + idx, widths[i], widths[i + 1], 4,
                           2, 1, !norm));
    std::string pre = p + ".conv" + idx;
    if (norm) {
      net.add(layers::instance_norm(p + ".norm" + idx, pre, p + ".norm" + idx, widths[i + 1]));
      pre = p + ".norm" + idx;
    }
    net.add(layers::leaky_relu(p + ".act" + idx, pre, p + ".act" + idx));
    value = p + ".act" + idx;
  }
  net.add(layers::conv2d(p + ".logits", value, p + ".logits", 512, 1, 4, 1, 1, true));
  net.outputs = {p + ".logits"};
  net.infer_shapes();
  return net;
}

std::vector<std::string> discriminator_features(const std::string &p) {
  return {p + ".act1", p + ".act2", p + ".act3", p + ".act4"};
}

std::string discriminator_logits(const std::string &p) { return p + ".logits"; }

TensorMap<float> renderer_inputs(const FeatureWindow &window, const Tensor &drawing) {
  return {{renderer_values::drawing, drawing}, {renderer_values::audio, window.as_channels()}};
}

RenderOutput render(const NetworkSpec &net, const WeightStore &weights, const FeatureWindow &window,
                    const Tensor &drawing) {
  const auto act = forward(net, weights, renderer_inputs(window, drawing));
  RenderOutput out;
  out.head = act.at(renderer_values::head);
  if (act.values.count(renderer_values::mouth))
    out.mouth = act.at(renderer_values::mouth);
  return out;
}

} // namespace talkhead
