#pragma once

#include "talkhead/features.hpp"
#include "talkhead/geometry.hpp"
#include "talkhead/network.hpp"
#include "talkhead/weight_store.hpp"

namespace talkhead {

/// The rig's mouth crop: side 3S/8 centred on the identity-pose mouth.
CropRect default_crop(std::int64_t canvas);

struct RendererConfig {
  std::int64_t canvas = 512;
  std::int64_t k = 34;
  std::int64_t window = 6;
  std::int64_t kp_channels = 3;
  CropRect crop = default_crop(512);
  bool dual_decoder = true;

  std::int64_t latent() const { return canvas / 16; }
  /// Throws a config error on a canvas not divisible by 16, a crop outside the
  /// canvas, or non-positive sizes.
  void validate() const;
  static RendererConfig for_canvas(std::int64_t canvas);
};

// Value names inside the renderer graph.
namespace renderer_values {
inline constexpr const char *drawing = "drawing";
inline constexpr const char *audio = "audio";
inline constexpr const char *kp_latent = "kp_enc.act4";
inline constexpr const char *audio_latent = "audio_enc.reshape";
inline constexpr const char *fused = "fusion.act";
inline constexpr const char *mouth_penultimate = "mouth_dec.act5";
inline constexpr const char *face_penultimate = "face_dec.act5";
inline constexpr const char *pasted = "face_dec.paste";
inline constexpr const char *head = "face_dec.tanh";
inline constexpr const char *mouth = "mouth_dec.tanh";
} // namespace renderer_values

NetworkSpec build_renderer(const RendererConfig &cfg);

/// Keypoint encoder on `input` (c_in × S × S); returns the name of its 64 × S/16 × S/16 output.
std::string add_keypoint_encoder(NetworkSpec &net, const std::string &prefix,
                                 const std::string &input, std::int64_t c_in);
/// Decoder up to the 8-channel penultimate map; returns its value name.
std::string add_decoder_body(NetworkSpec &net, const std::string &prefix, const std::string &input);
/// Final 7×7 conv and tanh; returns the image value name.
std::string add_decoder_head(NetworkSpec &net, const std::string &prefix, const std::string &input);

/// Patch discriminator with parameter prefix `prefix` (e.g. "disc_head").
NetworkSpec build_discriminator(const std::string &prefix, std::int64_t canvas,
                                std::int64_t channels = 3);
/// Block activations used by the feature-matching loss, shallow to deep.
std::vector<std::string> discriminator_features(const std::string &prefix);
std::string discriminator_logits(const std::string &prefix);
/// Receptive field of one logit in input pixels.
inline constexpr std::int64_t kDiscriminatorReceptiveField = 94;

struct RenderOutput {
  Tensor head;  // 3×S×S in [-1, 1]
  Tensor mouth; // 3×S×S; empty when dual_decoder is off
};

TensorMap<float> renderer_inputs(const FeatureWindow &window, const Tensor &drawing);

RenderOutput render(const NetworkSpec &net, const WeightStore &weights, const FeatureWindow &window,
                    const Tensor &drawing);

} // namespace talkhead
