#pragma once

#include "talkhead/network.hpp"
#include "talkhead/weight_store.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace talkhead {

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t steps = 3000;
  double decay_start = 0.5; // fraction of steps after which lr decays linearly to 0
  double lambda_fm = 10.0;
  double lambda_l1 = 10.0;
  double lambda_gan = 1.0;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0; // 0: final weights only

  void validate() const;
};

/// lr at step t (0-based): constant, then linear to exactly 0 at the final step.
double scheduled_lr(const TrainConfig &cfg, std::int64_t step);

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  std::int64_t step = 0;
};

/// Bias-corrected Adam on every tensor of `params` (grads must mirror it).
void adam_step(WeightStore &params, const WeightStore &grads, AdamState &state, double lr,
               const TrainConfig &cfg);

// Losses are means over elements; `grad`, when given, receives d loss / d first argument.
template <typename T>
double smooth_l1(const BasicTensor<T> &pred, const BasicTensor<T> &target,
                 BasicTensor<T> *grad = nullptr);
template <typename T>
double l1_loss(const BasicTensor<T> &pred, const BasicTensor<T> &target,
               BasicTensor<T> *grad = nullptr);
/// 0.5 · mean((D − 1)²)
template <typename T>
double lsgan_generator(const BasicTensor<T> &logits, BasicTensor<T> *grad = nullptr);
/// 0.5 · mean((D(real) − 1)²) + 0.5 · mean(D(fake)²)
template <typename T>
double lsgan_discriminator(const BasicTensor<T> &real_logits, const BasicTensor<T> &fake_logits,
                           BasicTensor<T> *grad_real = nullptr, BasicTensor<T> *grad_fake = nullptr);

/// Fixed network whose activations feed the perceptual loss. Any graph with an
/// "image" input port (3×S×S) and named feature values can be plugged in.
struct PerceptualExtractor {
  NetworkSpec net;
  WeightStore weights;
  std::vector<std::string> features;
};

inline constexpr std::uint64_t kPerceptualSeed = 0x70657263657074ULL;

/// Five conv3×3 + leaky_relu blocks (3→16→32→64→64→64, strides 1,2,2,2,2),
/// He-initialized from kPerceptualSeed and never trained.
PerceptualExtractor default_extractor(std::int64_t canvas, std::uint64_t seed = kPerceptualSeed);

/// One supervised generator output judged by its own patch discriminator.
struct Branch {
  std::string output;      // generator value
  std::string disc_prefix; // "disc_head" or "disc_mouth"
};

struct LossBundle {
  double gan_g = 0;       // unweighted LSGAN generator terms, summed over branches
  double gan_d_head = 0;
  double gan_d_mouth = 0;
  double fm = 0;
  double perc = 0;
  double l1 = 0;
  double generator_total = 0; // weighted objective the generator minimizes
};

/// Every network and weight set the loss bundle depends on.
template <typename T> struct GanModels {
  const NetworkSpec &generator;
  const BasicWeightStore<T> &generator_weights;
  const std::vector<Branch> &branches;
  const std::vector<NetworkSpec> &discriminators; // one per branch
  const BasicWeightStore<T> &discriminator_weights;
  const NetworkSpec &extractor;
  const BasicWeightStore<T> &extractor_weights;
  const std::vector<std::string> &extractor_features;
};

/// Forward pass plus every loss term. With `gen_grads`, fills the gradient of
/// generator_total w.r.t. the generator parameters; with `disc_grads`, the
/// gradient of the summed discriminator losses w.r.t. their parameters.
/// Throws numeric-fault on a non-finite loss.
template <typename T>
LossBundle compute_losses(const GanModels<T> &models, const TrainConfig &cfg,
                          const TensorMap<T> &inputs, const TensorMap<T> &targets,
                          BasicWeightStore<T> *gen_grads = nullptr,
                          BasicWeightStore<T> *disc_grads = nullptr);

class GanTrainer {
public:
  GanTrainer(NetworkSpec generator, std::vector<Branch> branches, std::int64_t canvas,
             TrainConfig cfg, PerceptualExtractor extractor);

  /// Fresh generator and discriminator parameters from one seed.
  void initialize(std::uint64_t seed);

  const NetworkSpec &generator() const { return gen_; }
  const std::vector<NetworkSpec> &discriminators() const { return discs_; }
  const std::vector<Branch> &branches() const { return branches_; }
  const PerceptualExtractor &extractor() const { return extractor_; }
  const TrainConfig &config() const { return cfg_; }
  WeightStore &generator_weights() { return gen_w_; }
  WeightStore &discriminator_weights() { return disc_w_; }
  const WeightStore &generator_weights() const { return gen_w_; }
  const WeightStore &discriminator_weights() const { return disc_w_; }

  /// Losses of one sample without updating anything.
  LossBundle evaluate(const TensorMap<float> &inputs, const TensorMap<float> &targets) const;

  /// One alternating update on one sample. Throws numeric-fault on a
  /// non-finite loss before any parameter changes.
  LossBundle step(const TensorMap<float> &inputs, const TensorMap<float> &targets, double lr,
                  bool update_generator = true, bool update_discriminators = true);

  GanModels<float> models() const;

private:
  NetworkSpec gen_;
  std::vector<Branch> branches_;
  std::vector<NetworkSpec> discs_;
  TrainConfig cfg_;
  PerceptualExtractor extractor_;
  WeightStore gen_w_, disc_w_;
  AdamState gen_adam_, disc_adam_;
};

/// Training pairs: generator inputs and one target per branch output.
struct Sample {
  TensorMap<float> inputs;
  TensorMap<float> targets;
};

struct SampleSource {
  std::size_t size = 0;
  std::function<Sample(std::size_t)> get;
};

/// Keeps every sample in memory.
SampleSource cached(const SampleSource &source);

struct LogRow {
  std::int64_t step;
  LossBundle loss;
  double lr;
};

struct TrainResult {
  WeightStore generator;
  WeightStore discriminators;
  std::vector<LogRow> log;
};

/// Batch-1 loop over a reshuffled frame order each epoch. With `out`, writes
/// loss.csv, checkpoints (checkpoint_<step>.avwt) and a diagnostic snapshot on
/// a numeric fault.
TrainResult train_gan(GanTrainer &trainer, const SampleSource &data, const TrainConfig &cfg,
                      const std::optional<std::filesystem::path> &out = std::nullopt,
                      const std::string &tag = "");

void write_loss_csv(const std::filesystem::path &path, const std::vector<LogRow> &log);

} // namespace talkhead
