#include "talkhead/training.hpp"
#include "talkhead/log.hpp"
#include "talkhead/renderer.hpp"
#include "talkhead/seed.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace talkhead {

void TrainConfig::validate() const {
  require(lr > 0, ErrorKind::config, "training lr must be positive");
  require(lambda_fm >= 0 && lambda_l1 >= 0 && lambda_gan >= 0, ErrorKind::config,
          "loss weights must be non-negative");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0, ErrorKind::config,
          "Adam betas must lie in [0, 1) and eps must be positive");
  require(steps >= 1, ErrorKind::config, "training needs at least one step");
  require(decay_start >= 0 && decay_start <= 1, ErrorKind::config,
          "decay_start must lie in [0, 1]");
  require(checkpoint_every >= 0, ErrorKind::config, "checkpoint_every must be non-negative");
}

double scheduled_lr(const TrainConfig &cfg, std::int64_t step) {
  const auto start = static_cast<std::int64_t>(std::floor(cfg.decay_start * static_cast<double>(cfg.steps)));
  const auto last = cfg.steps - 1;
  if (step < start)
    return cfg.lr;
  if (last <= start)
    return step >= last ? 0.0 : cfg.lr;
  return cfg.lr * static_cast<double>(last - step) / static_cast<double>(last - start);
}

void adam_step(WeightStore &params, const WeightStore &grads, AdamState &state, double lr,
               const TrainConfig &cfg) {
  ++state.step;
  const double c1 = 1 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto &[name, p] : params.tensors()) {
    const auto &g = grads.get(name);
    require(g.shape() == p.shape(), ErrorKind::shape,
            "gradient for '" + name + "' has shape " + shape_string(g.shape()) + ", parameter has " +
                shape_string(p.shape()));
    auto &m = state.m.try_emplace(name, Tensor(p.shape())).first->second;
    auto &v = state.v.try_emplace(name, Tensor(p.shape())).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * m[i] + (1 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      p[i] = static_cast<float>(p[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
    }
  }
}

namespace {

template <typename T>
void check_same(const BasicTensor<T> &a, const BasicTensor<T> &b, const std::string &what) {
  require(a.shape() == b.shape(), ErrorKind::shape,
          what + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
              " differ");
}

template <typename T> void scale(BasicTensor<T> &t, double s) {
  for (T &v : t.data())
    v = static_cast<T>(v * s);
}

template <typename T> void accumulate(BasicWeightStore<T> &into, const BasicWeightStore<T> &from) {
  for (const auto &[name, t] : from) {
    if (into.contains(name))
      into.get(name) += t;
    else
      into.set(name, t);
  }
}

double sign(double r) { return r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0); }

} // namespace

template <typename T>
double smooth_l1(const BasicTensor<T> &pred, const BasicTensor<T> &target, BasicTensor<T> *grad) {
  check_same(pred, target, "smooth_l1");
  const double n = static_cast<double>(pred.size());
  if (grad)
    *grad = BasicTensor<T>(pred.shape());
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double a = std::abs(r);
    sum += a < 1.0 ? 0.5 * r * r : a - 0.5;
    if (grad)
      (*grad)[i] = static_cast<T>((a < 1.0 ? r : sign(r)) / n);
  }
  return sum / n;
}

template <typename T>
double l1_loss(const BasicTensor<T> &pred, const BasicTensor<T> &target, BasicTensor<T> *grad) {
  check_same(pred, target, "l1_loss");
  const double n = static_cast<double>(pred.size());
  if (grad)
    *grad = BasicTensor<T>(pred.shape());
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += std::abs(r);
    if (grad)
      (*grad)[i] = static_cast<T>(sign(r) / n);
  }
  return sum / n;
}

namespace {

template <typename T>
double half_mean_square(const BasicTensor<T> &x, double target, BasicTensor<T> *grad) {
  const double n = static_cast<double>(x.size());
  if (grad)
    *grad = BasicTensor<T>(x.shape());
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - target;
    sum += 0.5 * d * d;
    if (grad)
      (*grad)[i] = static_cast<T>(d / n);
  }
  return sum / n;
}

} // namespace

template <typename T> double lsgan_generator(const BasicTensor<T> &logits, BasicTensor<T> *grad) {
  return half_mean_square(logits, 1.0, grad);
}

template <typename T>
double lsgan_discriminator(const BasicTensor<T> &real_logits, const BasicTensor<T> &fake_logits,
                           BasicTensor<T> *grad_real, BasicTensor<T> *grad_fake) {
  return half_mean_square(real_logits, 1.0, grad_real) +
         half_mean_square(fake_logits, 0.0, grad_fake);
}

template <typename T>
LossBundle compute_losses(const GanModels<T> &m, const TrainConfig &cfg, const TensorMap<T> &inputs,
                          const TensorMap<T> &targets, BasicWeightStore<T> *gen_grads,
                          BasicWeightStore<T> *disc_grads) {
  require(m.branches.size() == m.discriminators.size(), ErrorKind::usage,
          "one discriminator per branch is required");
  LossBundle loss;
  const auto act = forward<T>(m.generator, m.generator_weights, inputs);
  TensorMap<T> out_grads;
  BackwardOptions params_only, inputs_only;
  params_only.input_grads = false;
  inputs_only.param_grads = false;
  BasicTensor<T> g;
  for (std::size_t bi = 0; bi < m.branches.size(); ++bi) {
    const auto &branch = m.branches[bi];
    const auto &disc = m.discriminators[bi];
    const auto &fake = act.at(branch.output);
    auto target = targets.find(branch.output);
    require(target != targets.end(), ErrorKind::usage, "no target for '" + branch.output + "'");
    const auto &real = target->second;
    check_same(fake, real, branch.output);
    const auto logits = discriminator_logits(branch.disc_prefix);
    const auto features = discriminator_features(branch.disc_prefix);

    const auto d_real = forward<T>(disc, m.discriminator_weights, {{"image", real}});
    const auto d_fake = forward<T>(disc, m.discriminator_weights, {{"image", fake}});

    BasicTensor<T> g_real, g_fake;
    const double ld = lsgan_discriminator(d_real.at(logits), d_fake.at(logits),
                                          disc_grads ? &g_real : nullptr,
                                          disc_grads ? &g_fake : nullptr);
    (branch.disc_prefix == "disc_mouth" ? loss.gan_d_mouth : loss.gan_d_head) += ld;
    if (disc_grads) {
      accumulate(*disc_grads,
                 backward<T>(disc, m.discriminator_weights, d_real, {{logits, g_real}}, params_only)
                     .params);
      accumulate(*disc_grads,
                 backward<T>(disc, m.discriminator_weights, d_fake, {{logits, g_fake}}, params_only)
                     .params);
    }

    // Adversarial and feature-matching terms both reach the generator through
    // the discriminator's input gradient.
    TensorMap<T> d_grads;
    loss.gan_g += lsgan_generator(d_fake.at(logits), gen_grads ? &g : nullptr);
    if (gen_grads) {
      scale(g, cfg.lambda_gan);
      d_grads[logits] = std::move(g);
    }
    const double nf = static_cast<double>(features.size());
    for (const auto &f : features) {
      loss.fm += l1_loss(d_fake.at(f), d_real.at(f), gen_grads ? &g : nullptr) / nf;
      if (gen_grads) {
        scale(g, cfg.lambda_fm / nf);
        d_grads[f] = std::move(g);
      }
    }
    BasicTensor<T> grad_fake(fake.shape());
    if (gen_grads)
      grad_fake +=
          backward<T>(disc, m.discriminator_weights, d_fake, d_grads, inputs_only).inputs.at("image");

    const auto p_real = forward<T>(m.extractor, m.extractor_weights, {{"image", real}});
    const auto p_fake = forward<T>(m.extractor, m.extractor_weights, {{"image", fake}});
    TensorMap<T> p_grads;
    const double np = static_cast<double>(m.extractor_features.size());
    for (const auto &f : m.extractor_features) {
      loss.perc += l1_loss(p_fake.at(f), p_real.at(f), gen_grads ? &g : nullptr) / np;
      if (gen_grads) {
        scale(g, cfg.lambda_fm / np);
        p_grads[f] = std::move(g);
      }
    }
    if (gen_grads)
      grad_fake += backward<T>(m.extractor, m.extractor_weights, p_fake, p_grads, inputs_only)
                       .inputs.at("image");

    loss.l1 += smooth_l1(fake, real, gen_grads ? &g : nullptr);
    if (gen_grads) {
      scale(g, cfg.lambda_l1);
      grad_fake += g;
      out_grads[branch.output] = std::move(grad_fake);
    }
  }
  loss.generator_total = cfg.lambda_gan * loss.gan_g + cfg.lambda_fm * (loss.fm + loss.perc) +
                         cfg.lambda_l1 * loss.l1;
  for (double v : {loss.generator_total, loss.gan_d_head, loss.gan_d_mouth})
    if (!std::isfinite(v))
      fail(ErrorKind::numeric_fault, m.generator.name + ": non-finite loss");
  if (gen_grads)
    *gen_grads = backward<T>(m.generator, m.generator_weights, act, out_grads, params_only).params;
  return loss;
}

#define TALKHEAD_INSTANTIATE(T)                                                                    \
  template double smooth_l1<T>(const BasicTensor<T> &, const BasicTensor<T> &, BasicTensor<T> *);  \
  template double l1_loss<T>(const BasicTensor<T> &, const BasicTensor<T> &, BasicTensor<T> *);    \
  template double lsgan_generator<T>(const BasicTensor<T> &, BasicTensor<T> *);                    \
  template double lsgan_discriminator<T>(const BasicTensor<T> &, const BasicTensor<T> &,           \
                                         BasicTensor<T> *, BasicTensor<T> *);                      \
  template LossBundle compute_losses<T>(const GanModels<T> &, const TrainConfig &,                 \
                                        const TensorMap<T> &, const TensorMap<T> &,                \
                                        BasicWeightStore<T> *, BasicWeightStore<T> *);
TALKHEAD_INSTANTIATE(float)
TALKHEAD_INSTANTIATE(double)
#undef TALKHEAD_INSTANTIATE

PerceptualExtractor default_extractor(std::int64_t canvas, std::uint64_t seed) {
  PerceptualExtractor ex;
  ex.net.name = "perceptual";
  ex.net.inputs = {{"image", {3, canvas, canvas}}};
  const std::int64_t widths[] = {3, 16, 32, 64, 64, 64};
  std::string value = "image";
  for (int i = 0; i < 5; ++i) {
    const auto idx = std::to_string(i + 1);
    ex.net.add(layers::conv2d("perceptual.conv" + idx, value, "perceptual.conv" + idx, widths[i],
                              widths[i + 1], 3, i == 0 ? 1 : 2, 1));
    ex.net.add(layers::leaky_relu("perceptual.act" + idx, "perceptual.conv" + idx,
                                  "perceptual.act" + idx));
    value = "perceptual.act" + idx;
    ex.features.push_back(value);
  }
  ex.net.outputs = {value};
  ex.net.infer_shapes();
  std::mt19937_64 rng(seed);
  for (const auto &slot : ex.net.parameter_slots()) {
    Tensor w(slot.shape);
    const double fan_in = static_cast<double>(slot.shape[1] * slot.shape[2] * slot.shape[3]);
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / fan_in));
    for (float &v : w.data())
      v = static_cast<float>(he(rng));
    ex.weights.set(slot.name, std::move(w));
  }
  return ex;
}

GanTrainer::GanTrainer(NetworkSpec generator, std::vector<Branch> branches, std::int64_t canvas,
                       TrainConfig cfg, PerceptualExtractor extractor)
    : gen_(std::move(generator)), branches_(std::move(branches)), cfg_(cfg),
      extractor_(std::move(extractor)) {
  cfg_.validate();
  for (const auto &b : branches_)
    discs_.push_back(build_discriminator(b.disc_prefix, canvas));
  initialize(cfg_.seed);
}

void GanTrainer::initialize(std::uint64_t seed) {
  gen_w_ = init_parameters<float>(gen_, derive_seed(seed, "init:" + gen_.name));
  disc_w_ = WeightStore();
  for (const auto &d : discs_)
    disc_w_.merge(init_parameters<float>(d, derive_seed(seed, "init:" + d.name)));
  gen_adam_ = AdamState();
  disc_adam_ = AdamState();
}

GanModels<float> GanTrainer::models() const {
  return {gen_,          gen_w_,         branches_,          discs_,
          disc_w_,       extractor_.net, extractor_.weights, extractor_.features};
}

LossBundle GanTrainer::evaluate(const TensorMap<float> &inputs, const TensorMap<float> &targets) const {
  return compute_losses(models(), cfg_, inputs, targets);
}

LossBundle GanTrainer::step(const TensorMap<float> &inputs, const TensorMap<float> &targets,
                            double lr, bool update_generator, bool update_discriminators) {
  WeightStore gen_grads, disc_grads;
  const auto loss = compute_losses(models(), cfg_, inputs, targets,
                                   update_generator ? &gen_grads : nullptr,
                                   update_discriminators ? &disc_grads : nullptr);
  if (update_generator)
    adam_step(gen_w_, gen_grads, gen_adam_, lr, cfg_);
  if (update_discriminators)
    adam_step(disc_w_, disc_grads, disc_adam_, lr, cfg_);
  return loss;
}

SampleSource cached(const SampleSource &source) {
  auto store = std::make_shared<std::vector<Sample>>();
  store->reserve(source.size);
  for (std::size_t i = 0; i < source.size; ++i)
    store->push_back(source.get(i));
  return {source.size, [store](std::size_t i) { return store->at(i); }};
}

void write_loss_csv(const std::filesystem::path &path, const std::vector<LogRow> &log) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  out << "step,loss_gan_g,loss_gan_d_head,loss_gan_d_mouth,loss_fm,loss_perc,loss_l1,lr\n";
  char line[256];
  for (const auto &r : log) {
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(r.step), r.loss.gan_g, r.loss.gan_d_head,
                  r.loss.gan_d_mouth, r.loss.fm, r.loss.perc, r.loss.l1, r.lr);
    out << line;
  }
}

namespace {

void save_pair(const std::filesystem::path &dir, const std::string &stem, const GanTrainer &t) {
  WeightStore all = t.generator_weights();
  all.merge(t.discriminator_weights());
  save_weights(dir / (stem + ".avwt"), all);
}

} // namespace

TrainResult train_gan(GanTrainer &trainer, const SampleSource &data, const TrainConfig &cfg,
                      const std::optional<std::filesystem::path> &out, const std::string &tag) {
  cfg.validate();
  require(data.size > 0, ErrorKind::usage, "training set is empty");
  if (out)
    std::filesystem::create_directories(*out);
  std::mt19937_64 rng(derive_seed(cfg.seed, "order:" + tag));
  std::vector<std::size_t> order(data.size);
  std::size_t pos = order.size();
  TrainResult result;
  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    if (pos == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      pos = 0;
    }
    const auto sample = data.get(order[pos++]);
    const double lr = scheduled_lr(cfg, step);
    try {
      result.log.push_back({step, trainer.step(sample.inputs, sample.targets, lr), lr});
    } catch (const Error &e) {
      if (e.kind() == ErrorKind::numeric_fault && out) {
        const auto dir = *out / ("diagnostic" + (tag.empty() ? "" : "_" + tag));
        std::filesystem::create_directories(dir);
        save_pair(dir, "weights", trainer);
        nlohmann::json info = {{"step", step}, {"error", e.what()}, {"lr", lr}};
        std::ofstream(dir / "info.json") << info.dump(1) << '\n';
        write_loss_csv(dir / "loss.csv", result.log);
      }
      throw;
    }
    if (out && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "checkpoint_%s%06lld", tag.empty() ? "" : (tag + "_").c_str(),
                    static_cast<long long>(step + 1));
      save_pair(*out, stem, trainer);
    }
    if ((step + 1) % 100 == 0)
      log::info(tag + " step " + std::to_string(step + 1) + "/" + std::to_string(cfg.steps) +
                " generator loss " + std::to_string(result.log.back().loss.generator_total));
  }
  result.generator = trainer.generator_weights();
  result.discriminators = trainer.discriminator_weights();
  if (out)
    write_loss_csv(*out / (tag.empty() ? "loss.csv" : tag + "_loss.csv"), result.log);
  return result;
}

} // namespace talkhead
