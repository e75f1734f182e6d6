// talkhead: rig data generation, oracle and renderer training, synthetic
// augmentation, inference, evaluation and benchmarking.

#include "talkhead/dataset.hpp"
#include "talkhead/error.hpp"
#include "talkhead/evalkit.hpp"
#include "talkhead/log.hpp"
#include "talkhead/oracle.hpp"
#include "talkhead/pipeline.hpp"
#include "talkhead/renderer.hpp"
#include "talkhead/rig.hpp"
#include "talkhead/seed.hpp"
#include "talkhead/training.hpp"
#include "talkhead/weight_store.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace talkhead;

namespace {

// Raised for bad flag values and config files: reported like a parse error.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json defaults() {
  const RigParams r;
  const TrainConfig t;
  const RendererConfig rc;
  return {
      {"seed", 0},
      {"data", {{"frames", 500}, {"canvas", 64}, {"k", 34}}},
      {"rig",
       {{"face_a", r.face_a},
        {"face_b", r.face_b},
        {"eye_x", r.eye_x},
        {"eye_y", r.eye_y},
        {"feature_z", r.feature_z},
        {"eye_half_width", r.eye_half_width},
        {"eye_half_height", r.eye_half_height},
        {"brow_y", r.brow_y},
        {"mouth_y", r.mouth_y},
        {"mouth_half_width", r.mouth_half_width},
        {"lip_thickness", r.lip_thickness},
        {"max_aperture", r.max_aperture},
        {"scale_fraction", r.scale_fraction},
        {"pitch_max", r.pitch_max},
        {"yaw_max", r.yaw_max},
        {"roll_max", r.roll_max},
        {"translation_max", r.translation_max},
        {"rho", r.rho},
        {"noise_scale", r.noise_scale},
        {"probe_threshold", r.probe_threshold}}},
      {"renderer",
       {{"window", rc.window}, {"kp_channels", rc.kp_channels}, {"dual_decoder", rc.dual_decoder}}},
      {"training",
       {{"lr", t.lr},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"eps", t.eps},
        {"steps", t.steps},
        {"decay_start", t.decay_start},
        {"lambda_fm", t.lambda_fm},
        {"lambda_l1", t.lambda_l1},
        {"lambda_gan", t.lambda_gan},
        {"checkpoint_every", t.checkpoint_every}}},
      {"oracle", {{"mouth_resolution", 0}}}, // 0: the dataset canvas
      {"augment", {{"ratio", 0.8}, {"count", 0}, {"max_pose_delta", kDefaultMaxPoseDelta}}},
      {"bench", {{"canvases", {128, 512}}, {"iterations", 20}, {"warmup", 3}}},
  };
}

bool same_kind(const json &a, const json &b) {
  if (a.is_number() && b.is_number())
    return !a.is_number_integer() || b.is_number_integer();
  return a.type() == b.type();
}

// Overlays `src` on `dst`; every key must already exist with a matching type.
void overlay(json &dst, const json &src, const std::string &where) {
  if (!src.is_object())
    throw ConfigError("config " + (where.empty() ? "/" : where) + " must be an object");
  for (const auto &[key, value] : src.items()) {
    const auto path = where + "/" + key;
    if (!dst.contains(key))
      throw ConfigError("unknown config key " + path);
    auto &d = dst[key];
    if (d.is_object())
      overlay(d, value, path);
    else if (!same_kind(d, value))
      throw ConfigError("config key " + path + " expects " + std::string(d.type_name()));
    else
      d = value;
  }
}

struct Run {
  json config = defaults();
  std::optional<std::string> config_file;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::uint64_t> seeds; // purpose → derived seed

  void load() {
    if (config_file) {
      std::ifstream in(*config_file);
      if (!in)
        throw ConfigError("cannot read config file " + *config_file);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception &e) {
        throw ConfigError("config file " + *config_file + ": " + e.what());
      }
      overlay(config, file, "");
    }
    if (seed)
      config["seed"] = *seed;
  }

  template <typename T> void set(const std::string &pointer, const std::optional<T> &value) {
    if (value)
      config[json::json_pointer(pointer)] = *value;
  }

  template <typename T> T get(const std::string &pointer) const {
    return config.at(json::json_pointer(pointer)).get<T>();
  }

  std::uint64_t root_seed() const { return get<std::uint64_t>("/seed"); }

  std::uint64_t seed_for(const std::string &purpose) {
    return seeds[purpose] = derive_seed(root_seed(), purpose);
  }

  /// effective-config.json and the seed record.
  void record(const std::string &command) const {
    fs::create_directories(out);
    json effective = config;
    effective["command"] = command;
    std::ofstream(fs::path(out) / "effective-config.json") << effective.dump(2) << '\n';
    json s = {{"root", root_seed()}, {"derivation", "splitmix64(root ^ fnv1a64(purpose))"}};
    s["derived"] = json::object();
    for (const auto &[purpose, value] : seeds)
      s["derived"][purpose] = value;
    std::ofstream(fs::path(out) / "seed.json") << s.dump(2) << '\n';
  }
};

RigParams rig_params(const Run &run) {
  RigParams r;
  const auto &j = run.config.at("rig");
  std::pair<const char *, double *> fields[] = {
      {"face_a", &r.face_a},
      {"face_b", &r.face_b},
      {"eye_x", &r.eye_x},
      {"eye_y", &r.eye_y},
      {"feature_z", &r.feature_z},
      {"eye_half_width", &r.eye_half_width},
      {"eye_half_height", &r.eye_half_height},
      {"brow_y", &r.brow_y},
      {"mouth_y", &r.mouth_y},
      {"mouth_half_width", &r.mouth_half_width},
      {"lip_thickness", &r.lip_thickness},
      {"max_aperture", &r.max_aperture},
      {"scale_fraction", &r.scale_fraction},
      {"pitch_max", &r.pitch_max},
      {"yaw_max", &r.yaw_max},
      {"roll_max", &r.roll_max},
      {"translation_max", &r.translation_max},
      {"rho", &r.rho},
      {"noise_scale", &r.noise_scale},
      {"probe_threshold", &r.probe_threshold}};
  for (auto &[key, dst] : fields)
    *dst = j.at(key).get<double>();
  return r;
}

TrainConfig train_config(const Run &run, std::uint64_t seed) {
  const auto &j = run.config.at("training");
  TrainConfig t;
  t.lr = j.at("lr").get<double>();
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.eps = j.at("eps").get<double>();
  t.steps = j.at("steps").get<std::int64_t>();
  t.decay_start = j.at("decay_start").get<double>();
  t.lambda_fm = j.at("lambda_fm").get<double>();
  t.lambda_l1 = j.at("lambda_l1").get<double>();
  t.lambda_gan = j.at("lambda_gan").get<double>();
  t.checkpoint_every = j.at("checkpoint_every").get<std::int64_t>();
  t.seed = seed;
  t.validate();
  return t;
}

struct Loaded {
  DatasetManifest manifest;
  FeatureTimeline timeline;
};

Loaded load_data(const std::string &path) {
  Loaded d{load_manifest(path), {}};
  d.timeline = load_timeline(d.manifest.resolve(d.manifest.timeline));
  return d;
}

RendererConfig renderer_config(const Run &run, const DatasetManifest &m, std::int64_t k) {
  auto cfg = RendererConfig::for_canvas(m.canvas);
  cfg.k = k;
  cfg.window = run.get<std::int64_t>("/renderer/window");
  cfg.kp_channels = run.get<std::int64_t>("/renderer/kp_channels");
  cfg.dual_decoder = run.get<bool>("/renderer/dual_decoder");
  if (!m.frames.empty())
    cfg.crop = m.frames.front().crop;
  return cfg;
}

// The decoder layout and crop come from the weights and the dataset.
RendererConfig renderer_config(const Run &run, const DatasetManifest &m, std::int64_t k,
                               const WeightStore &weights) {
  auto cfg = renderer_config(run, m, k);
  cfg.dual_decoder = renderer_config_for(weights, m.canvas, k).dual_decoder;
  return cfg;
}

OracleConfig oracle_config(const Run &run, const DatasetManifest &m) {
  auto cfg = OracleConfig::for_canvas(m.canvas);
  const auto res = run.get<std::int64_t>("/oracle/mouth_resolution");
  if (res > 0)
    cfg.mouth_resolution = res;
  if (!m.frames.empty())
    cfg.crop = m.frames.front().crop;
  cfg.validate();
  return cfg;
}

Oracle load_oracle(const fs::path &dir) {
  std::ifstream in(dir / "oracle.json");
  require(static_cast<bool>(in), ErrorKind::missing_file,
          "missing " + (dir / "oracle.json").string());
  const auto j = json::parse(in);
  OracleConfig cfg;
  cfg.canvas = j.at("canvas").get<std::int64_t>();
  cfg.mouth_resolution = j.at("mouth_resolution").get<std::int64_t>();
  cfg.crop = {j.at("crop").at("top").get<std::int64_t>(), j.at("crop").at("left").get<std::int64_t>(),
              j.at("crop").at("side").get<std::int64_t>()};
  return {cfg, build_oracle(cfg), load_weights<float>(dir / "oracle.avwt")};
}

void save_oracle_config(const fs::path &dir, const OracleConfig &cfg) {
  const json j = {{"canvas", cfg.canvas},
                  {"mouth_resolution", cfg.mouth_resolution},
                  {"crop", {{"top", cfg.crop.top}, {"left", cfg.crop.left}, {"side", cfg.crop.side}}}};
  std::ofstream(dir / "oracle.json") << j.dump(2) << '\n';
}

void common_flags(CLI::App &cmd, Run &run, bool out_required = true) {
  auto *out = cmd.add_option("--out", run.out, "Output directory");
  if (out_required)
    out->required();
  cmd.add_option("--config", run.config_file, "JSON config file")->check(CLI::ExistingFile);
  cmd.add_option("--seed", run.seed, "Root seed");
}

void training_flags(CLI::App &cmd, std::optional<std::int64_t> &steps,
                    std::optional<std::int64_t> &checkpoint_every) {
  cmd.add_option("--steps", steps, "Training steps")->check(CLI::PositiveNumber);
  cmd.add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval (0: final only)")
      ->check(CLI::NonNegativeNumber);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Audio-driven talking-head renderer toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  Run run;
  std::optional<std::int64_t> frames, canvas, k, steps, checkpoint_every, mouth_res, count, iters,
      warmup, limit;
  std::optional<double> entangle, ratio;
  std::optional<std::vector<std::int64_t>> canvases;
  std::string data, oracle_dir, weights, timeline_path;
  bool single_decoder = false;

  auto *gen = app.add_subcommand("gen-data", "Render a procedural rig dataset");
  common_flags(*gen, run);
  gen->add_option("--frames", frames, "Frame count")->check(CLI::Range(2, 1 << 24));
  gen->add_option("--entangle", entangle, "Pitch/openness entanglement rho")->check(CLI::Range(0.0, 1.0));
  gen->add_option("--canvas", canvas, "Canvas size S")->check(CLI::PositiveNumber);
  gen->add_option("--k", k, "Feature dimension")->check(CLI::Range(2, 4096));

  auto *toracle = app.add_subcommand("train-oracle", "Train the drawing-to-image oracle");
  common_flags(*toracle, run);
  toracle->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  toracle->add_option("--mouth-resolution", mouth_res, "Mouth net resolution M")
      ->check(CLI::PositiveNumber);
  training_flags(*toracle, steps, checkpoint_every);

  auto *aug = app.add_subcommand("augment", "Build a mashed synthetic dataset with the oracle");
  common_flags(*aug, run);
  aug->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  aug->add_option("--oracle", oracle_dir, "train-oracle output directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  aug->add_option("--ratio", ratio, "Synthetic fraction")->check(CLI::Range(0.0, 1.0));
  aug->add_option("--count", count, "Frames emitted (0: dataset size)")->check(CLI::NonNegativeNumber);

  auto *train = app.add_subcommand("train", "Train the renderer");
  common_flags(*train, run);
  train->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_flag("--single-decoder", single_decoder, "Head decoder only (ablation)");
  training_flags(*train, steps, checkpoint_every);

  auto *infer = app.add_subcommand("infer", "Render a PNG frame sequence from a timeline");
  common_flags(*infer, run);
  infer->add_option("--weights", weights, "Renderer weights")->required()->check(CLI::ExistingFile);
  infer->add_option("--data", data, "Manifest supplying the drawings")
      ->required()
      ->check(CLI::ExistingFile);
  infer->add_option("--timeline", timeline_path, "Feature timeline (default: the manifest's)")
      ->check(CLI::ExistingFile);
  infer->add_option("--frames", limit, "Render only the first N timeline frames")
      ->check(CLI::PositiveNumber);

  auto *eval = app.add_subcommand("eval", "Score a renderer against a dataset");
  common_flags(*eval, run);
  eval->add_option("--weights", weights, "Renderer weights")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset manifest")->required()->check(CLI::ExistingFile);

  auto *bench = app.add_subcommand("bench", "Measure render latency");
  common_flags(*bench, run);
  bench->add_option("--weights", weights, "Renderer weights (default: random)")
      ->check(CLI::ExistingFile);
  bench->add_option("--canvas", canvases, "Canvas sizes")->delimiter(',');
  bench->add_option("--iters", iters, "Timed iterations")->check(CLI::PositiveNumber);
  bench->add_option("--warmup", warmup, "Untimed iterations")->check(CLI::NonNegativeNumber);

  auto usage_error = [&](const std::string &message, const CLI::App &where) {
    std::cerr << "talkhead: error[usage]: " << message << "\n" << where.help();
    return 2;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    const CLI::App *where = &app;
    for (auto *sub : app.get_subcommands())
      where = sub;
    return usage_error(e.what(), *where);
  }
  if (verbose)
    log::threshold() = log::Level::info;

  CLI::App *cmd = app.get_subcommands().front();
  try {
    run.load();
    run.set("/training/steps", steps);
    run.set("/training/checkpoint_every", checkpoint_every);
    run.set("/data/frames", frames);
    run.set("/data/canvas", canvas);
    run.set("/data/k", k);
    run.set("/rig/rho", entangle);
    run.set("/oracle/mouth_resolution", mouth_res);
    run.set("/augment/ratio", ratio);
    run.set("/augment/count", count);
    run.set("/bench/iterations", iters);
    run.set("/bench/warmup", warmup);
    run.set("/bench/canvases", canvases);
    if (single_decoder)
      run.config["renderer"]["dual_decoder"] = false;
  } catch (const ConfigError &e) {
    std::cerr << "talkhead: error[config]: " << e.what() << "\n";
    return 2;
  } catch (const json::exception &e) {
    std::cerr << "talkhead: error[config]: " << e.what() << "\n";
    return 2;
  }

  try {
    const fs::path out = run.out;
    const std::string name = cmd->get_name();
    if (name == "gen-data") {
      auto params = rig_params(run);
      params.validate();
      const auto s = run.get<std::int64_t>("/data/canvas");
      calibrate_probe(params, s);
      run.record(name);
      rig_dataset(params, run.get<std::int64_t>("/data/frames"), run.root_seed(), s,
                  run.get<std::int64_t>("/data/k"), out);
    } else if (name == "train-oracle") {
      const auto d = load_data(data);
      const auto cfg = oracle_config(run, d.manifest);
      const auto tc = train_config(run, run.seed_for("train-oracle"));
      run.record(name);
      train_oracle(d.manifest, cfg, tc, out);
      save_oracle_config(out, cfg);
    } else if (name == "augment") {
      const auto d = load_data(data);
      const auto oracle = load_oracle(oracle_dir);
      AugmentOptions opt;
      opt.ratio = run.get<double>("/augment/ratio");
      opt.count = run.get<std::int64_t>("/augment/count");
      if (opt.count == 0)
        opt.count = static_cast<std::int64_t>(d.manifest.frames.size());
      opt.max_pose_delta = run.get<double>("/augment/max_pose_delta");
      opt.seed = run.seed_for("augment");
      run.record(name);
      build_augmented_dataset(d.manifest, oracle, opt, out);
    } else if (name == "train") {
      const auto d = load_data(data);
      const auto cfg = renderer_config(run, d.manifest, d.timeline.k);
      const auto tc = train_config(run, run.seed_for("train"));
      run.record(name);
      train_renderer(d.manifest, d.timeline, cfg, tc, out, "renderer");
    } else if (name == "infer") {
      auto d = load_data(data);
      if (!timeline_path.empty())
        d.timeline = load_timeline(timeline_path);
      if (limit && *limit < d.timeline.frames())
        d.timeline.values.resize(static_cast<std::size_t>(*limit * d.timeline.k));
      const auto w = load_weights<float>(weights);
      const auto cfg = renderer_config(run, d.manifest, d.timeline.k, w);
      run.record(name);
      write_sequence(out, infer_sequence(build_renderer(cfg), w, d.manifest, d.timeline, cfg));
    } else if (name == "eval") {
      const auto d = load_data(data);
      const auto w = load_weights<float>(weights);
      const auto cfg = renderer_config(run, d.manifest, d.timeline.k, w);
      run.record(name);
      const auto report = evaluate_renderer(build_renderer(cfg), w, d.manifest, d.timeline, cfg);
      write_report_json(out / "metrics.json", report);
      write_report_csv(out / "metrics.csv", report);
      std::printf("frames %zu  psnr %.3f  ssim %.4f  dlip %.3f  openness %.3f\n", report.count(),
                  report.mean.psnr, report.mean.ssim, report.mean.dlip, report.mean.openness);
    } else if (name == "bench") {
      const auto sizes = run.get<std::vector<std::int64_t>>("/bench/canvases");
      const auto n = run.get<std::int64_t>("/bench/iterations");
      const auto w0 = run.get<std::int64_t>("/bench/warmup");
      std::optional<WeightStore> given;
      if (!weights.empty())
        given = load_weights<float>(weights);
      std::map<std::int64_t, std::uint64_t> init_seeds;
      if (!given)
        for (auto s : sizes)
          init_seeds[s] = run.seed_for("bench:" + std::to_string(s));
      run.record(name);
      for (auto s : sizes) {
        auto cfg = RendererConfig::for_canvas(s);
        if (given)
          cfg.dual_decoder = renderer_config_for(*given, s, cfg.k).dual_decoder;
        const auto net = build_renderer(cfg);
        const auto w = given ? *given : init_parameters<float>(net, init_seeds.at(s));
        const auto report = talkhead::bench(net, w, cfg, n, w0);
        write_bench_json(out / ("bench_" + std::to_string(s) + ".json"), report);
        std::printf("S=%lld  mean %.3f ms  median %.3f ms  p95 %.3f ms  fps %.2f\n",
                    static_cast<long long>(s), report.mean_ms, report.median_ms, report.p95_ms,
                    report.fps);
      }
    }
  } catch (const Error &e) {
    std::cerr << "talkhead: error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return e.kind() == ErrorKind::usage || e.kind() == ErrorKind::config ? 2 : 1;
  } catch (const std::exception &e) {
    std::cerr << "talkhead: error[runtime]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
