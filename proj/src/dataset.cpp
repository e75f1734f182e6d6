#include "talkhead/dataset.hpp"
#include "talkhead/image_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>

namespace talkhead {

using nlohmann::json;

bool operator==(const FrameRecord &a, const FrameRecord &b) {
  return a.image == b.image && a.mouth_image == b.mouth_image &&
         a.keypoints.points == b.keypoints.points && a.pose.matrix() == b.pose.matrix() &&
         a.feature_index == b.feature_index && a.crop == b.crop && a.synthetic == b.synthetic &&
         a.provenance == b.provenance && a.contour == b.contour && a.openness == b.openness;
}

bool operator==(const DatasetManifest &a, const DatasetManifest &b) {
  const auto &ia = a.identity, &ib = b.identity;
  return a.version == b.version && a.canvas == b.canvas && a.timeline == b.timeline &&
         a.frames == b.frames && a.rig == b.rig && ia.layout.count == ib.layout.count &&
         ia.layout.mouth == ib.layout.mouth && ia.layout.upper == ib.layout.upper &&
         ia.strokes == ib.strokes && ia.canonical.points == ib.canonical.points &&
         ia.projection.kind == ib.projection.kind && ia.projection.scale == ib.projection.scale &&
         ia.projection.focal == ib.projection.focal && ia.projection.cx == ib.projection.cx &&
         ia.projection.cy == ib.projection.cy;
}

namespace {

// ---- writing ----

json flat(const std::vector<Point2> &pts) {
  auto out = json::array();
  for (const auto &p : pts) {
    out.push_back(p.x());
    out.push_back(p.y());
  }
  return out;
}

json rig_json(const RigParams &r) {
  return {{"face_a", r.face_a},
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
          {"probe_threshold", r.probe_threshold},
          {"probe_gain", r.probe_gain},
          {"probe_offset", r.probe_offset}};
}

json to_json(const DatasetManifest &m) {
  const auto &id = m.identity;
  auto canonical = json::array();
  for (const auto &p : id.canonical.points)
    for (int c = 0; c < 3; ++c)
      canonical.push_back(p[c]);
  json proj = {{"kind", id.projection.kind == Projection::Kind::orthographic ? "orthographic"
                                                                               : "perspective"},
               {"scale", id.projection.scale},
               {"focal", id.projection.focal},
               {"cx", id.projection.cx},
               {"cy", id.projection.cy}};
  json out = {{"version", m.version},
              {"canvas", m.canvas},
              {"identity",
               {{"n", id.layout.count},
                {"mouth_indices", id.layout.mouth},
                {"upper_indices", id.layout.upper},
                {"strokes", id.strokes},
                {"canonical", canonical},
                {"projection", proj}}},
              {"timeline", m.timeline}};
  auto frames = json::array();
  for (const auto &f : m.frames) {
    json jf = {{"image", f.image},
               {"mouth_image", f.mouth_image},
               {"keypoints", flat(f.keypoints.points)},
               {"pose", f.pose.row_major()},
               {"feature_index", f.feature_index},
               {"crop", {{"top", f.crop.top}, {"left", f.crop.left}, {"side", f.crop.side}}},
               {"synthetic", f.synthetic}};
    if (f.provenance)
      jf["provenance"] = {{"mouth_source", f.provenance->mouth_source},
                          {"pose_source", f.provenance->pose_source}};
    if (!f.contour.empty()) {
      auto contour = json::array();
      for (const auto &poly : f.contour)
        contour.push_back(flat(poly));
      jf["contour"] = std::move(contour);
    }
    if (f.openness)
      jf["openness"] = *f.openness;
    frames.push_back(std::move(jf));
  }
  out["frames"] = std::move(frames);
  if (m.rig)
    out["rig"] = rig_json(*m.rig);
  return out;
}

// ---- reading ----

// A JSON value paired with its pointer, so every schema error can say where.
class Node {
public:
  Node(const json &value, std::string pointer, const std::string &file)
      : v_(value), ptr_(std::move(pointer)), file_(file) {}

  [[noreturn]] void error(const std::string &what) const {
    fail(ErrorKind::schema, file_ + ": " + (ptr_.empty() ? "/" : ptr_) + ": " + what);
  }

  bool has(const std::string &key) const { return v_.is_object() && v_.contains(key); }

  Node operator[](const std::string &key) const {
    if (!v_.is_object())
      error("expected an object");
    if (!v_.contains(key))
      fail(ErrorKind::schema, file_ + ": " + ptr_ + "/" + key + ": required field missing");
    return {v_.at(key), ptr_ + "/" + key, file_};
  }

  Node operator[](std::size_t i) const { return {v_.at(i), ptr_ + "/" + std::to_string(i), file_}; }

  std::size_t array_size(std::optional<std::size_t> expected = std::nullopt,
                         const std::string &what = "entries") const {
    if (!v_.is_array())
      error("expected an array");
    if (expected && v_.size() != *expected)
      error("expected " + std::to_string(*expected) + " " + what + ", got " +
            std::to_string(v_.size()));
    return v_.size();
  }

  double number() const {
    if (!v_.is_number())
      error("expected a number");
    return v_.get<double>();
  }

  std::int64_t integer() const {
    if (!v_.is_number_integer())
      error("expected an integer");
    return v_.get<std::int64_t>();
  }

  bool boolean() const {
    if (!v_.is_boolean())
      error("expected a boolean");
    return v_.get<bool>();
  }

  std::string string() const {
    if (!v_.is_string())
      error("expected a string");
    return v_.get<std::string>();
  }

  std::vector<double> numbers(std::optional<std::size_t> expected = std::nullopt,
                              const std::string &what = "numbers") const {
    const auto n = array_size(expected, what);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = (*this)[i].number();
    return out;
  }

  std::vector<int> indices() const {
    const auto n = array_size();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = static_cast<int>((*this)[i].integer());
    return out;
  }

  std::vector<Point2> points2() const {
    const auto v = numbers();
    if (v.size() % 2)
      error("expected an even count of coordinates, got " + std::to_string(v.size()));
    std::vector<Point2> out;
    for (std::size_t i = 0; i < v.size(); i += 2)
      out.emplace_back(v[i], v[i + 1]);
    return out;
  }

  const std::string &pointer() const { return ptr_; }

private:
  const json &v_;
  std::string ptr_;
  const std::string &file_;
};

RigParams rig_from(const Node &n) {
  RigParams r;
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
      {"probe_threshold", &r.probe_threshold},
      {"probe_gain", &r.probe_gain},
      {"probe_offset", &r.probe_offset}};
  for (auto &[key, dst] : fields)
    *dst = n[key].number();
  return r;
}

DatasetManifest from_json(const Node &root) {
  DatasetManifest m;
  m.version = static_cast<int>(root["version"].integer());
  if (m.version != 1)
    root["version"].error("unsupported manifest version " + std::to_string(m.version));
  m.canvas = root["canvas"].integer();
  if (m.canvas <= 0)
    root["canvas"].error("canvas must be positive");

  const auto id = root["identity"];
  auto &identity = m.identity;
  identity.layout.count = static_cast<int>(id["n"].integer());
  identity.layout.mouth = id["mouth_indices"].indices();
  identity.layout.upper = id["upper_indices"].indices();
  try {
    identity.layout.validate();
  } catch (const Error &e) {
    id.error(e.what());
  }
  if (id.has("strokes")) {
    const auto strokes = id["strokes"];
    for (std::size_t i = 0; i < strokes.array_size(); ++i) {
      auto s = strokes[i].indices();
      for (int idx : s)
        if (idx < 0 || idx >= identity.layout.count)
          strokes[i].error("stroke index " + std::to_string(idx) + " out of range");
      identity.strokes.push_back(std::move(s));
    }
  }
  const auto n = static_cast<std::size_t>(identity.layout.count);
  const auto canonical = id["canonical"].numbers(3 * n, "numbers (n × 3)");
  for (std::size_t i = 0; i < n; ++i)
    identity.canonical.points.emplace_back(canonical[3 * i], canonical[3 * i + 1],
                                           canonical[3 * i + 2]);
  const auto proj = id["projection"];
  const auto kind = proj["kind"].string();
  if (kind == "orthographic")
    identity.projection.kind = Projection::Kind::orthographic;
  else if (kind == "perspective")
    identity.projection.kind = Projection::Kind::perspective;
  else
    proj["kind"].error("unknown projection kind '" + kind + "'");
  identity.projection.scale = proj["scale"].number();
  identity.projection.focal = proj["focal"].number();
  identity.projection.cx = proj["cx"].number();
  identity.projection.cy = proj["cy"].number();

  m.timeline = root["timeline"].string();

  const auto frames = root["frames"];
  for (std::size_t i = 0; i < frames.array_size(); ++i) {
    const auto jf = frames[i];
    FrameRecord f;
    f.image = jf["image"].string();
    f.mouth_image = jf["mouth_image"].string();
    const auto kp = jf["keypoints"];
    kp.array_size(2 * n, "numbers (n × 2)");
    f.keypoints.points = kp.points2();
    const auto pose = jf["pose"];
    f.pose = PoseMatrix::from_row_major(pose.numbers(16, "pose numbers"));
    try {
      f.pose.validate();
    } catch (const Error &e) {
      pose.error(e.what());
    }
    f.feature_index = jf["feature_index"].integer();
    if (f.feature_index < 0)
      jf["feature_index"].error("must be non-negative");
    const auto crop = jf["crop"];
    f.crop = {crop["top"].integer(), crop["left"].integer(), crop["side"].integer()};
    if (f.crop.side <= 0 || f.crop.top < 0 || f.crop.left < 0 ||
        f.crop.top + f.crop.side > m.canvas || f.crop.left + f.crop.side > m.canvas)
      crop.error("crop rect must lie inside the canvas");
    f.synthetic = jf["synthetic"].boolean();
    if (jf.has("provenance")) {
      const auto p = jf["provenance"];
      f.provenance = Provenance{p["mouth_source"].integer(), p["pose_source"].integer()};
    }
    if (jf.has("contour")) {
      const auto contour = jf["contour"];
      for (std::size_t c = 0; c < contour.array_size(); ++c)
        f.contour.push_back(contour[c].points2());
    }
    if (jf.has("openness"))
      f.openness = jf["openness"].number();
    m.frames.push_back(std::move(f));
  }
  if (root.has("rig"))
    m.rig = rig_from(root["rig"]);
  return m;
}

} // namespace

void save_manifest(const DatasetManifest &manifest, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  out << to_json(manifest).dump(1) << '\n';
  if (!out)
    fail(ErrorKind::io, "failed writing " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::missing_file, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception &e) {
    fail(ErrorKind::schema, path.string() + ": not valid JSON (" + e.what() + ")");
  }
  const std::string file = path.string();
  auto m = from_json(Node(j, "", file));
  m.root = path.parent_path();

  std::vector<std::string> missing;
  auto need = [&](const std::string &rel) {
    if (!std::filesystem::exists(m.resolve(rel)))
      missing.push_back(m.resolve(rel).string());
  };
  need(m.timeline);
  for (const auto &f : m.frames) {
    need(f.image);
    need(f.mouth_image);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto &p : missing)
      list += (list.empty() ? "" : ", ") + p;
    fail(ErrorKind::missing_file,
         file + ": " + std::to_string(missing.size()) + " referenced file(s) absent: " + list);
  }
  const auto timeline = load_timeline(m.resolve(m.timeline));
  for (std::size_t i = 0; i < m.frames.size(); ++i)
    if (m.frames[i].feature_index >= timeline.frames())
      fail(ErrorKind::schema, file + ": /frames/" + std::to_string(i) +
                                  "/feature_index: beyond timeline length " +
                                  std::to_string(timeline.frames()));
  return m;
}

DatasetManifest rebase(const DatasetManifest &manifest, const std::filesystem::path &new_root) {
  auto out = manifest;
  const auto target = std::filesystem::absolute(new_root).lexically_normal();
  auto move = [&](std::string &rel) {
    const auto abs = std::filesystem::absolute(manifest.resolve(rel)).lexically_normal();
    rel = abs.lexically_relative(target).generic_string();
  };
  move(out.timeline);
  for (auto &f : out.frames) {
    move(f.image);
    move(f.mouth_image);
  }
  out.root = new_root;
  return out;
}

FrameImages load_frame_images(const DatasetManifest &manifest, std::size_t index) {
  const auto &f = manifest.frames.at(index);
  FrameImages out{read_png(manifest.resolve(f.image)), read_png(manifest.resolve(f.mouth_image))};
  const Shape expected{3, manifest.canvas, manifest.canvas};
  require(out.head.shape() == expected && out.mouth.shape() == expected, ErrorKind::shape,
          "frame " + std::to_string(index) + " images must be " + shape_string(expected));
  return out;
}

namespace {

std::vector<Polyline> with_strokes(const IdentityConfig &id, const FrameRecord &frame) {
  auto lines = frame.contour;
  for (const auto &stroke : id.strokes) {
    Polyline p;
    for (int idx : stroke)
      p.push_back(frame.keypoints.points.at(static_cast<std::size_t>(idx)));
    lines.push_back(std::move(p));
  }
  return lines;
}

} // namespace

Tensor renderer_drawing(const IdentityConfig &id, const FrameRecord &frame, std::int64_t canvas,
                        std::int64_t channels) {
  return replicate_channels(
      rasterize(frame.keypoints.select(id.layout.upper), frame.contour, canvas), channels);
}

Tensor oracle_head_drawing(const IdentityConfig &id, const FrameRecord &frame, std::int64_t canvas) {
  return rasterize(frame.keypoints, with_strokes(id, frame), canvas);
}

Tensor oracle_mouth_drawing(const IdentityConfig &id, const FrameRecord &frame, std::int64_t canvas,
                            std::int64_t resolution) {
  return rasterize_region(frame.keypoints, with_strokes(id, frame), frame.crop, resolution,
                          default_disc_radius(canvas));
}

IdentityConfig rig_identity(const RigParams &params, std::int64_t canvas) {
  return {rig_layout(), rig_strokes(), rig_canonical(params), rig_projection(params, canvas)};
}

RigDataset rig_dataset(const RigParams &params, std::int64_t frames, std::uint64_t seed,
                       std::int64_t canvas, std::int64_t k, const std::filesystem::path &out) {
  require(canvas % 16 == 0, ErrorKind::config, "canvas must be divisible by 16");
  const auto seq = rig_sequence(params, frames, seed);
  std::filesystem::create_directories(out / "frames");
  RigDataset ds;
  auto &m = ds.manifest;
  m.canvas = canvas;
  m.identity = rig_identity(params, canvas);
  m.timeline = "timeline.json";
  m.rig = params;
  m.root = out;
  ds.timeline.k = k;
  const auto crop = rig_crop(params, canvas);
  for (std::int64_t t = 0; t < frames; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const auto frame = rig_render(params, seq.poses[i], seq.openness[i], canvas);
    char name[32];
    std::snprintf(name, sizeof name, "%05lld", static_cast<long long>(t));
    FrameRecord f;
    f.image = std::string("frames/head_") + name + ".png";
    f.mouth_image = std::string("frames/mouth_") + name + ".png";
    write_png(out / f.image, frame.head);
    write_png(out / f.mouth_image, frame.mouth);
    f.keypoints = frame.keypoints;
    f.pose = seq.poses[i];
    f.feature_index = t;
    f.crop = crop;
    f.contour = frame.contour;
    f.openness = seq.openness[i];
    m.frames.push_back(std::move(f));
    ds.timeline.push_frame(viseme_proxy(seq.openness[i], k));
  }
  save_timeline(out / m.timeline, ds.timeline);
  save_manifest(m, out / "manifest.json");
  return ds;
}

} // namespace talkhead
