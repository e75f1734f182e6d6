#include "talkhead/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace talkhead {

void FeatureTimeline::push_frame(const std::vector<float> &frame) {
  require(static_cast<std::int64_t>(frame.size()) == k, ErrorKind::shape,
          "feature frame has " + std::to_string(frame.size()) + " entries, expected " +
              std::to_string(k));
  values.insert(values.end(), frame.begin(), frame.end());
}

Tensor FeatureWindow::as_channels() const {
  Tensor out({w, k});
  for (std::int64_t i = 0; i < k; ++i)
    for (std::int64_t j = 0; j < w; ++j)
      out[j * k + i] = at(i, j);
  return out;
}

FeatureWindow window_at(const FeatureTimeline &timeline, std::int64_t t, std::int64_t w) {
  const auto n = timeline.frames();
  require(w >= 1, ErrorKind::usage, "window size must be at least 1");
  require(t >= 0 && t < n, ErrorKind::usage,
          "frame index " + std::to_string(t) + " outside timeline of " + std::to_string(n) +
              " frames");
  FeatureWindow out{timeline.k, w, std::vector<float>(static_cast<std::size_t>(timeline.k * w))};
  const auto first = t - (w - 1) / 2;
  for (std::int64_t j = 0; j < w; ++j) {
    const auto src = std::clamp<std::int64_t>(first + j, 0, n - 1);
    for (std::int64_t i = 0; i < timeline.k; ++i)
      out.values[static_cast<std::size_t>(i * w + j)] = timeline.at(src, i);
  }
  return out;
}

ValidationReport validate(const FeatureTimeline &timeline, std::int64_t expected_k,
                          FeatureMode mode) {
  ValidationReport r;
  if (timeline.k != expected_k)
    r.issues.push_back("dimension mismatch: timeline k=" + std::to_string(timeline.k) +
                       ", config k=" + std::to_string(expected_k));
  if (timeline.k <= 0) {
    r.issues.push_back("dimension mismatch: k must be positive");
    return r;
  }
  if (timeline.values.size() % static_cast<std::size_t>(timeline.k) != 0)
    r.issues.push_back("dimension mismatch: " + std::to_string(timeline.values.size()) +
                       " values is not a whole number of " + std::to_string(timeline.k) +
                       "-dim frames");
  for (std::int64_t t = 0; t < timeline.frames(); ++t)
    for (std::int64_t i = 0; i < timeline.k; ++i) {
      const float v = timeline.at(t, i);
      const auto where = "frame " + std::to_string(t) + " index " + std::to_string(i);
      if (std::isnan(v))
        r.issues.push_back("NaN at " + where);
      else if (!std::isfinite(v))
        r.issues.push_back("non-finite value at " + where);
      else if (mode == FeatureMode::viseme && (v < 0.f || v > 1.f))
        r.issues.push_back("range violation at " + where + ": " + std::to_string(v) +
                           " outside [0, 1]");
    }
  return r;
}

FeatureTimeline load_timeline(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    fail(ErrorKind::missing_file, "cannot open timeline " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::schema, path.string() + ": " + e.what());
  }
  auto field = [&](const char *name) -> const nlohmann::json & {
    if (!j.is_object() || !j.contains(name))
      fail(ErrorKind::schema, path.string() + ": missing field /" + std::string(name));
    return j.at(name);
  };
  FeatureTimeline tl;
  try {
    tl.k = field("k").get<std::int64_t>();
    tl.rate = field("rate").get<double>();
    require(tl.k > 0, ErrorKind::schema, path.string() + ": /k must be positive");
    const auto &frames = field("frames");
    require(frames.is_array(), ErrorKind::schema, path.string() + ": /frames must be an array");
    for (std::size_t t = 0; t < frames.size(); ++t) {
      const auto &f = frames[t];
      require(f.is_array() && static_cast<std::int64_t>(f.size()) == tl.k, ErrorKind::schema,
              path.string() + ": /frames/" + std::to_string(t) + " must hold " +
                  std::to_string(tl.k) + " numbers");
      for (const auto &v : f)
        tl.values.push_back(v.get<float>());
    }
  } catch (const nlohmann::json::exception &e) {
    fail(ErrorKind::schema, path.string() + ": " + e.what());
  }
  return tl;
}

void save_timeline(const std::filesystem::path &path, const FeatureTimeline &timeline) {
  nlohmann::json j;
  j["k"] = timeline.k;
  j["rate"] = timeline.rate;
  auto frames = nlohmann::json::array();
  for (std::int64_t t = 0; t < timeline.frames(); ++t) {
    auto f = nlohmann::json::array();
    for (std::int64_t i = 0; i < timeline.k; ++i)
      f.push_back(timeline.at(t, i));
    frames.push_back(std::move(f));
  }
  j["frames"] = std::move(frames);
  std::ofstream out(path);
  if (!out)
    fail(ErrorKind::io, "cannot write " + path.string());
  out << j.dump() << '\n';
}

} // namespace talkhead
