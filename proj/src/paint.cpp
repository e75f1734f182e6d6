#include "talkhead/paint.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace talkhead {

namespace {
constexpr int kSubrows = 8;
float channel(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.f; }
} // namespace

Tensor solid_image(std::int64_t height, std::int64_t width, const Rgb8 &color) {
  Tensor out({3, height, width});
  const auto plane = height * width;
  for (std::int64_t c = 0; c < 3; ++c)
    std::fill(out.raw() + c * plane, out.raw() + (c + 1) * plane, channel(color[c]));
  return out;
}

void fill_polygon(Tensor &rgb, const Polyline &polygon, const Rgb8 &color) {
  require(rgb.rank() == 3 && rgb.dim(0) == 3, ErrorKind::shape,
          "fill_polygon expects 3×H×W, got " + shape_string(rgb.shape()));
  if (polygon.size() < 3)
    return;
  const auto height = rgb.dim(1), width = rgb.dim(2);
  double ymin = polygon[0].y(), ymax = ymin;
  for (const auto &p : polygon) {
    ymin = std::min(ymin, p.y());
    ymax = std::max(ymax, p.y());
  }
  const auto row_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(ymin)));
  const auto row_hi = std::min<std::int64_t>(height - 1, static_cast<std::int64_t>(std::floor(ymax)));
  std::vector<double> coverage(static_cast<std::size_t>(width));
  std::vector<double> crossings;
  const float col[3] = {channel(color[0]), channel(color[1]), channel(color[2])};
  for (auto row = row_lo; row <= row_hi; ++row) {
    std::fill(coverage.begin(), coverage.end(), 0.0);
    bool any = false;
    for (int s = 0; s < kSubrows; ++s) {
      const double sy = static_cast<double>(row) + (s + 0.5) / kSubrows;
      crossings.clear();
      for (std::size_t i = 0; i < polygon.size(); ++i) {
        const auto &a = polygon[i];
        const auto &b = polygon[(i + 1) % polygon.size()];
        if ((a.y() <= sy && sy < b.y()) || (b.y() <= sy && sy < a.y()))
          crossings.push_back(a.x() + (sy - a.y()) * (b.x() - a.x()) / (b.y() - a.y()));
      }
      std::sort(crossings.begin(), crossings.end());
      for (std::size_t i = 0; i + 1 < crossings.size(); i += 2) {
        const double xa = std::max(0.0, crossings[i]);
        const double xb = std::min(static_cast<double>(width), crossings[i + 1]);
        if (xb <= xa)
          continue;
        any = true;
        const auto ja = static_cast<std::int64_t>(std::floor(xa));
        const auto jb = std::min(width - 1, static_cast<std::int64_t>(std::floor(xb)));
        for (auto j = ja; j <= jb; ++j) {
          const double overlap = std::min(xb, static_cast<double>(j + 1)) - std::max(xa, static_cast<double>(j));
          if (overlap > 0)
            coverage[static_cast<std::size_t>(j)] += overlap / kSubrows;
        }
      }
    }
    if (!any)
      continue;
    for (std::int64_t j = 0; j < width; ++j) {
      const auto a = static_cast<float>(std::min(1.0, coverage[static_cast<std::size_t>(j)]));
      if (a <= 0.f)
        continue;
      for (int c = 0; c < 3; ++c) {
        float &v = rgb.at(c, row, j);
        v = v * (1.f - a) + col[c] * a;
      }
    }
  }
}

} // namespace talkhead
