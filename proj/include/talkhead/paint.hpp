#pragma once

#include "talkhead/geometry.hpp"

#include <array>
#include <cstdint>

namespace talkhead {

using Rgb8 = std::array<std::uint8_t, 3>;

/// 3×H×W image in [-1, 1] filled with one colour.
Tensor solid_image(std::int64_t height, std::int64_t width, const Rgb8 &color);

/// Even-odd polygon fill with anti-aliasing: 8 sub-rows per pixel row and exact
/// horizontal span coverage. Coverage blends over the existing pixels.
void fill_polygon(Tensor &rgb, const Polyline &polygon, const Rgb8 &color);

} // namespace talkhead
