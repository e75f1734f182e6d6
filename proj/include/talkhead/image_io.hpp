#pragma once

#include "talkhead/tensor.hpp"

#include <cstdint>
#include <filesystem>

namespace talkhead {

/// [-1, 1] to 8-bit, round-half-away and clamped.
std::uint8_t to_byte(float v);
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.f; }

/// Rounds every sample through 8-bit storage.
Tensor quantize8(const Tensor &image);

/// C×H×W in [-1, 1]; C = 1 for grayscale files, 3 for RGB (alpha dropped).
Tensor read_png(const std::filesystem::path &path);
/// Writes a 1- or 3-channel image; values outside [-1, 1] are clamped.
void write_png(const std::filesystem::path &path, const Tensor &image);

/// Repeats a 1×H×W image along channels.
Tensor replicate_channels(const Tensor &gray, std::int64_t channels);

} // namespace talkhead
