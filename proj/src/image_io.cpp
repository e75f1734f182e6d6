#include "talkhead/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace talkhead {

std::uint8_t to_byte(float v) {
  const float scaled = std::round((std::clamp(v, -1.f, 1.f) + 1.f) * 127.5f);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.f, 255.f));
}

Tensor quantize8(const Tensor &image) {
  Tensor out = image;
  for (float &v : out.data())
    v = from_byte(to_byte(v));
  return out;
}

Tensor replicate_channels(const Tensor &gray, std::int64_t channels) {
  require(gray.rank() == 3 && gray.dim(0) == 1, ErrorKind::shape,
          "replicate_channels expects 1×H×W, got " + shape_string(gray.shape()));
  const auto plane = gray.size();
  Tensor out({channels, gray.dim(1), gray.dim(2)});
  for (std::int64_t c = 0; c < channels; ++c)
    std::copy(gray.raw(), gray.raw() + plane, out.raw() + c * static_cast<std::int64_t>(plane));
  return out;
}

Tensor read_png(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    fail(ErrorKind::missing_file, "cannot open image " + path.string());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    fail(ErrorKind::io, path.string() + ": " + img.message);
  const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::int64_t channels = gray ? 1 : 3;
  const auto width = static_cast<std::int64_t>(img.width);
  const auto height = static_cast<std::int64_t>(img.height);
  std::vector<png_byte> pixels(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    fail(ErrorKind::io, path.string() + ": " + msg);
  }
  Tensor out({channels, height, width});
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x)
      for (std::int64_t c = 0; c < channels; ++c)
        out.at(c, y, x) = from_byte(pixels[static_cast<std::size_t>((y * width + x) * channels + c)]);
  return out;
}

void write_png(const std::filesystem::path &path, const Tensor &image) {
  require(image.rank() == 3 && (image.dim(0) == 1 || image.dim(0) == 3), ErrorKind::shape,
          "write_png expects 1×H×W or 3×H×W, got " + shape_string(image.shape()));
  const auto channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  std::vector<png_byte> pixels(static_cast<std::size_t>(channels * height * width));
  for (std::int64_t y = 0; y < height; ++y)
    for (std::int64_t x = 0; x < width; ++x)
      for (std::int64_t c = 0; c < channels; ++c)
        pixels[static_cast<std::size_t>((y * width + x) * channels + c)] = to_byte(image.at(c, y, x));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr))
    fail(ErrorKind::io, "cannot write " + path.string() + ": " + img.message);
}

} // namespace talkhead
