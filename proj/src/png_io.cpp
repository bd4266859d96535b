#include "dragguide/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace dragguide {
namespace {

std::uint8_t to_byte(double v, double lo, double hi) {
  const double scaled = (v - lo) / (hi - lo) * 255.0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(scaled, 0.0, 255.0)));
}

}  // namespace

ImageTensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw std::runtime_error("cannot read PNG '" + path.string() + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw std::runtime_error("cannot decode PNG '" + path.string() + "': " + message);
  }
  const int h = static_cast<int>(image.height);
  const int w = static_cast<int>(image.width);
  ImageTensor out(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(c, y, x) = buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const ImageTensor& image, double lo,
               double hi) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw std::invalid_argument("write_png: need 1 or 3 channels, got " + image.shape().str());
  }
  if (!(hi > lo)) throw std::invalid_argument("write_png: need hi > lo");
  const int h = image.height();
  const int w = image.width();
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = image.channels() == 1 ? 0 : c;
        buffer[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(image.at(src, y, x), lo, hi);
      }
    }
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(w);
  out.height = static_cast<png_uint_32>(h);
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG '" + path.string() + "': " + out.message);
  }
}

ImageTensor quantize_8bit(const ImageTensor& image) {
  ImageTensor out(image.shape());
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = to_byte(image[i], 0.0, 1.0) / 255.0;
  return out;
}

}  // namespace dragguide
