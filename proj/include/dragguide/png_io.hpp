#pragma once

#include <filesystem>

#include "dragguide/tensor.hpp"

namespace dragguide {

/// Reads an 8-bit PNG as a 3×H×W tensor with values in [0, 1].
[[nodiscard]] ImageTensor read_png(const std::filesystem::path& path);

/// Writes a 1- or 3-channel tensor as 8-bit RGB, mapping [lo, hi] affinely
/// onto [0, 255]. Values outside the range are clamped.
void write_png(const std::filesystem::path& path, const ImageTensor& image, double lo = 0.0,
               double hi = 1.0);

/// Quantises like write_png followed by read_png, without touching disk.
[[nodiscard]] ImageTensor quantize_8bit(const ImageTensor& image);

}  // namespace dragguide
