#include "dragguide/resize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dragguide {

std::vector<BilinearResize::Tap> BilinearResize::taps(int in, int out) {
  std::vector<Tap> result(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    const double frac = src - lo;
    result[i] = Tap{lo, hi, 1.0 - frac, frac};
  }
  return result;
}

BilinearResize::BilinearResize(Shape input, int out_height, int out_width)
    : input_(input), out_height_(out_height), out_width_(out_width) {
  if (input.channels <= 0 || input.height <= 0 || input.width <= 0) {
    throw std::invalid_argument("resize: empty input " + input.str());
  }
  if (out_height <= 0 || out_width <= 0) throw std::invalid_argument("resize: empty output");
  rows_ = taps(input.height, out_height);
  cols_ = taps(input.width, out_width);
}

ImageTensor BilinearResize::apply(const ImageTensor& image) const {
  if (image.shape() != input_) {
    throw std::invalid_argument("resize: expected " + input_.str() + ", got " +
                                image.shape().str());
  }
  if (out_height_ == input_.height && out_width_ == input_.width) return image;
  ImageTensor out(output_shape());
  std::vector<double> row(static_cast<std::size_t>(input_.width));
  for (int c = 0; c < input_.channels; ++c) {
    for (int y = 0; y < out_height_; ++y) {
      const Tap& r = rows_[y];
      for (int x = 0; x < input_.width; ++x) {
        row[x] = r.w_lo * image.at(c, r.lo, x) + r.w_hi * image.at(c, r.hi, x);
      }
      for (int x = 0; x < out_width_; ++x) {
        const Tap& k = cols_[x];
        out.at(c, y, x) = k.w_lo * row[k.lo] + k.w_hi * row[k.hi];
      }
    }
  }
  return out;
}

ImageTensor BilinearResize::adjoint(const ImageTensor& grad_output) const {
  if (grad_output.shape() != output_shape()) {
    throw std::invalid_argument("resize adjoint: expected " + output_shape().str() + ", got " +
                                grad_output.shape().str());
  }
  if (out_height_ == input_.height && out_width_ == input_.width) return grad_output;
  ImageTensor out(input_);
  std::vector<double> row(static_cast<std::size_t>(input_.width));
  for (int c = 0; c < input_.channels; ++c) {
    for (int y = 0; y < out_height_; ++y) {
      std::fill(row.begin(), row.end(), 0.0);
      for (int x = 0; x < out_width_; ++x) {
        const Tap& k = cols_[x];
        const double g = grad_output.at(c, y, x);
        row[k.lo] += k.w_lo * g;
        row[k.hi] += k.w_hi * g;
      }
      const Tap& r = rows_[y];
      for (int x = 0; x < input_.width; ++x) {
        out.at(c, r.lo, x) += r.w_lo * row[x];
        out.at(c, r.hi, x) += r.w_hi * row[x];
      }
    }
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& image, int out_height, int out_width) {
  return BilinearResize(image.shape(), out_height, out_width).apply(image);
}

}  // namespace dragguide
