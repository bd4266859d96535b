#pragma once

#include <vector>

#include "dragguide/tensor.hpp"

namespace dragguide {

/// Separable bilinear resampling with half-pixel centres (corner alignment
/// off) and edge clamping: output index i samples source coordinate
/// (i + 0.5)·in/out − 0.5. No anti-aliasing prefilter.
class BilinearResize {
 public:
  BilinearResize(Shape input, int out_height, int out_width);

  [[nodiscard]] const Shape& input_shape() const { return input_; }
  [[nodiscard]] Shape output_shape() const {
    return {input_.channels, out_height_, out_width_};
  }

  [[nodiscard]] ImageTensor apply(const ImageTensor& image) const;
  /// Exact transpose of apply: ⟨apply(x), y⟩ = ⟨x, adjoint(y)⟩.
  [[nodiscard]] ImageTensor adjoint(const ImageTensor& grad_output) const;

 private:
  struct Tap {
    int lo = 0;
    int hi = 0;
    double w_lo = 1.0;
    double w_hi = 0.0;
  };
  static std::vector<Tap> taps(int in, int out);

  Shape input_;
  int out_height_;
  int out_width_;
  std::vector<Tap> rows_;
  std::vector<Tap> cols_;
};

[[nodiscard]] ImageTensor resize_bilinear(const ImageTensor& image, int out_height, int out_width);

}  // namespace dragguide
