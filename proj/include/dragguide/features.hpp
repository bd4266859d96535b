#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dragguide/tensor.hpp"

namespace dragguide {

/// Geometry of the random convolutional feature map. The defaults give
/// 160·4·4 = 2560 features on 3×224×224 inputs; other values exist for
/// small test geometries.
struct ConvGeometry {
  int in_channels = 3;
  int input_side = 224;
  int kernel = 5;
  int pool = 55;  // window == stride
  double bias = 2.0;

  [[nodiscard]] int conv_side() const { return input_side - kernel + 1; }
  [[nodiscard]] int pooled_side() const { return conv_side() / pool; }
};

/// ReLU activity pattern of one forward pass, kept for the backward pass.
struct FeatureTape {
  std::vector<double> features;
  std::vector<std::uint8_t> active;  // out_channels × pooled region, row-major per channel
};

/// Frozen random convolution → +bias → ReLU → non-overlapping mean pool.
///
/// Convolution is valid (no padding), stride 1, cross-correlation order,
/// with N(0, 1) weights drawn from the seed. Feature index is
/// (out_channel, pool_row, pool_col) in row-major order.
class RandomConvExtractor {
 public:
  RandomConvExtractor(std::uint64_t seed, int out_channels, ConvGeometry geometry = {});

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] int out_channels() const { return out_channels_; }
  [[nodiscard]] const ConvGeometry& geometry() const { return geometry_; }
  [[nodiscard]] Shape input_shape() const {
    return {geometry_.in_channels, geometry_.input_side, geometry_.input_side};
  }
  [[nodiscard]] int feature_dim() const;

  /// Weight of (out, in, ky, kx).
  [[nodiscard]] double weight(int out, int in, int ky, int kx) const;

  [[nodiscard]] std::vector<double> extract(const ImageTensor& image) const;
  [[nodiscard]] FeatureTape forward(const ImageTensor& image) const;
  /// Gradient with respect to the input image given ∂φ/∂features.
  [[nodiscard]] ImageTensor backward(const FeatureTape& tape,
                                     std::span<const double> grad_features) const;

 private:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  void check_input(const ImageTensor& image) const;
  FeatureTape run_forward(const ImageTensor& image, bool keep_mask) const;

  std::uint64_t seed_;
  int out_channels_;
  ConvGeometry geometry_;
  RowMatrix kernels_;         // out × (in·k·k)
  RowMatrix summed_kernels_;  // out × (k·k), kernels summed over input channels
};

/// Default extractor: kernel 5, bias +2, 55×55 pooling on 3×224×224.
[[nodiscard]] RandomConvExtractor init_random_features(std::uint64_t seed, int out_channels);

[[nodiscard]] inline std::vector<double> extract_features(const RandomConvExtractor& extractor,
                                                          const ImageTensor& image) {
  return extractor.extract(image);
}

}  // namespace dragguide
