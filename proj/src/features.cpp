#include "dragguide/features.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "dragguide/rng.hpp"

namespace dragguide {

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, int out_channels,
                                         ConvGeometry geometry)
    : seed_(seed), out_channels_(out_channels), geometry_(geometry) {
  if (out_channels < 1) throw std::invalid_argument("random features: out_channels must be >= 1");
  const auto& g = geometry_;
  if (g.in_channels < 1 || g.kernel < 1 || g.pool < 1 || g.input_side < g.kernel) {
    throw std::invalid_argument("random features: invalid geometry");
  }
  if (g.pooled_side() < 1) {
    throw std::invalid_argument("random features: pool window larger than the conv output");
  }
  const int taps = g.kernel * g.kernel;
  kernels_.resize(out_channels, static_cast<Eigen::Index>(g.in_channels) * taps);
  const RandomStream stream = RandomStream::from_seed(seed).derive("conv_weights");
  for (Eigen::Index i = 0; i < kernels_.size(); ++i) {
    kernels_.data()[i] = stream.normal(static_cast<std::uint64_t>(i));
  }
  summed_kernels_ = RowMatrix::Zero(out_channels, taps);
  for (int c = 0; c < g.in_channels; ++c) {
    summed_kernels_ += kernels_.middleCols(static_cast<Eigen::Index>(c) * taps, taps);
  }
}

int RandomConvExtractor::feature_dim() const {
  const int p = geometry_.pooled_side();
  return out_channels_ * p * p;
}

double RandomConvExtractor::weight(int out, int in, int ky, int kx) const {
  const int k = geometry_.kernel;
  return kernels_(out, (in * k + ky) * k + kx);
}

void RandomConvExtractor::check_input(const ImageTensor& image) const {
  if (image.shape() != input_shape()) {
    throw std::invalid_argument("extract_features: expected " + input_shape().str() +
                                " input, got " + image.shape().str());
  }
}

std::vector<double> RandomConvExtractor::extract(const ImageTensor& image) const {
  return run_forward(image, false).features;
}

FeatureTape RandomConvExtractor::forward(const ImageTensor& image) const {
  return run_forward(image, true);
}

FeatureTape RandomConvExtractor::run_forward(const ImageTensor& image, bool keep_mask) const {
  check_input(image);
  const auto& g = geometry_;
  const int k = g.kernel;
  const int pooled = g.pooled_side();
  const int span = pooled * g.pool;  // conv rows/cols that reach a pooling window
  const Eigen::Index band_cols = static_cast<Eigen::Index>(g.pool) * span;

  // Identical channels convolve like one channel with the summed kernel.
  const bool gray = g.in_channels > 1 && channels_identical(image);
  const int used_channels = gray ? 1 : g.in_channels;
  const RowMatrix& weights = gray ? summed_kernels_ : kernels_;

  FeatureTape tape;
  tape.features.assign(static_cast<std::size_t>(feature_dim()), 0.0);
  if (keep_mask) {
    tape.active.assign(static_cast<std::size_t>(out_channels_) * span * span, 0);
  }

  RowMatrix cols(static_cast<Eigen::Index>(used_channels) * k * k, band_cols);
  // The response is produced a few conv rows at a time so it stays in cache
  // until it has been pooled.
  constexpr int kTileRows = 2;
  RowMatrix response(out_channels_, static_cast<Eigen::Index>(kTileRows) * span);
  // four partial sums per pooled cell so the inner loop vectorises
  std::vector<double> acc(static_cast<std::size_t>(out_channels_) * pooled * 4);
  const double inv_area = 1.0 / (static_cast<double>(g.pool) * g.pool);

  for (int band = 0; band < pooled; ++band) {
    const int y0 = band * g.pool;
    for (int c = 0; c < used_channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double* dst = cols.row((c * k + ky) * k + kx).data();
          for (int dy = 0; dy < g.pool; ++dy) {
            const int y = y0 + dy + ky;
            const double* src = image.data().data() +
                                 (static_cast<std::size_t>(c) * image.height() + y) * image.width() + kx;
            std::copy(src, src + span, dst + dy * span);
          }
        }
      }
    }
    std::fill(acc.begin(), acc.end(), 0.0);

    for (int t0 = 0; t0 < g.pool; t0 += kTileRows) {
      const int rows = std::min(kTileRows, g.pool - t0);
      const Eigen::Index width = static_cast<Eigen::Index>(rows) * span;
      auto tile = response.leftCols(width);
      tile.noalias() = weights * cols.middleCols(static_cast<Eigen::Index>(t0) * span, width);

      for (int o = 0; o < out_channels_; ++o) {
        const double* r = response.row(o).data();
        double* a = acc.data() + static_cast<std::size_t>(o) * pooled * 4;
        for (int dy = 0; dy < rows; ++dy) {
          for (int pc = 0; pc < pooled; ++pc) {
            const double* cell = r + dy * span + pc * g.pool;
            double* lane = a + pc * 4;
            int dx = 0;
            for (; dx + 4 <= g.pool; dx += 4) {
              for (int l = 0; l < 4; ++l) lane[l] += std::max(cell[dx + l] + g.bias, 0.0);
            }
            for (; dx < g.pool; ++dx) lane[0] += std::max(cell[dx] + g.bias, 0.0);
          }
        }
        if (keep_mask) {
          std::uint8_t* mask =
              tape.active.data() + (static_cast<std::size_t>(o) * span + y0 + t0) * span;
          for (Eigen::Index i = 0; i < width; ++i) mask[i] = r[i] + g.bias > 0.0;
        }
      }
    }

    for (int o = 0; o < out_channels_; ++o) {
      const double* a = acc.data() + static_cast<std::size_t>(o) * pooled * 4;
      double* feat = tape.features.data() + (static_cast<std::size_t>(o) * pooled + band) * pooled;
      for (int pc = 0; pc < pooled; ++pc) {
        const double* lane = a + pc * 4;
        feat[pc] = ((lane[0] + lane[1]) + (lane[2] + lane[3])) * inv_area;
      }
    }
  }
  return tape;
}

ImageTensor RandomConvExtractor::backward(const FeatureTape& tape,
                                          std::span<const double> grad_features) const {
  const auto& g = geometry_;
  const int k = g.kernel;
  const int pooled = g.pooled_side();
  const int span = pooled * g.pool;
  if (grad_features.size() != static_cast<std::size_t>(feature_dim())) {
    throw std::invalid_argument("random features backward: gradient length mismatch");
  }
  if (tape.active.size() != static_cast<std::size_t>(out_channels_) * span * span) {
    throw std::invalid_argument("random features backward: tape has no activation mask");
  }
  const Eigen::Index band_cols = static_cast<Eigen::Index>(g.pool) * span;
  const double inv_area = 1.0 / (static_cast<double>(g.pool) * g.pool);

  ImageTensor grad(input_shape());
  RowMatrix upstream(out_channels_, band_cols);
  RowMatrix cols_grad(kernels_.cols(), band_cols);

  for (int band = 0; band < pooled; ++band) {
    const int y0 = band * g.pool;
    for (int o = 0; o < out_channels_; ++o) {
      double* u = upstream.row(o).data();
      const std::uint8_t* mask =
          tape.active.data() + (static_cast<std::size_t>(o) * span + y0) * span;
      const double* gf = grad_features.data() + (static_cast<std::size_t>(o) * pooled + band) * pooled;
      for (int dy = 0; dy < g.pool; ++dy) {
        for (int pc = 0; pc < pooled; ++pc) {
          const double v = gf[pc] * inv_area;
          const int base = dy * span + pc * g.pool;
          for (int dx = 0; dx < g.pool; ++dx) u[base + dx] = mask[base + dx] ? v : 0.0;
        }
      }
    }
    cols_grad.noalias() = kernels_.transpose() * upstream;

    for (int c = 0; c < g.in_channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double* src = cols_grad.row((c * k + ky) * k + kx).data();
          for (int dy = 0; dy < g.pool; ++dy) {
            const int y = y0 + dy + ky;
            for (int x = 0; x < span; ++x) grad.at(c, y, x + kx) += src[dy * span + x];
          }
        }
      }
    }
  }
  return grad;
}

RandomConvExtractor init_random_features(std::uint64_t seed, int out_channels) {
  return RandomConvExtractor(seed, out_channels, ConvGeometry{});
}

}  // namespace dragguide
