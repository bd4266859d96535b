#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dragguide {

/// Channel-major C×H×W shape.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  [[nodiscard]] std::string str() const;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense real-valued image (or latent) in channel-major layout.
///
/// The state x_t of a sampler, the denoised estimate and every gradient with
/// respect to them share this type. Values are unconstrained reals; the
/// [0,1] pixel range is only enforced at dataset ingestion.
class ImageTensor {
 public:
  ImageTensor() = default;
  explicit ImageTensor(Shape shape, double fill = 0.0);
  ImageTensor(Shape shape, std::vector<double> data);
  ImageTensor(int channels, int height, int width, double fill = 0.0)
      : ImageTensor(Shape{channels, height, width}, fill) {}

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int channels() const { return shape_.channels; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  [[nodiscard]] double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  [[nodiscard]] std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape shape_{};
  std::vector<double> data_;
};

/// Throws std::invalid_argument naming `what` when shapes differ.
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

/// a + scale·b
[[nodiscard]] ImageTensor add_scaled(const ImageTensor& a, double scale, const ImageTensor& b);
/// wa·a + wb·b, evaluated elementwise in that order.
[[nodiscard]] ImageTensor affine_combine(double wa, const ImageTensor& a, double wb,
                                         const ImageTensor& b);

[[nodiscard]] double dot(const ImageTensor& a, const ImageTensor& b);
[[nodiscard]] double squared_norm(const ImageTensor& a);
[[nodiscard]] double squared_distance(const ImageTensor& a, const ImageTensor& b);

/// True when every channel compares equal to channel 0, element by element.
[[nodiscard]] bool channels_identical(const ImageTensor& image);

}  // namespace dragguide
