#include "dragguide/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dragguide {

std::string Shape::str() const {
  return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

ImageTensor::ImageTensor(Shape shape, double fill) : shape_(shape) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
    throw std::invalid_argument("ImageTensor: negative dimension " + shape.str());
  }
  data_.assign(shape.size(), fill);
}

ImageTensor::ImageTensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
    throw std::invalid_argument("ImageTensor: negative dimension " + shape.str());
  }
  if (data_.size() != shape.size()) {
    throw std::invalid_argument("ImageTensor: data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape.str());
  }
}

bool ImageTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
  }
}

ImageTensor add_scaled(const ImageTensor& a, double scale, const ImageTensor& b) {
  require_same_shape(a, b, "add_scaled");
  ImageTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + scale * b[i];
  return out;
}

ImageTensor affine_combine(double wa, const ImageTensor& a, double wb, const ImageTensor& b) {
  require_same_shape(a, b, "affine_combine");
  ImageTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

double dot(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(const ImageTensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return s;
}

double squared_distance(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool channels_identical(const ImageTensor& image) {
  const std::size_t plane = static_cast<std::size_t>(image.height()) * image.width();
  const auto data = image.data();
  for (int c = 1; c < image.channels(); ++c) {
    if (!std::equal(data.begin(), data.begin() + plane, data.begin() + c * plane)) return false;
  }
  return true;
}

}  // namespace dragguide
