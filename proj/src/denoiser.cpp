#include "dragguide/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "dragguide/png_io.hpp"
#include "dragguide/rng.hpp"

namespace dragguide {

MixtureDenoiser::MixtureDenoiser(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw std::invalid_argument("MixtureDenoiser: no components");
  shape_ = components_.front().mean.shape();
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.mean.shape() != shape_) {
      throw std::invalid_argument("MixtureDenoiser: component shapes differ (" + shape_.str() +
                                  " vs " + c.mean.shape().str() + ")");
    }
    if (!c.mean.all_finite()) throw std::invalid_argument("MixtureDenoiser: non-finite mean");
    if (!(c.iso_std >= 0.0) || !std::isfinite(c.iso_std)) {
      throw std::invalid_argument("MixtureDenoiser: iso_std must be finite and >= 0");
    }
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
      throw std::invalid_argument("MixtureDenoiser: weights must be finite and > 0");
    }
    total += c.weight;
  }
  for (auto& c : components_) c.weight /= total;
}

NoisePrediction MixtureDenoiser::predict(const ImageTensor& y, double sigma,
                                         const Condition& condition) const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("predict_epsilon: sigma must be finite and > 0");
  }
  if (y.shape() != shape_) {
    throw std::invalid_argument("predict_epsilon: state shape " + y.shape().str() +
                                " does not match denoiser shape " + shape_.str());
  }
  const double d = static_cast<double>(shape_.size());
  const double var_noise = sigma * sigma;

  std::vector<double> log_w(components_.size(), -std::numeric_limits<double>::infinity());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < components_.size(); ++i) {
    const auto& c = components_[i];
    if (condition && c.label != condition) continue;
    const double v = c.iso_std * c.iso_std + var_noise;
    log_w[i] = std::log(c.weight) - 0.5 * d * std::log(v) -
               squared_distance(y, c.mean) / (2.0 * v);
    max_log = std::max(max_log, log_w[i]);
  }
  if (!std::isfinite(max_log)) {
    throw std::invalid_argument("predict_epsilon: no component matches condition '" +
                                condition.value_or("") + "'");
  }

  double norm = 0.0;
  for (double& lw : log_w) {
    lw = std::isfinite(lw) ? std::exp(lw - max_log) : 0.0;
    norm += lw;
  }

  // y − E[x|y] = Σ r_i σ²(y − μ_i)/(s_i² + σ²), so ε̂ = Σ r_i σ(y − μ_i)/(s_i² + σ²).
  ImageTensor eps(shape_);
  auto out = eps.data();
  const auto yv = y.data();
  for (std::size_t i = 0; i < components_.size(); ++i) {
    if (log_w[i] == 0.0) continue;
    const auto& c = components_[i];
    const double coeff = (log_w[i] / norm) * sigma / (c.iso_std * c.iso_std + var_noise);
    const auto mu = c.mean.data();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += coeff * (yv[k] - mu[k]);
  }
  return NoisePrediction{std::move(eps)};
}

ImageTensor MixtureDenoiser::sample_clean(std::uint64_t seed, std::uint64_t index,
                                          const Condition& condition) const {
  const RandomStream stream = RandomStream::from_seed(seed).derive("mixture").derive(index);
  double mass = 0.0;
  for (const auto& c : components_) {
    if (!condition || c.label == condition) mass += c.weight;
  }
  if (mass <= 0.0) throw std::invalid_argument("sample_clean: no component matches condition");
  const double u = stream.uniform(0) * mass;
  const MixtureComponent* chosen = nullptr;
  double acc = 0.0;
  for (const auto& c : components_) {
    if (condition && c.label != condition) continue;
    chosen = &c;
    acc += c.weight;
    if (u < acc) break;
  }
  ImageTensor x = chosen->mean;
  if (chosen->iso_std > 0.0) {
    const RandomStream noise = stream.derive("component_noise");
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += chosen->iso_std * noise.normal(k);
  }
  return x;
}

MixtureDenoiser make_empirical_denoiser(const std::vector<ImageTensor>& images, double iso_std,
                                        const std::vector<Condition>& labels) {
  if (!labels.empty() && labels.size() != images.size()) {
    throw std::invalid_argument("make_empirical_denoiser: label count differs from image count");
  }
  std::vector<MixtureComponent> comps;
  comps.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    comps.push_back({images[i], iso_std, 1.0, labels.empty() ? Condition{} : labels[i]});
  }
  return MixtureDenoiser(std::move(comps));
}

NoisePrediction cfg_combine(const NoisePrediction& eps_uncond, const NoisePrediction& eps_cond,
                            double w) {
  require_same_shape(eps_uncond.epsilon, eps_cond.epsilon, "cfg_combine");
  return NoisePrediction{affine_combine(1.0 - w, eps_uncond.epsilon, w, eps_cond.epsilon)};
}

ImageTensor denoised_estimate(const ImageTensor& x_t, double sigma_t,
                              const NoisePrediction& eps_hat) {
  require_same_shape(x_t, eps_hat.epsilon, "denoised_estimate");
  return add_scaled(x_t, -sigma_t, eps_hat.epsilon);
}

double mc_training_loss(const Denoiser& model, const MixtureDenoiser& data,
                        const NoiseSchedule& schedule, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("mc_training_loss: n_samples must be >= 1");
  if (model.shape() != data.shape()) {
    throw std::invalid_argument("mc_training_loss: model and data shapes differ");
  }
  std::vector<double> levels;
  for (int t = 1; t <= schedule.steps(); ++t) levels.push_back(schedule.sigma(t));

  const RandomStream root = RandomStream::from_seed(seed).derive("mc_training_loss");
  double total = 0.0;
  for (int j = 0; j < n_samples; ++j) {
    const RandomStream draw = root.derive(static_cast<std::uint64_t>(j));
    const ImageTensor x = data.sample_clean(draw.key(), 0);
    const auto level = std::min(levels.size() - 1,
                                static_cast<std::size_t>(draw.uniform(0) * levels.size()));
    const double sigma = levels[level];
    ImageTensor eps(x.shape());
    draw.derive("eps").fill_normal(eps.data());
    const ImageTensor y = add_scaled(x, sigma, eps);
    total += squared_distance(model.predict(y, sigma).epsilon, eps);
  }
  return total / n_samples;
}

MixtureDenoiser load_mixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mixture file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed mixture file '" + path.string() + "': " + e.what());
  }
  const auto base = path.parent_path();
  std::vector<MixtureComponent> comps;
  for (const auto& entry : doc.at("components")) {
    MixtureComponent c;
    if (entry.contains("image")) {
      c.mean = read_png(base / entry.at("image").get<std::string>());
    } else {
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 3) throw std::runtime_error("mixture component shape must be [C,H,W]");
      c.mean = ImageTensor(Shape{dims[0], dims[1], dims[2]},
                           entry.at("mean").get<std::vector<double>>());
    }
    c.iso_std = entry.value("iso_std", 0.0);
    c.weight = entry.value("weight", 1.0);
    if (entry.contains("label") && !entry.at("label").is_null()) {
      c.label = entry.at("label").get<std::string>();
    }
    comps.push_back(std::move(c));
  }
  return MixtureDenoiser(std::move(comps));
}

}  // namespace dragguide
