#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dragguide/schedule.hpp"
#include "dragguide/tensor.hpp"

namespace dragguide {

/// Output of a denoiser: the predicted noise ε̂, same shape as the state.
struct NoisePrediction {
  ImageTensor epsilon;

  friend bool operator==(const NoisePrediction&, const NoisePrediction&) = default;
};

using Condition = std::optional<std::string>;

/// Anything mapping (noisy state, noise level, optional condition) to ε̂.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  [[nodiscard]] virtual Shape shape() const = 0;
  [[nodiscard]] virtual NoisePrediction predict(const ImageTensor& y, double sigma,
                                                const Condition& condition) const = 0;
  [[nodiscard]] NoisePrediction predict(const ImageTensor& y, double sigma) const {
    return predict(y, sigma, std::nullopt);
  }
};

struct MixtureComponent {
  ImageTensor mean;
  double iso_std = 0.0;
  double weight = 1.0;
  Condition label;
};

/// Exact minimiser of the denoising loss for an isotropic Gaussian mixture.
///
/// For y = x + σε with x drawn from the mixture, returns
/// ε̂ = (y − E[x | y]) / σ. Component posteriors are accumulated in log space
/// with the maximum subtracted. An empirical dataset is the special case of
/// point masses (iso_std = 0).
class MixtureDenoiser final : public Denoiser {
 public:
  /// Normalises the weights to sum to one.
  explicit MixtureDenoiser(std::vector<MixtureComponent> components);

  [[nodiscard]] Shape shape() const override { return shape_; }
  [[nodiscard]] NoisePrediction predict(const ImageTensor& y, double sigma,
                                        const Condition& condition) const override;
  using Denoiser::predict;

  [[nodiscard]] const std::vector<MixtureComponent>& components() const { return components_; }

  /// One clean draw x from the (optionally condition-restricted) mixture.
  [[nodiscard]] ImageTensor sample_clean(std::uint64_t seed, std::uint64_t index,
                                         const Condition& condition = std::nullopt) const;

 private:
  Shape shape_{};
  std::vector<MixtureComponent> components_;
};

/// Point-mass mixture over the given images, equal weights.
[[nodiscard]] MixtureDenoiser make_empirical_denoiser(const std::vector<ImageTensor>& images,
                                                      double iso_std = 0.0,
                                                      const std::vector<Condition>& labels = {});

/// Convenience wrapper matching the free-function form.
[[nodiscard]] inline NoisePrediction predict_epsilon(const Denoiser& denoiser,
                                                     const ImageTensor& y, double sigma,
                                                     const Condition& condition = std::nullopt) {
  return denoiser.predict(y, sigma, condition);
}

/// (1 − w)·ε_uncond + w·ε_cond
[[nodiscard]] NoisePrediction cfg_combine(const NoisePrediction& eps_uncond,
                                          const NoisePrediction& eps_cond, double w);

/// x̂₀ = x_t − σ_t·ε̂
[[nodiscard]] ImageTensor denoised_estimate(const ImageTensor& x_t, double sigma_t,
                                            const NoisePrediction& eps_hat);

/// Monte-Carlo estimate of E‖model(x + σε, σ) − ε‖² with x drawn from `data`,
/// σ uniform over the schedule's positive levels σ_1..σ_T and ε ~ N(0, I).
[[nodiscard]] double mc_training_loss(const Denoiser& model, const MixtureDenoiser& data,
                                      const NoiseSchedule& schedule, int n_samples,
                                      std::uint64_t seed);
[[nodiscard]] inline double mc_training_loss(const MixtureDenoiser& denoiser,
                                             const NoiseSchedule& schedule, int n_samples,
                                             std::uint64_t seed) {
  return mc_training_loss(denoiser, denoiser, schedule, n_samples, seed);
}

/// Loads a mixture from JSON:
///   {"components": [{"mean": [...], "shape": [C,H,W]} | {"image": "rel.png"},
///                   "iso_std": s, "weight": π, "label": "tag"}]}
/// Image paths are resolved against the directory holding the JSON file.
[[nodiscard]] MixtureDenoiser load_mixture(const std::filesystem::path& path);

}  // namespace dragguide
