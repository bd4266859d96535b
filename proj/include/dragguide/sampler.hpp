#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dragguide/denoiser.hpp"
#include "dragguide/schedule.hpp"
#include "dragguide/tensor.hpp"

namespace dragguide {

/// A differentiable scalar objective φ attached to a sampler (the drag
/// surrogate, or a quadratic target in tests). Implementations must be safe
/// for concurrent const use.
class GuidanceObjective {
 public:
  virtual ~GuidanceObjective() = default;
  [[nodiscard]] virtual double value(const ImageTensor& x) const = 0;
  [[nodiscard]] virtual std::pair<double, ImageTensor> value_and_gradient(
      const ImageTensor& x) const = 0;
};

/// φ(x) = ‖x − c‖²
class QuadraticObjective final : public GuidanceObjective {
 public:
  explicit QuadraticObjective(ImageTensor center) : center_(std::move(center)) {}
  [[nodiscard]] double value(const ImageTensor& x) const override;
  [[nodiscard]] std::pair<double, ImageTensor> value_and_gradient(
      const ImageTensor& x) const override;

 private:
  ImageTensor center_;
};

enum class SamplerKind { ddim, ddim_pgd_form, gradient_estimation };

[[nodiscard]] SamplerKind parse_sampler_kind(std::string_view name);
[[nodiscard]] std::string to_string(SamplerKind kind);

struct SamplerConfig {
  NoiseSchedule schedule;
  GuidanceWeights weights{};
  SamplerKind kind = SamplerKind::ddim;
  std::uint64_t seed = 0;
  bool record_trajectory = false;
  /// When set, ε̂ is the CFG blend of the unconditional and conditional
  /// predictions with weight weights.cfg_w.
  Condition condition;
};

struct Trajectory {
  std::vector<std::pair<int, ImageTensor>> states;    // (t, x_t), only when recorded
  std::vector<std::pair<int, ImageTensor>> denoised;  // (t, x̂₀ᵗ), only when recorded
  std::vector<std::pair<int, double>> drag_track;     // (t, φ(x̂₀ᵗ)) when an objective is attached
  std::vector<double> sigmas;                          // σ_t indexed by t
  ImageTensor final_state;
};

/// x_{t−1} = x_t − (σ_t − σ_{t−1})·ε̂
[[nodiscard]] ImageTensor ddim_step(const ImageTensor& x_t, int t, const NoiseSchedule& schedule,
                                    const NoisePrediction& eps_hat);

/// x_{t−1} = x_t − (σ_t − σ_{t−1})·(ε̂ + η_t·∇φ(x̂₀ᵗ)). The caller evaluates
/// `drag_grad` at x̂₀ᵗ.
[[nodiscard]] ImageTensor guided_step(const ImageTensor& x_t, int t,
                                      const NoiseSchedule& schedule,
                                      const NoisePrediction& eps_hat,
                                      const ImageTensor& drag_grad,
                                      const GuidanceWeights& weights);

/// The same update written as damped projected gradient descent:
///   x̂₀ = x_t − σ_t ε̂,  x̂_drag = x̂₀ − γ_t ∇φ,  x_{t−1} = (1 − α_t) x_t + α_t x̂_drag.
/// Rejects σ_t = 0.
[[nodiscard]] ImageTensor pgd_step(const ImageTensor& x_t, int t, const NoiseSchedule& schedule,
                                   const NoisePrediction& eps_hat, const ImageTensor& drag_grad,
                                   const GuidanceWeights& weights);

/// γ·ε_curr + (1 − γ)·ε_prev
[[nodiscard]] NoisePrediction ge_combine(const NoisePrediction& eps_curr,
                                         const NoisePrediction& eps_prev, double gamma);

/// x₀ + σ_T·ε with ε drawn from the counter-based stream keyed by `seed`.
[[nodiscard]] ImageTensor img2img_init(const ImageTensor& x0, double sigma_T, std::uint64_t seed);

/// Pure-noise start x_T = σ_T·ε, equivalent to img2img_init from zero.
[[nodiscard]] ImageTensor noise_init(Shape shape, double sigma_T, std::uint64_t seed);

/// Runs t = T..1 from `init` with the configured step rule. When an
/// objective is attached, φ(x̂₀ᵗ) is recorded every step.
[[nodiscard]] Trajectory run_sampler(const Denoiser& denoiser,
                                     const GuidanceObjective* objective,
                                     const SamplerConfig& config, const ImageTensor& init);

struct SamplerJob {
  SamplerConfig config;
  ImageTensor init;
};

/// Independent runs fanned out over `workers` threads; results are in job
/// order and do not depend on the worker count.
[[nodiscard]] std::vector<Trajectory> run_sampler_batch(const Denoiser& denoiser,
                                                        const GuidanceObjective* objective,
                                                        const std::vector<SamplerJob>& jobs,
                                                        int workers);

/// Plain gradient descent x ← x − step_size·∇φ(x). The drag track holds
/// steps + 1 entries indexed t = steps..0 (initial image first); the states
/// list holds every iterate.
[[nodiscard]] Trajectory naive_pixel_descent(const GuidanceObjective& objective,
                                             const ImageTensor& x0, int steps,
                                             double step_size);

/// CSV with columns t, sigma_t, phi_drag (the last only when recorded).
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);

}  // namespace dragguide
