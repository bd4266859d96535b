#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dragguide {

enum class ScheduleKind { log_linear, linear };

[[nodiscard]] ScheduleKind parse_schedule_kind(std::string_view name);
[[nodiscard]] std::string to_string(ScheduleKind kind);

/// Increasing noise levels σ_0 < σ_1 < ... < σ_T.
class NoiseSchedule {
 public:
  /// Validates strict monotonicity, σ_0 ≥ 0 and finiteness.
  explicit NoiseSchedule(std::vector<double> sigmas);

  [[nodiscard]] int steps() const { return static_cast<int>(sigmas_.size()) - 1; }
  [[nodiscard]] double sigma(int t) const;
  [[nodiscard]] double sigma_max() const { return sigmas_.back(); }
  [[nodiscard]] const std::vector<double>& sigmas() const { return sigmas_; }

 private:
  std::vector<double> sigmas_;
};

/// η₀, CFG weight w and gradient-estimation mixing γ.
struct GuidanceWeights {
  double eta0 = 400.0;
  double cfg_w = 7.5;
  double ge_gamma = 2.0;

  void validate() const;
};

/// Linear: uniform spacing from sigma_min to sigma_max.
/// Log-linear: geometric spacing from sigma_min to sigma_max over t = 0..T.
/// With sigma_min = 0 the log grid covers t = 1..T starting at
/// 0.01·sigma_max, and σ_0 stays pinned at 0.
[[nodiscard]] NoiseSchedule make_schedule(ScheduleKind kind, int steps, double sigma_min,
                                          double sigma_max);

/// α_t = 1 − σ_{t−1}/σ_t, for 1 ≤ t ≤ T and σ_t > 0.
[[nodiscard]] double alpha(const NoiseSchedule& schedule, int t);

/// η_t = η₀/√(1 + 1/σ²), evaluated as η₀·σ/√(σ² + 1) so σ = 0 gives 0.
[[nodiscard]] double eta(const GuidanceWeights& weights, double sigma);

/// γ_t = σ_t·η_t
[[nodiscard]] double gamma_t(const GuidanceWeights& weights, double sigma);

}  // namespace dragguide
