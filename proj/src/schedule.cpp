#include "dragguide/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace dragguide {

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "log_linear" || name == "log-linear") return ScheduleKind::log_linear;
  if (name == "linear") return ScheduleKind::linear;
  throw std::invalid_argument("unknown schedule kind '" + std::string(name) + "'");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::linear ? "linear" : "log_linear";
}

NoiseSchedule::NoiseSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
  if (sigmas_.size() < 2) throw std::invalid_argument("NoiseSchedule: need at least T = 1");
  if (!(sigmas_.front() >= 0.0)) throw std::invalid_argument("NoiseSchedule: sigma_0 < 0");
  for (std::size_t t = 0; t < sigmas_.size(); ++t) {
    if (!std::isfinite(sigmas_[t])) {
      throw std::invalid_argument("NoiseSchedule: non-finite sigma at t=" + std::to_string(t));
    }
    if (t > 0 && !(sigmas_[t] > sigmas_[t - 1])) {
      throw std::invalid_argument("NoiseSchedule: not strictly increasing at t=" +
                                  std::to_string(t));
    }
  }
}

double NoiseSchedule::sigma(int t) const {
  if (t < 0 || t > steps()) {
    throw std::out_of_range("NoiseSchedule: t=" + std::to_string(t) + " outside [0, " +
                            std::to_string(steps()) + "]");
  }
  return sigmas_[static_cast<std::size_t>(t)];
}

void GuidanceWeights::validate() const {
  if (!std::isfinite(eta0) || !std::isfinite(cfg_w) || !std::isfinite(ge_gamma)) {
    throw std::invalid_argument("GuidanceWeights: non-finite weight");
  }
  if (eta0 < 0.0) throw std::invalid_argument("GuidanceWeights: eta0 must be >= 0");
}

NoiseSchedule make_schedule(ScheduleKind kind, int steps, double sigma_min, double sigma_max) {
  if (steps < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!std::isfinite(sigma_min) || !std::isfinite(sigma_max)) {
    throw std::invalid_argument("make_schedule: non-finite sigma bounds");
  }
  if (sigma_min < 0.0 || !(sigma_min < sigma_max)) {
    throw std::invalid_argument("make_schedule: need 0 <= sigma_min < sigma_max");
  }
  std::vector<double> sigmas(static_cast<std::size_t>(steps) + 1);
  const double n = static_cast<double>(steps);
  if (kind == ScheduleKind::linear) {
    for (int t = 0; t <= steps; ++t) {
      sigmas[t] = sigma_min + (sigma_max - sigma_min) * (t / n);
    }
  } else if (sigma_min > 0.0) {
    const double lo = std::log(sigma_min);
    const double hi = std::log(sigma_max);
    for (int t = 0; t <= steps; ++t) sigmas[t] = std::exp(lo + (hi - lo) * (t / n));
  } else {
    sigmas[0] = 0.0;
    if (steps == 1) {
      sigmas[1] = sigma_max;
    } else {
      const double lo = std::log(0.01 * sigma_max);
      const double hi = std::log(sigma_max);
      for (int t = 1; t <= steps; ++t) {
        sigmas[t] = std::exp(lo + (hi - lo) * ((t - 1) / (n - 1.0)));
      }
    }
  }
  sigmas.front() = sigma_min;
  sigmas.back() = sigma_max;
  return NoiseSchedule(std::move(sigmas));
}

double alpha(const NoiseSchedule& schedule, int t) {
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range("alpha: t=" + std::to_string(t) + " outside [1, T]");
  }
  const double s = schedule.sigma(t);
  if (s == 0.0) throw std::invalid_argument("alpha: sigma_t = 0");
  return 1.0 - schedule.sigma(t - 1) / s;
}

double eta(const GuidanceWeights& weights, double sigma) {
  if (!std::isfinite(sigma) || sigma < 0.0) {
    throw std::invalid_argument("eta: sigma must be finite and >= 0");
  }
  return weights.eta0 * sigma / std::sqrt(sigma * sigma + 1.0);
}

double gamma_t(const GuidanceWeights& weights, double sigma) {
  return sigma * eta(weights, sigma);
}

}  // namespace dragguide
