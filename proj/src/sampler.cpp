#include "dragguide/sampler.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "dragguide/csv.hpp"
#include "dragguide/rng.hpp"

namespace dragguide {

double QuadraticObjective::value(const ImageTensor& x) const {
  return squared_distance(x, center_);
}

std::pair<double, ImageTensor> QuadraticObjective::value_and_gradient(const ImageTensor& x) const {
  ImageTensor grad = add_scaled(x, -1.0, center_);
  const double v = squared_norm(grad);
  for (double& g : grad.data()) g *= 2.0;
  return {v, std::move(grad)};
}

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "ddim") return SamplerKind::ddim;
  if (name == "ddim_pgd_form" || name == "pgd") return SamplerKind::ddim_pgd_form;
  if (name == "gradient_estimation" || name == "ge") return SamplerKind::gradient_estimation;
  throw std::invalid_argument("unknown sampler kind '" + std::string(name) + "'");
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::ddim: return "ddim";
    case SamplerKind::ddim_pgd_form: return "ddim_pgd_form";
    case SamplerKind::gradient_estimation: return "gradient_estimation";
  }
  return "ddim";
}

namespace {

void check_step_index(int t, const NoiseSchedule& schedule, const char* what) {
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range(std::string(what) + ": t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
  }
}

}  // namespace

ImageTensor ddim_step(const ImageTensor& x_t, int t, const NoiseSchedule& schedule,
                      const NoisePrediction& eps_hat) {
  check_step_index(t, schedule, "ddim_step");
  require_same_shape(x_t, eps_hat.epsilon, "ddim_step");
  const double decrement = schedule.sigma(t) - schedule.sigma(t - 1);
  return add_scaled(x_t, -decrement, eps_hat.epsilon);
}

ImageTensor guided_step(const ImageTensor& x_t, int t, const NoiseSchedule& schedule,
                        const NoisePrediction& eps_hat, const ImageTensor& drag_grad,
                        const GuidanceWeights& weights) {
  check_step_index(t, schedule, "guided_step");
  require_same_shape(x_t, eps_hat.epsilon, "guided_step");
  require_same_shape(x_t, drag_grad, "guided_step");
  const double decrement = schedule.sigma(t) - schedule.sigma(t - 1);
  const double eta_t = eta(weights, schedule.sigma(t));
  ImageTensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x_t[i] - decrement * (eps_hat.epsilon[i] + eta_t * drag_grad[i]);
  }
  return out;
}

ImageTensor pgd_step(const ImageTensor& x_t, int t, const NoiseSchedule& schedule,
                     const NoisePrediction& eps_hat, const ImageTensor& drag_grad,
                     const GuidanceWeights& weights) {
  check_step_index(t, schedule, "pgd_step");
  require_same_shape(x_t, eps_hat.epsilon, "pgd_step");
  require_same_shape(x_t, drag_grad, "pgd_step");
  const double sigma_t = schedule.sigma(t);
  if (sigma_t == 0.0) throw std::invalid_argument("pgd_step: sigma_t = 0");
  const double a = alpha(schedule, t);
  const double g = gamma_t(weights, sigma_t);
  const ImageTensor projected = denoised_estimate(x_t, sigma_t, eps_hat);
  const ImageTensor shadow = add_scaled(projected, -g, drag_grad);
  return affine_combine(1.0 - a, x_t, a, shadow);
}

NoisePrediction ge_combine(const NoisePrediction& eps_curr, const NoisePrediction& eps_prev,
                           double gamma) {
  require_same_shape(eps_curr.epsilon, eps_prev.epsilon, "ge_combine");
  return NoisePrediction{affine_combine(gamma, eps_curr.epsilon, 1.0 - gamma, eps_prev.epsilon)};
}

ImageTensor img2img_init(const ImageTensor& x0, double sigma_T, std::uint64_t seed) {
  if (!std::isfinite(sigma_T) || sigma_T < 0.0) {
    throw std::invalid_argument("img2img_init: sigma_T must be finite and >= 0");
  }
  if (!x0.all_finite()) throw std::invalid_argument("img2img_init: non-finite reference");
  const RandomStream stream = RandomStream::from_seed(seed).derive("init_noise");
  ImageTensor out = x0;
  if (sigma_T == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma_T * stream.normal(i);
  return out;
}

ImageTensor noise_init(Shape shape, double sigma_T, std::uint64_t seed) {
  return img2img_init(ImageTensor(shape), sigma_T, seed);
}

Trajectory run_sampler(const Denoiser& denoiser, const GuidanceObjective* objective,
                       const SamplerConfig& config, const ImageTensor& init) {
  if (init.shape() != denoiser.shape()) {
    throw std::invalid_argument("run_sampler: init shape " + init.shape().str() +
                                " does not match denoiser shape " + denoiser.shape().str());
  }
  config.weights.validate();
  const NoiseSchedule& schedule = config.schedule;
  const int steps = schedule.steps();

  Trajectory traj;
  traj.sigmas = schedule.sigmas();
  ImageTensor x = init;
  if (config.record_trajectory) traj.states.emplace_back(steps, x);

  auto predict = [&](const ImageTensor& state, double sigma) {
    NoisePrediction eps = denoiser.predict(state, sigma, std::nullopt);
    if (config.condition) {
      eps = cfg_combine(eps, denoiser.predict(state, sigma, config.condition),
                        config.weights.cfg_w);
    }
    return eps;
  };

  std::optional<NoisePrediction> previous;
  for (int t = steps; t >= 1; --t) {
    const double sigma_t = schedule.sigma(t);
    NoisePrediction current = predict(x, sigma_t);
    NoisePrediction eps = (config.kind == SamplerKind::gradient_estimation && previous)
                              ? ge_combine(current, *previous, config.weights.ge_gamma)
                              : current;

    const bool guiding = objective != nullptr && eta(config.weights, sigma_t) != 0.0;
    std::optional<ImageTensor> grad;
    if (objective != nullptr || config.record_trajectory) {
      ImageTensor x0_hat = denoised_estimate(x, sigma_t, eps);
      if (objective != nullptr) {
        if (guiding) {
          auto [phi, g] = objective->value_and_gradient(x0_hat);
          if (!g.all_finite()) {
            throw std::runtime_error("run_sampler: non-finite guidance gradient at t=" +
                                     std::to_string(t));
          }
          traj.drag_track.emplace_back(t, phi);
          grad = std::move(g);
        } else {
          traj.drag_track.emplace_back(t, objective->value(x0_hat));
        }
      }
      if (config.record_trajectory) traj.denoised.emplace_back(t, std::move(x0_hat));
    }

    if (grad) {
      x = config.kind == SamplerKind::ddim_pgd_form
              ? pgd_step(x, t, schedule, eps, *grad, config.weights)
              : guided_step(x, t, schedule, eps, *grad, config.weights);
    } else if (config.kind == SamplerKind::ddim_pgd_form && sigma_t > 0.0) {
      x = pgd_step(x, t, schedule, eps, ImageTensor(x.shape()), config.weights);
    } else {
      x = ddim_step(x, t, schedule, eps);
    }
    if (config.record_trajectory) traj.states.emplace_back(t - 1, x);
    previous = std::move(current);
  }
  traj.final_state = std::move(x);
  return traj;
}

std::vector<Trajectory> run_sampler_batch(const Denoiser& denoiser,
                                          const GuidanceObjective* objective,
                                          const std::vector<SamplerJob>& jobs, int workers) {
  std::vector<Trajectory> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_sampler(denoiser, objective, jobs[i].config, jobs[i].init);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < n; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

Trajectory naive_pixel_descent(const GuidanceObjective& objective, const ImageTensor& x0,
                               int steps, double step_size) {
  if (steps < 1) throw std::invalid_argument("naive_pixel_descent: steps must be >= 1");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
    throw std::invalid_argument("naive_pixel_descent: step_size must be finite and >= 0");
  }
  Trajectory traj;
  ImageTensor x = x0;
  traj.states.emplace_back(steps, x);
  for (int k = 0; k < steps; ++k) {
    auto [phi, grad] = objective.value_and_gradient(x);
    if (!grad.all_finite() || !std::isfinite(phi)) {
      throw std::runtime_error("naive_pixel_descent: non-finite gradient at step " +
                               std::to_string(k) + " (phi=" + std::to_string(phi) + ")");
    }
    traj.drag_track.emplace_back(steps - k, phi);
    x = add_scaled(x, -step_size, grad);
    traj.states.emplace_back(steps - k - 1, x);
  }
  traj.drag_track.emplace_back(0, objective.value(x));
  traj.final_state = std::move(x);
  return traj;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory) {
  CsvWriter csv(path);
  const bool with_drag = !trajectory.drag_track.empty();
  if (with_drag) {
    csv.header({"t", "sigma_t", "phi_drag"});
    for (const auto& [t, phi] : trajectory.drag_track) {
      const double sigma = t < static_cast<int>(trajectory.sigmas.size())
                               ? trajectory.sigmas[static_cast<std::size_t>(t)]
                               : 0.0;
      csv.row(t, sigma, phi);
    }
  } else {
    csv.header({"t", "sigma_t"});
    for (int t = static_cast<int>(trajectory.sigmas.size()) - 1; t >= 1; --t) {
      csv.row(t, trajectory.sigmas[static_cast<std::size_t>(t)]);
    }
  }
}

}  // namespace dragguide
