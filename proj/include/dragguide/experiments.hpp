#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dragguide/schedule.hpp"
#include "dragguide/surrogate.hpp"

namespace dragguide {

/// Resolved parameters of one command. Every command writes this next to
/// its outputs as config.json, and reading that file back reproduces the run.
struct RunConfig {
  std::string command;

  // Sampling.
  ScheduleKind schedule = ScheduleKind::log_linear;
  int steps = 80;
  double sigma_min = 0.0;
  double sigma_max = 10.0;
  double eta0 = 400.0;
  double cfg_scale = 7.5;
  double ge_gamma = 2.0;
  std::string sampler = "ddim";
  std::optional<std::string> condition;

  // Surrogate.
  double lambda = 10.0;
  int channels = 160;
  std::uint64_t feature_seed = 0;
  bool augment = true;

  std::uint64_t seed = 0;
  int workers = 1;
  std::filesystem::path out = "out";

  // Inputs.
  std::filesystem::path dataset;
  std::filesystem::path model;
  std::filesystem::path reference;  // PNG; when empty, `reference_id` picks a dataset record
  std::string reference_id;
  std::filesystem::path mixture;    // when empty, an empirical mixture over the dataset
  double denoiser_std = 0.02;

  // gen-data
  int count = 1000;
  int side = 64;

  // sample
  int pairs = 8;

  // redesign
  std::vector<double> sigma_T = {0.0, 1.0, 5.0, 10.0};
  int seeds = 4;

  // robustness
  std::vector<double> noise_levels = {0.0, 1.0, 2.0, 4.0, 8.0};
  std::string split = "all";

  // check-equivalence
  int trials = 100;
  double step_tolerance = 1e-9;
  double trajectory_tolerance = 1e-7;

  // naive-descent
  int descent_steps = 200;
  double learning_rate = 0.003;
  int frame_every = 50;

  [[nodiscard]] NoiseSchedule make_schedule() const;
  [[nodiscard]] GuidanceWeights guidance() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Keys absent from `j` keep their current value; unknown keys are rejected.
void from_json(const nlohmann::json& j, RunConfig& c);

[[nodiscard]] RunConfig load_run_config(const std::filesystem::path& path);

struct GenDataResult {
  std::size_t count = 0;
  double label_min = 0.0;
  double label_max = 0.0;
};
GenDataResult cmd_gen_data(const RunConfig& config);

struct TrainResult {
  SurrogateModel model;
  EvalResult train;  // on the fitted (augmented) rows
  EvalResult test;
  std::size_t train_records = 0;
  std::size_t train_rows = 0;
  std::size_t test_records = 0;
};
TrainResult cmd_train(const RunConfig& config);

EvalResult cmd_eval(const RunConfig& config);

struct SamplePair {
  std::uint64_t seed = 0;
  double baseline_drag = 0.0;
  double guided_drag = 0.0;
};
struct SampleResult {
  std::vector<SamplePair> pairs;
};
SampleResult cmd_sample(const RunConfig& config);

struct RedesignRun {
  double sigma_T = 0.0;
  std::uint64_t seed = 0;
  double reference_drag = 0.0;
  double first_step_drag = 0.0;
  double final_drag = 0.0;
  double pixel_distance = 0.0;  // mean absolute difference to the reference
};
struct RedesignResult {
  std::vector<RedesignRun> runs;
};
RedesignResult cmd_redesign(const RunConfig& config);

struct RobustnessPoint {
  double sigma = 0.0;
  double mse = 0.0;
};
struct RobustnessResult {
  std::vector<RobustnessPoint> curve;
  double clean_mse = 0.0;
  std::string single_id;
  std::vector<double> single_predictions;  // one per noise level
};
RobustnessResult cmd_robustness(const RunConfig& config);

struct EquivalenceResult {
  double max_step_deviation = 0.0;
  double max_trajectory_deviation = 0.0;
  int trials = 0;
  bool passed = false;
};
EquivalenceResult cmd_check_equivalence(const RunConfig& config);

struct DescentResult {
  std::vector<double> phi;               // one per state, first is the start
  std::vector<double> nearest_distance;  // to the closest training image
};
DescentResult cmd_naive_descent(const RunConfig& config);

/// Dispatches on `config.command`. Returns the process exit code.
int run_command(const RunConfig& config);

}  // namespace dragguide
