// dragguide: drag-guided diffusion sampling experiments.
//
//   dragguide gen-data --out data --count 1000 --seed 7
//   dragguide train --dataset data --out model
//   dragguide sample --model model/model.json --dataset data --out runs/sample
//
// Every command writes config.json and metadata.json into --out. Passing that
// config.json back through --config reruns the command identically.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dragguide/experiments.hpp"

namespace {

using dragguide::RunConfig;

struct Flags {
  RunConfig config;
  std::string schedule = "log_linear";
  std::string condition;
  std::string config_file;
  bool no_augment = false;
};

void add_common(CLI::App& cmd, Flags& f) {
  auto& c = f.config;
  cmd.add_option("--T", c.steps, "number of sampling steps")->capture_default_str();
  cmd.add_option("--sigma-min", c.sigma_min, "smallest noise level")->capture_default_str();
  cmd.add_option("--sigma-max", c.sigma_max, "largest noise level sigma_T")->capture_default_str();
  cmd.add_option("--schedule", f.schedule, "log_linear or linear")->capture_default_str();
  cmd.add_option("--eta0", c.eta0, "drag guidance scale")->capture_default_str();
  cmd.add_option("--cfg-scale", c.cfg_scale, "classifier-free guidance weight")
      ->capture_default_str();
  cmd.add_option("--ge-gamma", c.ge_gamma, "gradient-estimation mixing factor")
      ->capture_default_str();
  cmd.add_option("--lambda", c.lambda, "ridge regularisation")->capture_default_str();
  cmd.add_option("--seed", c.seed, "root seed")->capture_default_str();
  cmd.add_option("--out", c.out, "output directory")->capture_default_str();
  cmd.add_option("--config", f.config_file, "JSON config; its keys override flags");
  cmd.add_option("--workers", c.workers, "worker threads")->capture_default_str();
}

void add_dataset(CLI::App& cmd, Flags& f) {
  cmd.add_option("--dataset", f.config.dataset, "dataset directory with labels.csv");
}

void add_model(CLI::App& cmd, Flags& f) {
  cmd.add_option("--model", f.config.model, "surrogate model file");
}

void add_sampling(CLI::App& cmd, Flags& f) {
  auto& c = f.config;
  cmd.add_option("--sampler", c.sampler, "ddim, pgd or ge")->capture_default_str();
  cmd.add_option("--condition", f.condition, "condition label for classifier-free guidance");
  cmd.add_option("--mixture", c.mixture, "mixture JSON for the denoiser (default: dataset)");
  cmd.add_option("--denoiser-std", c.denoiser_std, "component std of the empirical mixture")
      ->capture_default_str();
  cmd.add_option("--reference", c.reference, "reference PNG");
  cmd.add_option("--reference-id", c.reference_id, "dataset record used as reference");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Drag-guided diffusion sampling experiments"};
  app.require_subcommand(1);
  Flags f;
  auto& c = f.config;

  auto* gen = app.add_subcommand("gen-data", "render a synthetic vehicle dataset");
  add_common(*gen, f);
  gen->add_option("--count", c.count, "number of images")->capture_default_str();
  gen->add_option("--side", c.side, "image side in pixels")->capture_default_str();

  auto* train = app.add_subcommand("train", "fit the random-feature drag surrogate");
  add_common(*train, f);
  add_dataset(*train, f);
  train->add_option("--channels", c.channels, "random conv channels")->capture_default_str();
  train->add_option("--feature-seed", c.feature_seed, "seed of the conv weights")
      ->capture_default_str();
  train->add_flag("--no-augment", f.no_augment, "fit on the raw images only");

  auto* eval = app.add_subcommand("eval", "evaluate a surrogate on a dataset");
  add_common(*eval, f);
  add_dataset(*eval, f);
  add_model(*eval, f);
  eval->add_option("--split", c.split, "all, train or test")->capture_default_str();

  auto* sample = app.add_subcommand("sample", "paired baseline and drag-guided sampling");
  add_common(*sample, f);
  add_dataset(*sample, f);
  add_model(*sample, f);
  add_sampling(*sample, f);
  sample->add_option("--pairs", c.pairs, "number of seed pairs")->capture_default_str();

  auto* redesign = app.add_subcommand("redesign", "drag-guided redesign of a reference image");
  add_common(*redesign, f);
  add_dataset(*redesign, f);
  add_model(*redesign, f);
  add_sampling(*redesign, f);
  redesign->add_option("--sigma-T", c.sigma_T, "starting noise levels")->delimiter(',');
  redesign->add_option("--seeds", c.seeds, "seeds per noise level")->capture_default_str();

  auto* robust = app.add_subcommand("robustness", "surrogate error on denoised estimates");
  add_common(*robust, f);
  add_dataset(*robust, f);
  add_model(*robust, f);
  robust->add_option("--noise-levels", c.noise_levels, "noise levels")->delimiter(',');
  robust->add_option("--split", c.split, "all, train or test")->capture_default_str();
  robust->add_option("--mixture", c.mixture, "mixture JSON for the denoiser (default: dataset)");
  robust->add_option("--denoiser-std", c.denoiser_std, "component std of the empirical mixture")
      ->capture_default_str();
  robust->add_option("--reference-id", c.reference_id, "record for the single-image curve");

  auto* equiv = app.add_subcommand("check-equivalence",
                                   "compare guided and projected-gradient steps");
  add_common(*equiv, f);
  equiv->add_option("--trials", c.trials, "randomised configurations")->capture_default_str();
  equiv->add_option("--step-tolerance", c.step_tolerance)->capture_default_str();
  equiv->add_option("--trajectory-tolerance", c.trajectory_tolerance)->capture_default_str();

  auto* descent = app.add_subcommand("naive-descent", "gradient descent on pixels");
  add_common(*descent, f);
  add_dataset(*descent, f);
  add_model(*descent, f);
  descent->add_option("--reference", c.reference, "starting PNG");
  descent->add_option("--reference-id", c.reference_id, "dataset record to start from");
  descent->add_option("--steps", c.descent_steps, "descent steps")->capture_default_str();
  descent->add_option("--lr", c.learning_rate, "step size")->capture_default_str();
  descent->add_option("--frame-every", c.frame_every, "save every k-th frame")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    c.command = app.get_subcommands().front()->get_name();
    c.schedule = dragguide::parse_schedule_kind(f.schedule);
    if (!f.condition.empty()) c.condition = f.condition;
    if (f.no_augment) c.augment = false;
    if (!f.config_file.empty()) {
      const std::string command = c.command;
      std::ifstream in(f.config_file);
      if (!in) throw std::runtime_error("cannot open config file '" + f.config_file + "'");
      from_json(nlohmann::json::parse(in), c);
      if (c.command != command) {
        throw std::invalid_argument("config file is for '" + c.command + "', not '" + command + "'");
      }
    }
    return dragguide::run_command(c);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
