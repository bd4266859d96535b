#include "dragguide/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <stdexcept>

#include "dragguide/csv.hpp"
#include "dragguide/png_io.hpp"
#include "dragguide/rng.hpp"

namespace dragguide {

namespace fs = std::filesystem;
using nlohmann::json;

NoiseSchedule RunConfig::make_schedule() const {
  return dragguide::make_schedule(schedule, steps, sigma_min, sigma_max);
}

GuidanceWeights RunConfig::guidance() const {
  return GuidanceWeights{eta0, cfg_scale, ge_gamma};
}

void RunConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("config: T must be >= 1");
  guidance().validate();
  (void)parse_sampler_kind(sampler);
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (!(lambda >= 0.0)) throw std::invalid_argument("config: lambda must be >= 0");
  if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
  if (split != "all" && split != "train" && split != "test") {
    throw std::invalid_argument("config: split must be all, train or test");
  }
  if (!(denoiser_std >= 0.0)) throw std::invalid_argument("config: denoiser_std must be >= 0");
  for (double s : sigma_T) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("config: sigma_T must be >= 0");
  }
  for (double s : noise_levels) {
    if (!(s >= 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("config: noise levels must be >= 0");
    }
  }
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"command", c.command},
           {"schedule", to_string(c.schedule)},
           {"T", c.steps},
           {"sigma_min", c.sigma_min},
           {"sigma_max", c.sigma_max},
           {"eta0", c.eta0},
           {"cfg_scale", c.cfg_scale},
           {"ge_gamma", c.ge_gamma},
           {"sampler", c.sampler},
           {"condition", c.condition ? json(*c.condition) : json(nullptr)},
           {"lambda", c.lambda},
           {"channels", c.channels},
           {"feature_seed", c.feature_seed},
           {"augment", c.augment},
           {"seed", c.seed},
           {"workers", c.workers},
           {"out", c.out.string()},
           {"dataset", c.dataset.string()},
           {"model", c.model.string()},
           {"reference", c.reference.string()},
           {"reference_id", c.reference_id},
           {"mixture", c.mixture.string()},
           {"denoiser_std", c.denoiser_std},
           {"count", c.count},
           {"side", c.side},
           {"pairs", c.pairs},
           {"sigma_T", c.sigma_T},
           {"seeds", c.seeds},
           {"noise_levels", c.noise_levels},
           {"split", c.split},
           {"trials", c.trials},
           {"step_tolerance", c.step_tolerance},
           {"trajectory_tolerance", c.trajectory_tolerance},
           {"descent_steps", c.descent_steps},
           {"learning_rate", c.learning_rate},
           {"frame_every", c.frame_every}};
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void take_path(const json& j, const char* key, fs::path& field) {
  if (j.contains(key)) field = j.at(key).get<std::string>();
}

}  // namespace

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  static const std::set<std::string> known = {
      "command", "schedule", "T", "sigma_min", "sigma_max", "eta0", "cfg_scale", "ge_gamma",
      "sampler", "condition", "lambda", "channels", "feature_seed", "augment", "seed", "workers",
      "out", "dataset", "model", "reference", "reference_id", "mixture", "denoiser_std", "count",
      "side", "pairs", "sigma_T", "seeds", "noise_levels", "split", "trials", "step_tolerance",
      "trajectory_tolerance", "descent_steps", "learning_rate", "frame_every"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  take(j, "command", c.command);
  if (j.contains("schedule")) c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
  take(j, "T", c.steps);
  take(j, "sigma_min", c.sigma_min);
  take(j, "sigma_max", c.sigma_max);
  take(j, "eta0", c.eta0);
  take(j, "cfg_scale", c.cfg_scale);
  take(j, "ge_gamma", c.ge_gamma);
  take(j, "sampler", c.sampler);
  if (j.contains("condition")) {
    const auto& v = j.at("condition");
    c.condition = v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
  }
  take(j, "lambda", c.lambda);
  take(j, "channels", c.channels);
  take(j, "feature_seed", c.feature_seed);
  take(j, "augment", c.augment);
  take(j, "seed", c.seed);
  take(j, "workers", c.workers);
  take_path(j, "out", c.out);
  take_path(j, "dataset", c.dataset);
  take_path(j, "model", c.model);
  take_path(j, "reference", c.reference);
  take(j, "reference_id", c.reference_id);
  take_path(j, "mixture", c.mixture);
  take(j, "denoiser_std", c.denoiser_std);
  take(j, "count", c.count);
  take(j, "side", c.side);
  take(j, "pairs", c.pairs);
  take(j, "sigma_T", c.sigma_T);
  take(j, "seeds", c.seeds);
  take(j, "noise_levels", c.noise_levels);
  take(j, "split", c.split);
  take(j, "trials", c.trials);
  take(j, "step_tolerance", c.step_tolerance);
  take(j, "trajectory_tolerance", c.trajectory_tolerance);
  take(j, "descent_steps", c.descent_steps);
  take(j, "learning_rate", c.learning_rate);
  take(j, "frame_every", c.frame_every);
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed config file '" + path.string() + "': " + e.what());
  }
  RunConfig c;
  from_json(j, c);
  return c;
}

namespace {

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  }
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw std::runtime_error("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << j.dump(2) << '\n';
}

void begin_run(const RunConfig& config) {
  config.validate();
  prepare_out(config.out);
  write_json(config.out / "config.json", json(config));
}

void finish_run(const RunConfig& config, json info) {
  info["command"] = config.command;
  info["png_range"] = {0.0, 1.0};
  info["csv_precision"] = 17;
  write_json(config.out / "metadata.json", info);
}

std::vector<DatasetRecord> require_dataset(const RunConfig& config) {
  if (config.dataset.empty()) throw std::invalid_argument(config.command + ": --dataset is required");
  auto records = load_dataset(config.dataset);
  if (records.empty()) throw std::invalid_argument(config.command + ": empty dataset");
  return records;
}

std::vector<DatasetRecord> select_split(std::vector<DatasetRecord> records, const std::string& split) {
  if (split == "all") return records;
  DatasetSplit s = split_by_id_hash(records);
  return split == "train" ? std::move(s.train) : std::move(s.test);
}

SurrogateModel require_model(const RunConfig& config, bool need_images) {
  if (config.model.empty()) throw std::invalid_argument(config.command + ": --model is required");
  SurrogateModel model = load_model(config.model);
  if (need_images && !model.guidable()) {
    throw std::invalid_argument(
        config.command + ": model '" + config.model.string() +
        "' was fitted on precomputed features and has no image feature extractor, so it cannot "
        "predict drag from pixels or supply gradients; train a random-feature model instead");
  }
  return model;
}

const DatasetRecord& find_record(const std::vector<DatasetRecord>& records, const std::string& id) {
  for (const auto& r : records) {
    if (r.id == id) return r;
  }
  throw std::invalid_argument("no dataset record with id '" + id + "'");
}

/// The reference image: an explicit PNG, else a named record, else the
/// first training record.
ImageTensor resolve_reference(const RunConfig& config, const std::vector<DatasetRecord>& records) {
  if (!config.reference.empty()) return read_png(config.reference);
  if (records.empty()) throw std::invalid_argument(config.command + ": no reference image given");
  if (!config.reference_id.empty()) return find_record(records, config.reference_id).image;
  const DatasetSplit s = split_by_id_hash(records);
  return (s.train.empty() ? s.test : s.train).front().image;
}

/// Mixture file when configured, else an empirical mixture over the
/// training split of the dataset.
MixtureDenoiser resolve_denoiser(const RunConfig& config, const std::vector<DatasetRecord>& records) {
  if (!config.mixture.empty()) return load_mixture(config.mixture);
  if (records.empty()) {
    throw std::invalid_argument(config.command + ": need --mixture or --dataset for the denoiser");
  }
  DatasetSplit s = split_by_id_hash(records);
  const auto& pool = s.train.empty() ? s.test : s.train;
  std::vector<ImageTensor> images;
  std::vector<Condition> labels;
  for (const auto& r : pool) {
    images.push_back(r.image);
    labels.push_back(r.condition);
  }
  return make_empirical_denoiser(images, config.denoiser_std, labels);
}

std::vector<DatasetRecord> optional_dataset(const RunConfig& config) {
  return config.dataset.empty() ? std::vector<DatasetRecord>{} : require_dataset(config);
}

/// Tiles equally shaped images into rows with a white gutter.
ImageTensor make_grid(const std::vector<std::vector<ImageTensor>>& rows) {
  constexpr int gutter = 2;
  std::size_t cols = 0;
  Shape cell{};
  for (const auto& r : rows) {
    cols = std::max(cols, r.size());
    for (const auto& im : r) cell = im.shape();
  }
  if (cols == 0) return ImageTensor(Shape{3, 1, 1}, 1.0);
  const int height = static_cast<int>(rows.size()) * (cell.height + gutter) + gutter;
  const int width = static_cast<int>(cols) * (cell.width + gutter) + gutter;
  ImageTensor grid(Shape{3, height, width}, 1.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const ImageTensor& im = rows[r][c];
      const int y0 = gutter + static_cast<int>(r) * (cell.height + gutter);
      const int x0 = gutter + static_cast<int>(c) * (cell.width + gutter);
      for (int ch = 0; ch < 3; ++ch) {
        const int src_ch = std::min(ch, im.channels() - 1);
        for (int y = 0; y < im.height(); ++y) {
          for (int x = 0; x < im.width(); ++x) grid.at(ch, y0 + y, x0 + x) = im.at(src_ch, y, x);
        }
      }
    }
  }
  return grid;
}

double mean_abs_difference(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "mean_abs_difference");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

SamplerConfig sampler_config(const RunConfig& config, NoiseSchedule schedule, std::uint64_t seed,
                             double eta0) {
  SamplerConfig sc{std::move(schedule), config.guidance(), parse_sampler_kind(config.sampler), seed,
                   false, config.condition};
  sc.weights.eta0 = eta0;
  return sc;
}

std::string seed_tag(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

void warn_undefined(const char* what, const EvalResult& r) {
  if (!r.r_squared_defined()) {
    std::cerr << "warning: " << what
              << " R^2 is undefined (labels are constant or the split is empty)\n";
  }
}

}  // namespace

GenDataResult cmd_gen_data(const RunConfig& config) {
  if (config.count < 1) throw std::invalid_argument("gen-data: count must be >= 1");
  if (config.side < 8) throw std::invalid_argument("gen-data: side must be >= 8");
  begin_run(config);
  const auto records = synth_vehicle_dataset(config.count, config.seed, config.side);
  save_dataset(config.out, records);
  GenDataResult result;
  result.count = records.size();
  result.label_min = std::numeric_limits<double>::infinity();
  result.label_max = -std::numeric_limits<double>::infinity();
  for (const auto& r : records) {
    result.label_min = std::min(result.label_min, r.drag_label);
    result.label_max = std::max(result.label_max, r.drag_label);
  }
  finish_run(config, {{"records", result.count},
                      {"image_shape", {3, config.side, config.side}},
                      {"label_min", result.label_min},
                      {"label_max", result.label_max},
                      {"outputs", {"labels.csv", "images/"}}});
  return result;
}

TrainResult cmd_train(const RunConfig& config) {
  begin_run(config);
  const auto records = require_dataset(config);
  const DatasetSplit split = split_by_id_hash(records);
  if (split.train.empty()) throw std::invalid_argument("train: the training split is empty");

  TrainOptions options;
  options.lambda = config.lambda;
  options.out_channels = config.channels;
  options.feature_seed = config.feature_seed;
  options.augment = config.augment;
  options.augment_seed = config.seed;
  TrainDiagnostics diag;
  SurrogateModel model = train_random_feature_model(split.train, options, &diag);

  const EvalResult train = evaluate_predictions(diag.fitted, diag.labels);
  const EvalResult test = split.test.empty()
                              ? EvalResult{std::numeric_limits<double>::quiet_NaN(),
                                           std::numeric_limits<double>::quiet_NaN()}
                              : evaluate(model, split.test);
  warn_undefined("train", train);
  warn_undefined("test", test);

  save_model(config.out / "model.json", model);
  {
    CsvWriter csv(config.out / "metrics.csv");
    csv.header({"train_r2", "train_mse", "test_r2", "test_mse"});
    csv.row(train.r_squared, train.mse, test.r_squared, test.mse);
  }
  finish_run(config, {{"train_records", split.train.size()},
                      {"train_rows", diag.rows()},
                      {"test_records", split.test.size()},
                      {"feature_dim", model.feature_dim()},
                      {"outputs", {"model.json", "metrics.csv"}}});
  return TrainResult{std::move(model), train, test, split.train.size(), diag.rows(),
                     split.test.size()};
}

EvalResult cmd_eval(const RunConfig& config) {
  begin_run(config);
  const SurrogateModel model = require_model(config, true);
  const auto records = select_split(require_dataset(config), config.split);
  if (records.empty()) throw std::invalid_argument("eval: split '" + config.split + "' is empty");
  std::vector<double> predictions;
  std::vector<double> labels;
  {
    CsvWriter csv(config.out / "predictions.csv");
    csv.header({"id", "label", "prediction"});
    for (const auto& r : records) {
      predictions.push_back(model.predict_drag(r.image));
      labels.push_back(r.drag_label);
      csv.row(r.id, r.drag_label, predictions.back());
    }
  }
  const EvalResult result = evaluate_predictions(predictions, labels);
  warn_undefined("eval", result);
  {
    CsvWriter csv(config.out / "eval.csv");
    csv.header({"split", "n", "r2", "mse"});
    csv.row(config.split, records.size(), result.r_squared, result.mse);
  }
  finish_run(config, {{"records", records.size()}, {"outputs", {"eval.csv", "predictions.csv"}}});
  return result;
}

SampleResult cmd_sample(const RunConfig& config) {
  if (config.pairs < 1) throw std::invalid_argument("sample: pairs must be >= 1");
  begin_run(config);
  const SurrogateModel model = require_model(config, true);
  const auto records = optional_dataset(config);
  const MixtureDenoiser denoiser = resolve_denoiser(config, records);
  const NoiseSchedule schedule = config.make_schedule();

  // With a reference the runs start from x_T = x_0 + σ_T ε, else from pure noise.
  std::optional<ImageTensor> reference;
  if (!config.reference.empty() || !config.reference_id.empty()) {
    reference = resolve_reference(config, records);
    require_same_shape(*reference, ImageTensor(denoiser.shape()), "sample reference");
  }

  std::vector<SamplerJob> jobs;
  for (int k = 0; k < config.pairs; ++k) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
    const ImageTensor init = reference ? img2img_init(*reference, schedule.sigma_max(), seed)
                                       : noise_init(denoiser.shape(), schedule.sigma_max(), seed);
    jobs.push_back({sampler_config(config, schedule, seed, 0.0), init});
    jobs.push_back({sampler_config(config, schedule, seed, config.eta0), init});
  }
  const auto runs = run_sampler_batch(denoiser, &model, jobs, config.workers);

  SampleResult result;
  const fs::path run_dir = config.out / "runs";
  fs::create_directories(run_dir);
  std::vector<std::vector<ImageTensor>> grid;
  CsvWriter summary(config.out / "summary.csv");
  summary.header({"seed", "baseline_final_drag", "guided_final_drag", "reduction"});
  for (int k = 0; k < config.pairs; ++k) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
    const Trajectory& base = runs[2 * static_cast<std::size_t>(k)];
    const Trajectory& guided = runs[2 * static_cast<std::size_t>(k) + 1];
    const std::string tag = seed_tag(seed);
    write_trajectory_csv(run_dir / (tag + "_baseline.csv"), base);
    write_trajectory_csv(run_dir / (tag + "_guided.csv"), guided);
    write_png(run_dir / (tag + "_baseline.png"), base.final_state);
    write_png(run_dir / (tag + "_guided.png"), guided.final_state);
    SamplePair pair{seed, model.predict_drag(base.final_state),
                    model.predict_drag(guided.final_state)};
    summary.row(seed, pair.baseline_drag, pair.guided_drag, pair.baseline_drag - pair.guided_drag);
    result.pairs.push_back(pair);
    grid.push_back({base.final_state, guided.final_state});
  }
  write_png(config.out / "grid.png", make_grid(grid));
  finish_run(config, {{"pairs", config.pairs},
                      {"grid_layout", "rows are seeds; columns are baseline, guided"},
                      {"outputs", {"summary.csv", "grid.png", "runs/"}}});
  return result;
}

RedesignResult cmd_redesign(const RunConfig& config) {
  if (config.seeds < 1) throw std::invalid_argument("redesign: seeds must be >= 1");
  if (config.sigma_T.empty()) throw std::invalid_argument("redesign: empty sigma_T list");
  begin_run(config);
  const SurrogateModel model = require_model(config, true);
  const auto records = optional_dataset(config);
  const MixtureDenoiser denoiser = resolve_denoiser(config, records);
  const ImageTensor reference = resolve_reference(config, records);
  require_same_shape(reference, ImageTensor(denoiser.shape()), "redesign reference");
  const double reference_drag = model.predict_drag(reference);

  struct Slot {
    double sigma_T;
    std::uint64_t seed;
    std::optional<std::size_t> job;
  };
  std::vector<Slot> slots;
  std::vector<SamplerJob> jobs;
  for (double sigma_T : config.sigma_T) {
    for (int k = 0; k < config.seeds; ++k) {
      const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(k);
      Slot slot{sigma_T, seed, std::nullopt};
      if (sigma_T > 0.0) {
        const double lo = config.sigma_min < sigma_T ? config.sigma_min : 0.0;
        NoiseSchedule schedule = make_schedule(config.schedule, config.steps, lo, sigma_T);
        slot.job = jobs.size();
        jobs.push_back({sampler_config(config, std::move(schedule), seed, config.eta0),
                        img2img_init(reference, sigma_T, seed)});
      }
      slots.push_back(slot);
    }
  }
  const auto runs = run_sampler_batch(denoiser, &model, jobs, config.workers);

  RedesignResult result;
  const fs::path run_dir = config.out / "runs";
  fs::create_directories(run_dir);
  CsvWriter csv(config.out / "redesign.csv");
  csv.header({"sigma_T", "seed", "reference_drag", "initial_drag", "first_step_drag",
              "final_drag", "pixel_distance"});
  std::vector<std::vector<ImageTensor>> grid;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Slot& slot = slots[i];
    RedesignRun run{slot.sigma_T, slot.seed, reference_drag, reference_drag, reference_drag,
                    0.0};
    ImageTensor final_state = reference;
    const std::string tag = "sigma_" + format_real(slot.sigma_T) + "_" + seed_tag(slot.seed);
    if (slot.job) {
      const Trajectory& traj = runs[*slot.job];
      final_state = traj.final_state;
      run.first_step_drag = traj.drag_track.front().second;
      write_trajectory_csv(run_dir / (tag + ".csv"), traj);
    } else {
      // σ_T = 0 takes no steps: the output is the reference itself.
      CsvWriter zero(run_dir / (tag + ".csv"));
      zero.header({"t", "sigma_t", "phi_drag"});
      zero.row(config.steps, 0.0, reference_drag);
    }
    run.final_drag = model.predict_drag(final_state);
    run.pixel_distance = mean_abs_difference(final_state, reference);
    write_png(run_dir / (tag + ".png"), final_state);
    csv.row(run.sigma_T, run.seed, run.reference_drag, reference_drag, run.first_step_drag,
            run.final_drag, run.pixel_distance);
    if (i % static_cast<std::size_t>(config.seeds) == 0) grid.push_back({reference});
    grid.back().push_back(final_state);
    result.runs.push_back(run);
  }
  write_png(config.out / "grid.png", make_grid(grid));
  finish_run(config,
             {{"reference_drag", reference_drag},
              {"note", "initial_drag is the predicted drag of the reference for every run"},
              {"grid_layout", "rows are sigma_T values; first column is the reference"},
              {"outputs", {"redesign.csv", "grid.png", "runs/"}}});
  return result;
}

RobustnessResult cmd_robustness(const RunConfig& config) {
  if (config.noise_levels.empty()) throw std::invalid_argument("robustness: no noise levels");
  begin_run(config);
  const SurrogateModel model = require_model(config, true);
  const auto all = require_dataset(config);
  const auto records = select_split(all, config.split);
  if (records.empty()) {
    throw std::invalid_argument("robustness: split '" + config.split + "' is empty");
  }
  const MixtureDenoiser denoiser = [&] {
    if (!config.mixture.empty()) return load_mixture(config.mixture);
    std::vector<ImageTensor> images;
    std::vector<Condition> labels;
    for (const auto& r : records) {
      images.push_back(r.image);
      labels.push_back(r.condition);
    }
    return make_empirical_denoiser(images, config.denoiser_std, labels);
  }();

  RobustnessResult result;
  result.single_id = config.reference_id.empty() ? records.front().id : config.reference_id;
  const DatasetRecord& single = find_record(records, result.single_id);

  // One noise draw per record, shared across levels.
  const RandomStream root = RandomStream::from_seed(config.seed).derive("robustness");
  auto denoise = [&](const DatasetRecord& r, double sigma) {
    if (sigma == 0.0) return r.image;
    ImageTensor eps(r.image.shape());
    root.derive(stable_id_hash(r.id)).fill_normal(eps.data());
    const ImageTensor noisy = add_scaled(r.image, sigma, eps);
    return denoised_estimate(noisy, sigma, denoiser.predict(noisy, sigma, r.condition));
  };

  std::vector<double> labels;
  for (const auto& r : records) labels.push_back(r.drag_label);
  {
    std::vector<double> clean;
    for (const auto& r : records) clean.push_back(model.predict_drag(r.image));
    result.clean_mse = evaluate_predictions(clean, labels).mse;
  }

  CsvWriter csv(config.out / "robustness.csv");
  csv.header({"sigma", "mse", "n"});
  CsvWriter single_csv(config.out / "single_image.csv");
  single_csv.header({"sigma", "id", "label", "prediction", "abs_error"});
  for (double sigma : config.noise_levels) {
    std::vector<double> predictions;
    for (const auto& r : records) predictions.push_back(model.predict_drag(denoise(r, sigma)));
    const double mse = evaluate_predictions(predictions, labels).mse;
    result.curve.push_back({sigma, mse});
    csv.row(sigma, mse, records.size());
    const double p = model.predict_drag(denoise(single, sigma));
    result.single_predictions.push_back(p);
    single_csv.row(sigma, single.id, single.drag_label, p, std::abs(p - single.drag_label));
  }
  finish_run(config, {{"records", records.size()},
                      {"clean_mse", result.clean_mse},
                      {"outputs", {"robustness.csv", "single_image.csv"}}});
  return result;
}

namespace {

/// φ(x) = Σ c_i tanh(x_i − m_i): smooth with a bounded gradient.
class TanhObjective final : public GuidanceObjective {
 public:
  TanhObjective(ImageTensor coeff, ImageTensor offset)
      : coeff_(std::move(coeff)), offset_(std::move(offset)) {}

  [[nodiscard]] double value(const ImageTensor& x) const override {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += coeff_[i] * std::tanh(x[i] - offset_[i]);
    return s;
  }
  [[nodiscard]] std::pair<double, ImageTensor> value_and_gradient(
      const ImageTensor& x) const override {
    ImageTensor g(x.shape());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double th = std::tanh(x[i] - offset_[i]);
      s += coeff_[i] * th;
      g[i] = coeff_[i] * (1.0 - th * th);
    }
    return {s, std::move(g)};
  }

 private:
  ImageTensor coeff_;
  ImageTensor offset_;
};

double relative_deviation(const ImageTensor& a, const ImageTensor& b) {
  const double scale = std::sqrt(std::max(squared_norm(a), squared_norm(b)));
  const double diff = std::sqrt(squared_distance(a, b));
  return scale > 0.0 ? diff / scale : diff;
}

}  // namespace

EquivalenceResult cmd_check_equivalence(const RunConfig& config) {
  if (config.trials < 1) throw std::invalid_argument("check-equivalence: trials must be >= 1");
  begin_run(config);
  const RandomStream root = RandomStream::from_seed(config.seed).derive("equivalence");
  EquivalenceResult result;
  result.trials = config.trials;

  CsvWriter csv(config.out / "equivalence.csv");
  csv.header({"trial", "t", "sigma_t", "alpha_t", "gamma_t", "step_deviation",
              "trajectory_deviation"});
  for (int trial = 0; trial < config.trials; ++trial) {
    const RandomStream rs = root.derive(static_cast<std::uint64_t>(trial));
    const int channels = rs.uniform(0) < 0.5 ? 1 : 3;
    const int side = 2 + static_cast<int>(rs.uniform(1) * 5.0);
    const Shape shape{channels, side, side};
    const int n_comp = 1 + static_cast<int>(rs.uniform(2) * 4.0);
    std::vector<MixtureComponent> comps;
    for (int i = 0; i < n_comp; ++i) {
      const RandomStream cs = rs.derive("component").derive(static_cast<std::uint64_t>(i));
      ImageTensor mean(shape);
      cs.fill_normal(mean.data());
      const RandomStream params = cs.derive("params");
      comps.push_back({std::move(mean), params.uniform(0, 0.0, 0.5), params.uniform(1, 0.1, 1.0),
                       std::nullopt});
    }
    const MixtureDenoiser denoiser(std::move(comps));

    ImageTensor coeff(shape), offset(shape);
    rs.derive("coeff").fill_normal(coeff.data());
    for (double& c : coeff.data()) c *= 1e-3;
    rs.derive("offset").fill_normal(offset.data());
    const TanhObjective objective(std::move(coeff), std::move(offset));

    const ScheduleKind kind = rs.uniform(3) < 0.5 ? ScheduleKind::log_linear : ScheduleKind::linear;
    const double sigma_max = rs.uniform(4, 0.5, 20.0);
    const double sigma_min = rs.uniform(5) < 0.5 ? 0.0 : rs.uniform(6, 0.001, 0.1) * sigma_max;
    NoiseSchedule schedule = make_schedule(kind, config.steps, sigma_min, sigma_max);
    GuidanceWeights weights = config.guidance();
    // Cycle through no guidance, unit guidance, the configured η₀ and a random draw.
    const double eta_choices[] = {0.0, 1.0, config.eta0, config.eta0 * rs.uniform(7, 0.0, 2.0)};
    weights.eta0 = eta_choices[trial % 4];
    const ImageTensor init = noise_init(shape, sigma_max, rs.key());

    SamplerConfig sc{schedule, weights, SamplerKind::ddim, rs.key(), true, std::nullopt};
    const Trajectory guided = run_sampler(denoiser, &objective, sc, init);
    sc.kind = SamplerKind::ddim_pgd_form;
    const Trajectory pgd = run_sampler(denoiser, &objective, sc, init);

    // states[k] holds x_{T−k}.
    for (int t = schedule.steps(); t >= 1; --t) {
      const std::size_t k = static_cast<std::size_t>(schedule.steps() - t);
      const ImageTensor& x_t = guided.states[k].second;
      const double sigma_t = schedule.sigma(t);
      const NoisePrediction eps = denoiser.predict(x_t, sigma_t);
      const ImageTensor grad = objective.value_and_gradient(denoised_estimate(x_t, sigma_t, eps)).second;
      const double step_dev = relative_deviation(guided_step(x_t, t, schedule, eps, grad, weights),
                                                 pgd_step(x_t, t, schedule, eps, grad, weights));
      const double traj_dev = relative_deviation(guided.states[k + 1].second, pgd.states[k + 1].second);
      result.max_step_deviation = std::max(result.max_step_deviation, step_dev);
      result.max_trajectory_deviation = std::max(result.max_trajectory_deviation, traj_dev);
      csv.row(trial, t, sigma_t, alpha(schedule, t), gamma_t(weights, sigma_t), step_dev,
              traj_dev);
    }
  }
  result.passed = result.max_step_deviation <= config.step_tolerance &&
                  result.max_trajectory_deviation <= config.trajectory_tolerance;
  {
    CsvWriter summary(config.out / "equivalence_summary.csv");
    summary.header({"trials", "max_step_deviation", "max_trajectory_deviation", "step_tolerance",
                    "trajectory_tolerance", "passed"});
    summary.row(result.trials, result.max_step_deviation, result.max_trajectory_deviation,
                config.step_tolerance, config.trajectory_tolerance, result.passed ? 1 : 0);
  }
  finish_run(config, {{"passed", result.passed},
                      {"outputs", {"equivalence.csv", "equivalence_summary.csv"}}});
  return result;
}

DescentResult cmd_naive_descent(const RunConfig& config) {
  if (config.frame_every < 1) throw std::invalid_argument("naive-descent: frame_every must be >= 1");
  begin_run(config);
  const SurrogateModel model = require_model(config, true);
  const auto records = optional_dataset(config);
  const ImageTensor start = resolve_reference(config, records);
  const Trajectory traj =
      naive_pixel_descent(model, start, config.descent_steps, config.learning_rate);

  std::vector<ImageTensor> training;
  if (!records.empty()) {
    DatasetSplit s = split_by_id_hash(records);
    for (auto& r : s.train) {
      if (r.image.shape() == start.shape()) training.push_back(std::move(r.image));
    }
  }
  auto nearest = [&](const ImageTensor& x) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (const auto& im : training) {
      const double d = std::sqrt(squared_distance(x, im));
      if (!(d >= best)) best = d;
    }
    return best;
  };

  DescentResult result;
  const fs::path frame_dir = config.out / "frames";
  fs::create_directories(frame_dir);
  CsvWriter csv(config.out / "descent.csv");
  csv.header({"step", "phi_drag", "nearest_training_distance"});
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const ImageTensor& x = traj.states[k].second;
    const double phi = traj.drag_track[k].second;
    const double dist = nearest(x);
    result.phi.push_back(phi);
    result.nearest_distance.push_back(dist);
    csv.row(k, phi, dist);
    if (k % static_cast<std::size_t>(config.frame_every) == 0 || k + 1 == traj.states.size()) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%05zu.png", k);
      write_png(frame_dir / name, x);
    }
  }
  finish_run(config, {{"steps", config.descent_steps},
                      {"training_images", training.size()},
                      {"outputs", {"descent.csv", "frames/"}}});
  return result;
}

int run_command(const RunConfig& config) {
  const std::string& c = config.command;
  if (c == "gen-data") {
    const auto r = cmd_gen_data(config);
    std::cout << "wrote " << r.count << " records to " << config.out.string() << " (cd in ["
              << format_real(r.label_min) << ", " << format_real(r.label_max) << "])\n";
  } else if (c == "train") {
    const auto r = cmd_train(config);
    std::cout << "train rows " << r.train_rows << ", train R^2 " << format_real(r.train.r_squared)
              << ", test R^2 " << format_real(r.test.r_squared) << ", test MSE "
              << format_real(r.test.mse) << '\n';
  } else if (c == "eval") {
    const auto r = cmd_eval(config);
    std::cout << "R^2 " << format_real(r.r_squared) << ", MSE " << format_real(r.mse) << '\n';
  } else if (c == "sample") {
    const auto r = cmd_sample(config);
    int lower = 0;
    for (const auto& p : r.pairs) lower += p.guided_drag < p.baseline_drag;
    std::cout << "guided drag lower in " << lower << "/" << r.pairs.size() << " pairs\n";
  } else if (c == "redesign") {
    const auto r = cmd_redesign(config);
    std::cout << "wrote " << r.runs.size() << " redesigns\n";
  } else if (c == "robustness") {
    const auto r = cmd_robustness(config);
    for (const auto& p : r.curve) {
      std::cout << "sigma " << format_real(p.sigma) << " mse " << format_real(p.mse) << '\n';
    }
  } else if (c == "check-equivalence") {
    const auto r = cmd_check_equivalence(config);
    std::cout << "max step deviation " << format_real(r.max_step_deviation)
              << ", max trajectory deviation " << format_real(r.max_trajectory_deviation) << " -> "
              << (r.passed ? "ok" : "FAILED") << '\n';
    return r.passed ? 0 : 1;
  } else if (c == "naive-descent") {
    const auto r = cmd_naive_descent(config);
    std::cout << "phi " << format_real(r.phi.front()) << " -> " << format_real(r.phi.back())
              << '\n';
  } else {
    throw std::invalid_argument("unknown command '" + c + "'");
  }
  return 0;
}

}  // namespace dragguide
