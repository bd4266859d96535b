#include "dragguide/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "dragguide/csv.hpp"
#include "dragguide/resize.hpp"

namespace dragguide {
namespace fs = std::filesystem;

const std::vector<double>& PrecomputedFeatureTable::at(const std::string& id) const {
  const auto it = rows.find(id);
  if (it == rows.end()) throw std::invalid_argument("feature table has no row for id '" + id + "'");
  return it->second;
}

PrecomputedFeatureTable load_feature_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature table '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"dim", "count"}) {
    throw std::runtime_error(path.string() + ": expected 'dim,count' header");
  }
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing dim,count row");
  const auto head = split_csv_line(line);
  if (head.size() != 2) throw std::runtime_error(path.string() + ": malformed dim,count row");
  PrecomputedFeatureTable table;
  table.dim = std::stoi(head[0]);
  const int count = std::stoi(head[1]);
  int row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != table.dim + 1) {
      throw std::runtime_error(path.string() + " row " + std::to_string(row) + ": expected " +
                               std::to_string(table.dim) + " features, got " +
                               std::to_string(static_cast<int>(fields.size()) - 1));
    }
    std::vector<double> f(static_cast<std::size_t>(table.dim));
    for (int k = 0; k < table.dim; ++k) f[k] = std::stod(fields[k + 1]);
    table.rows[fields[0]] = std::move(f);
  }
  if (static_cast<int>(table.rows.size()) != count) {
    throw std::runtime_error(path.string() + ": header declares " + std::to_string(count) +
                             " rows, found " + std::to_string(table.rows.size()));
  }
  return table;
}

void save_feature_table(const fs::path& path, const PrecomputedFeatureTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "dim,count\n" << table.dim << ',' << table.rows.size() << '\n';
  for (const auto& [id, f] : table.rows) {
    out << id;
    for (double v : f) out << ',' << format_real(v);
    out << '\n';
  }
}

SurrogateModel::SurrogateModel(RandomConvExtractor extractor, RidgeFit head)
    : extractor_(std::move(extractor)), dim_(extractor_->feature_dim()), head_(std::move(head)) {
  if (head_.weights.size() != static_cast<std::size_t>(dim_) ||
      head_.norm.mean.size() != head_.weights.size() ||
      head_.norm.std.size() != head_.weights.size()) {
    throw std::invalid_argument("SurrogateModel: head dimension does not match extractor (" +
                                std::to_string(dim_) + ")");
  }
}

SurrogateModel::SurrogateModel(int dim, RidgeFit head) : dim_(dim), head_(std::move(head)) {
  if (head_.weights.size() != static_cast<std::size_t>(dim_) ||
      head_.norm.mean.size() != head_.weights.size() ||
      head_.norm.std.size() != head_.weights.size()) {
    throw std::invalid_argument("SurrogateModel: head dimension does not match " +
                                std::to_string(dim_));
  }
}

const RandomConvExtractor& SurrogateModel::require_extractor() const {
  if (!extractor_) {
    throw std::logic_error(
        "surrogate model was fitted on precomputed features; it cannot read images or "
        "provide gradients");
  }
  return *extractor_;
}

double SurrogateModel::predict_features(std::span<const double> features) const {
  return predict_linear(head_, features);
}

std::vector<double> SurrogateModel::image_features(const ImageTensor& image) const {
  const auto& ex = require_extractor();
  const Shape in = ex.input_shape();
  if (image.channels() != in.channels) {
    throw std::invalid_argument("surrogate expects " + std::to_string(in.channels) +
                                "-channel images, got " + image.shape().str());
  }
  return ex.extract(resize_bilinear(image, in.height, in.width));
}

double SurrogateModel::predict_drag(const ImageTensor& image) const {
  return predict_features(image_features(image));
}

std::vector<double> SurrogateModel::feature_gradient() const {
  std::vector<double> g(head_.weights.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    g[k] = head_.norm.std[k] > 0.0 ? head_.weights[k] / head_.norm.std[k] : 0.0;
  }
  return g;
}

std::pair<double, ImageTensor> SurrogateModel::value_and_gradient(const ImageTensor& image) const {
  const auto& ex = require_extractor();
  const Shape in = ex.input_shape();
  if (image.channels() != in.channels) {
    throw std::invalid_argument("surrogate expects " + std::to_string(in.channels) +
                                "-channel images, got " + image.shape().str());
  }
  const BilinearResize resize(image.shape(), in.height, in.width);
  const FeatureTape tape = ex.forward(resize.apply(image));
  const double value = predict_features(tape.features);
  const std::vector<double> gf = feature_gradient();
  return {value, resize.adjoint(ex.backward(tape, gf))};
}

ImageTensor SurrogateModel::grad_drag(const ImageTensor& image) const {
  return value_and_gradient(image).second;
}

bool EvalResult::r_squared_defined() const { return !std::isnan(r_squared); }

EvalResult evaluate_predictions(std::span<const double> predictions,
                                std::span<const double> labels) {
  if (labels.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("evaluate: prediction count differs from label count");
  }
  const double n = static_cast<double>(labels.size());
  double mean = 0.0;
  for (double y : labels) mean += y;
  mean /= n;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ss_res += (labels[i] - predictions[i]) * (labels[i] - predictions[i]);
    ss_tot += (labels[i] - mean) * (labels[i] - mean);
  }
  EvalResult r;
  r.mse = ss_res / n;
  // The mean of equal labels can round away from them, so test equality directly.
  const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
  r.r_squared = *lo < *hi && ss_tot > 0.0 ? 1.0 - ss_res / ss_tot
                                          : std::numeric_limits<double>::quiet_NaN();
  return r;
}

EvalResult evaluate(const SurrogateModel& model, std::span<const DatasetRecord> dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<double> preds;
  std::vector<double> labels;
  for (const auto& rec : dataset) {
    preds.push_back(model.predict_drag(rec.image));
    labels.push_back(rec.drag_label);
  }
  return evaluate_predictions(preds, labels);
}

Eigen::MatrixXd feature_matrix(const RandomConvExtractor& extractor,
                               std::span<const DatasetRecord> records) {
  const Shape in = extractor.input_shape();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), extractor.feature_dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto f = extractor.extract(resize_bilinear(records[i].image, in.height, in.width));
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(
        f.data(), static_cast<Eigen::Index>(f.size()));
  }
  return x;
}

std::vector<DatasetRecord> augment_all(std::span<const DatasetRecord> records,
                                       std::uint64_t seed) {
  std::vector<DatasetRecord> out;
  out.reserve(records.size() * kAugmentCopies);
  for (const auto& rec : records) {
    auto copies = augment(rec, seed ^ stable_id_hash(rec.id));
    for (auto& c : copies) out.push_back(std::move(c));
  }
  return out;
}

SurrogateModel train_random_feature_model(std::span<const DatasetRecord> records,
                                          const TrainOptions& options,
                                          TrainDiagnostics* diagnostics) {
  if (records.empty()) throw std::invalid_argument("train: empty dataset");
  RandomConvExtractor extractor(options.feature_seed, options.out_channels);
  const std::size_t copies = options.augment ? kAugmentCopies : 1;
  const std::size_t n = records.size() * copies;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), extractor.feature_dim());
  std::vector<double> labels;
  labels.reserve(n);
  Eigen::Index row = 0;
  for (const auto& rec : records) {
    // Augmented copies are generated per record so only ten images are live at once.
    std::vector<DatasetRecord> expanded;
    if (options.augment) {
      expanded = augment(rec, options.augment_seed ^ stable_id_hash(rec.id));
    } else {
      expanded.push_back(rec);
    }
    const Eigen::MatrixXd block = feature_matrix(extractor, expanded);
    x.middleRows(row, block.rows()) = block;
    row += block.rows();
    for (const auto& e : expanded) labels.push_back(e.drag_label);
  }
  std::vector<double> fitted;
  RidgeFit fit = fit_ridge(std::move(x), labels, options.lambda, diagnostics ? &fitted : nullptr);
  if (diagnostics) {
    diagnostics->labels = std::move(labels);
    diagnostics->fitted = std::move(fitted);
  }
  return SurrogateModel(std::move(extractor), std::move(fit));
}

SurrogateModel fit_from_precomputed(const PrecomputedFeatureTable& table,
                                    const std::vector<std::pair<std::string, double>>& labels,
                                    double lambda) {
  if (labels.empty()) throw std::invalid_argument("fit_from_precomputed: no labels");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(labels.size()), table.dim);
  std::vector<double> y;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& f = table.at(labels[i].first);
    if (static_cast<int>(f.size()) != table.dim) {
      throw std::invalid_argument("feature row '" + labels[i].first + "' has dimension " +
                                  std::to_string(f.size()) + ", table declares " +
                                  std::to_string(table.dim));
    }
    x.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(f.data(), table.dim);
    y.push_back(labels[i].second);
  }
  return SurrogateModel(table.dim, fit_ridge(std::move(x), y, lambda));
}

namespace {
constexpr const char* kModelFormat = "dragguide-surrogate";
constexpr int kModelVersion = 1;
}  // namespace

void save_model(const fs::path& path, const SurrogateModel& model) {
  nlohmann::json doc;
  doc["format"] = kModelFormat;
  doc["version"] = kModelVersion;
  doc["precision"] = 17;
  if (const auto& ex = model.extractor()) {
    const auto& g = ex->geometry();
    doc["extractor"] = {{"type", "random_conv"},   {"seed", ex->seed()},
                        {"out_channels", ex->out_channels()},
                        {"in_channels", g.in_channels}, {"input_side", g.input_side},
                        {"kernel", g.kernel},        {"pool", g.pool},
                        {"bias", g.bias}};
  } else {
    doc["extractor"] = {{"type", "precomputed"}, {"dim", model.feature_dim()}};
  }
  const auto& head = model.head();
  doc["lambda"] = head.lambda;
  doc["bias"] = head.bias;
  doc["weights"] = head.weights;
  doc["feature_mean"] = head.norm.mean;
  doc["feature_std"] = head.norm.std;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file '" + path.string() + "'");
  out << doc.dump(1) << '\n';
}

SurrogateModel load_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    if (doc.at("format") != kModelFormat) throw std::runtime_error("unknown format");
    if (doc.at("version").get<int>() != kModelVersion) {
      throw std::runtime_error("unsupported version " + doc.at("version").dump());
    }
    RidgeFit head;
    head.lambda = doc.at("lambda").get<double>();
    head.bias = doc.at("bias").get<double>();
    head.weights = doc.at("weights").get<std::vector<double>>();
    head.norm.mean = doc.at("feature_mean").get<std::vector<double>>();
    head.norm.std = doc.at("feature_std").get<std::vector<double>>();
    const auto& ex = doc.at("extractor");
    if (ex.at("type") == "random_conv") {
      ConvGeometry g;
      g.in_channels = ex.at("in_channels").get<int>();
      g.input_side = ex.at("input_side").get<int>();
      g.kernel = ex.at("kernel").get<int>();
      g.pool = ex.at("pool").get<int>();
      g.bias = ex.at("bias").get<double>();
      return SurrogateModel(RandomConvExtractor(ex.at("seed").get<std::uint64_t>(),
                                                ex.at("out_channels").get<int>(), g),
                            std::move(head));
    }
    return SurrogateModel(ex.at("dim").get<int>(), std::move(head));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed model file '" + path.string() + "': " + e.what());
  }
}

}  // namespace dragguide
