#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dragguide/dataset.hpp"
#include "dragguide/features.hpp"
#include "dragguide/ridge.hpp"
#include "dragguide/sampler.hpp"

namespace dragguide {

/// Externally computed embeddings keyed by record id.
struct PrecomputedFeatureTable {
  int dim = 0;
  std::map<std::string, std::vector<double>> rows;

  [[nodiscard]] const std::vector<double>& at(const std::string& id) const;
};

/// CSV: "dim,count" header, one line with both values, then rows "id,f1,...,fd".
[[nodiscard]] PrecomputedFeatureTable load_feature_table(const std::filesystem::path& path);
void save_feature_table(const std::filesystem::path& path, const PrecomputedFeatureTable& table);

/// Drag surrogate φ(x) = w·f̃(x) + b over a frozen feature extractor.
///
/// Image inputs of any size are resized bilinearly to the extractor's
/// 224×224 input first. Models fitted on precomputed embeddings predict from
/// feature vectors only and cannot guide a sampler.
class SurrogateModel final : public GuidanceObjective {
 public:
  SurrogateModel(RandomConvExtractor extractor, RidgeFit head);
  /// Head over externally supplied features of dimension `dim`.
  SurrogateModel(int dim, RidgeFit head);

  [[nodiscard]] bool guidable() const { return extractor_.has_value(); }
  [[nodiscard]] const std::optional<RandomConvExtractor>& extractor() const { return extractor_; }
  [[nodiscard]] const RidgeFit& head() const { return head_; }
  [[nodiscard]] int feature_dim() const { return dim_; }

  [[nodiscard]] double predict_features(std::span<const double> features) const;
  [[nodiscard]] double predict_drag(const ImageTensor& image) const;
  [[nodiscard]] ImageTensor grad_drag(const ImageTensor& image) const;

  [[nodiscard]] double value(const ImageTensor& x) const override { return predict_drag(x); }
  [[nodiscard]] std::pair<double, ImageTensor> value_and_gradient(
      const ImageTensor& x) const override;

  /// Raw features of an image after the 224 resize.
  [[nodiscard]] std::vector<double> image_features(const ImageTensor& image) const;

 private:
  const RandomConvExtractor& require_extractor() const;
  [[nodiscard]] std::vector<double> feature_gradient() const;

  std::optional<RandomConvExtractor> extractor_;
  int dim_;
  RidgeFit head_;
};

[[nodiscard]] inline double predict_drag(const SurrogateModel& model, const ImageTensor& image) {
  return model.predict_drag(image);
}
[[nodiscard]] inline ImageTensor grad_drag(const SurrogateModel& model, const ImageTensor& image) {
  return model.grad_drag(image);
}

struct EvalResult {
  double r_squared = 0.0;  // NaN when every label is equal
  double mse = 0.0;
  [[nodiscard]] bool r_squared_defined() const;
};

/// R² = 1 − SS_res/SS_tot about the label mean, MSE = mean squared residual.
[[nodiscard]] EvalResult evaluate_predictions(std::span<const double> predictions,
                                              std::span<const double> labels);
[[nodiscard]] EvalResult evaluate(const SurrogateModel& model,
                                  std::span<const DatasetRecord> dataset);

/// Extracts features of every record (resized to 224) into an n×d matrix.
[[nodiscard]] Eigen::MatrixXd feature_matrix(const RandomConvExtractor& extractor,
                                             std::span<const DatasetRecord> records);

struct TrainOptions {
  double lambda = 10.0;
  int out_channels = 160;
  std::uint64_t feature_seed = 0;
  bool augment = true;
  std::uint64_t augment_seed = 0;
};

/// In-sample view of a fit: one entry per design-matrix row.
struct TrainDiagnostics {
  std::vector<double> labels;
  std::vector<double> fitted;
  [[nodiscard]] std::size_t rows() const { return labels.size(); }
};

/// Random-feature ridge fit on `records`, each optionally replaced by its
/// ten augmented copies.
[[nodiscard]] SurrogateModel train_random_feature_model(std::span<const DatasetRecord> records,
                                                        const TrainOptions& options,
                                                        TrainDiagnostics* diagnostics = nullptr);

/// Expands each record into its augmented copies, seeded per record id.
[[nodiscard]] std::vector<DatasetRecord> augment_all(std::span<const DatasetRecord> records,
                                                     std::uint64_t seed);

[[nodiscard]] SurrogateModel fit_from_precomputed(
    const PrecomputedFeatureTable& table, const std::vector<std::pair<std::string, double>>& labels,
    double lambda);

void save_model(const std::filesystem::path& path, const SurrogateModel& model);
[[nodiscard]] SurrogateModel load_model(const std::filesystem::path& path);

}  // namespace dragguide
