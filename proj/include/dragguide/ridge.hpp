#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace dragguide {

/// Per-column statistics applied before the linear head.
struct FeatureNorm {
  std::vector<double> mean;
  std::vector<double> std;  // population std; 0 marks a constant column

  /// (f − mean)/std, with constant columns mapped to 0.
  [[nodiscard]] std::vector<double> apply(std::span<const double> features) const;
};

struct RidgeFit {
  std::vector<double> weights;  // in standardised feature units
  double bias = 0.0;            // the label mean
  double lambda = 0.0;
  FeatureNorm norm;
};

/// Solves (XᵀX + λI)w = Xᵀy as given (no centring or scaling).
/// λ = 0 returns the minimum-norm least-squares solution.
[[nodiscard]] Eigen::VectorXd solve_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          double lambda);

/// Spread floor for standardisation, as a fraction of the median column std.
inline constexpr double kStdFloorRatio = 0.05;

/// Standardises columns (mean 0, population std 1; constant columns → 0),
/// except that no column is divided by less than kStdFloorRatio times the
/// median column std. Centres labels, solves the ridge system and restores the label mean as
/// the bias. Rows of `features` are samples. `fitted`, when given, receives
/// the in-sample predictions.
[[nodiscard]] RidgeFit fit_ridge(Eigen::MatrixXd features, std::span<const double> labels,
                                 double lambda, std::vector<double>* fitted = nullptr);

/// w·f̃ + b for a raw feature vector.
[[nodiscard]] double predict_linear(const RidgeFit& fit, std::span<const double> features);

}  // namespace dragguide
