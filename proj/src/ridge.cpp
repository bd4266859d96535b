#include "dragguide/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dragguide {

std::vector<double> FeatureNorm::apply(std::span<const double> features) const {
  if (features.size() != mean.size()) {
    throw std::invalid_argument("feature length " + std::to_string(features.size()) +
                                " does not match model dimension " +
                                std::to_string(mean.size()));
  }
  std::vector<double> out(features.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = std[k] > 0.0 ? (features[k] - mean[k]) / std[k] : 0.0;
  }
  return out;
}

Eigen::VectorXd solve_ridge(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() == 0 || x.cols() == 0) throw std::invalid_argument("ridge: empty design matrix");
  if (x.rows() != y.size()) throw std::invalid_argument("ridge: row count differs from labels");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("ridge: lambda must be finite and >= 0");
  }
  if (lambda == 0.0) return x.completeOrthogonalDecomposition().solve(y);

  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n >= d) {
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    gram.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(gram.selfadjointView<Eigen::Lower>());
    return llt.solve(x.transpose() * y);
  }
  // Wide systems: w = Xᵀ(XXᵀ + λI)⁻¹y.
  Eigen::MatrixXd kernel = Eigen::MatrixXd::Zero(n, n);
  kernel.selfadjointView<Eigen::Lower>().rankUpdate(x);
  kernel.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(kernel.selfadjointView<Eigen::Lower>());
  return x.transpose() * llt.solve(y);
}

RidgeFit fit_ridge(Eigen::MatrixXd features, std::span<const double> labels, double lambda,
                   std::vector<double>* fitted) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (n == 0) throw std::invalid_argument("fit_ridge: no samples");
  if (d == 0) throw std::invalid_argument("fit_ridge: no features");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw std::invalid_argument("fit_ridge: label count differs from row count");
  }
  if (!features.allFinite()) throw std::invalid_argument("fit_ridge: non-finite feature");

  RidgeFit fit;
  fit.lambda = lambda;
  fit.norm.mean.resize(static_cast<std::size_t>(d));
  fit.norm.std.resize(static_cast<std::size_t>(d));
  std::vector<double> spread(static_cast<std::size_t>(d));
  std::vector<double> live;
  for (Eigen::Index j = 0; j < d; ++j) {
    auto col = features.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    fit.norm.mean[j] = mean;
    // Columns whose spread is at rounding level are treated as constant.
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    spread[j] = constant ? 0.0 : sd;
    if (!constant) live.push_back(sd);
  }
  // Nearly constant columns are divided by a floor instead of their own
  // spread, so an unseen change in them is not blown up by orders of magnitude.
  double floor = 0.0;
  if (!live.empty()) {
    auto mid = live.begin() + static_cast<std::ptrdiff_t>(live.size() / 2);
    std::nth_element(live.begin(), mid, live.end());
    floor = kStdFloorRatio * *mid;
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    auto col = features.col(j);
    const double sd = spread[static_cast<std::size_t>(j)];
    if (sd == 0.0) {
      col.setZero();
      fit.norm.std[j] = 0.0;
    } else {
      fit.norm.std[j] = std::max(sd, floor);
      col /= fit.norm.std[j];
    }
  }

  Eigen::VectorXd y(n);
  double label_mean = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(labels[i])) throw std::invalid_argument("fit_ridge: non-finite label");
    y[i] = labels[i];
    label_mean += labels[i];
  }
  label_mean /= static_cast<double>(n);
  y.array() -= label_mean;

  const Eigen::VectorXd w = solve_ridge(features, y, lambda);
  fit.weights.assign(w.data(), w.data() + w.size());
  fit.bias = label_mean;
  if (fitted) {
    const Eigen::VectorXd pred = (features * w).array() + label_mean;
    fitted->assign(pred.data(), pred.data() + pred.size());
  }
  return fit;
}

double predict_linear(const RidgeFit& fit, std::span<const double> features) {
  const std::vector<double> z = fit.norm.apply(features);
  double s = fit.bias;
  for (std::size_t k = 0; k < z.size(); ++k) s += fit.weights[k] * z[k];
  return s;
}

}  // namespace dragguide
