#include <algorithm>
#include <cmath>

#include "avd/slr.hpp"

namespace avd {

Problem::Problem(const Matrix& features, const LabelVector& labels, std::size_t num_classes)
    : features_(&features), labels_(&labels), num_classes_(num_classes) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw ShapeError("feature matrix has " + std::to_string(features.rows()) + " rows but there are " +
                     std::to_string(labels.size()) + " labels");
  if (num_classes_ == 0) {
    for (int y : labels) num_classes_ = std::max(num_classes_, static_cast<std::size_t>(std::max(y, 0)) + 1);
  }
  check_labels(labels, num_classes_);
}

namespace {

// Residuals p_i - e_{y_i} and the mean negative log-likelihood in one pass.
double residuals_and_loss(const WeightMatrix& w, const Problem& problem, Matrix* residuals) {
  if (w.num_classes() != problem.num_classes() || w.num_features() != problem.num_features())
    throw ShapeError("weights are " + std::to_string(w.num_classes()) + "x" + std::to_string(w.num_features()) +
                     ", problem needs " + std::to_string(problem.num_classes()) + "x" +
                     std::to_string(problem.num_features()));
  const Matrix z = logits(w, problem.features());
  const auto& y = problem.labels();
  if (residuals) residuals->resize(z.rows(), z.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const auto e = (z.row(i).array() - m).exp().eval();
    const double s = e.sum();
    const int yi = y[static_cast<std::size_t>(i)];
    total += m + std::log(s) - z(i, yi);
    if (residuals) {
      residuals->row(i) = e / s;
      (*residuals)(i, yi) -= 1.0;
    }
  }
  return problem.num_samples() == 0 ? 0.0 : total / static_cast<double>(problem.num_samples());
}

}  // namespace

Matrix gradient_from_residuals(const Matrix& residuals, const Matrix& features) {
  const double n = static_cast<double>(features.rows());
  return (residuals.transpose() * features) / n;
}

Matrix softmax_residuals(const WeightMatrix& w, const Problem& problem) {
  Matrix r;
  residuals_and_loss(w, problem, &r);
  return r;
}

LossGrad multinomial_loss_grad(const WeightMatrix& w, const Problem& problem) {
  LossGrad out;
  Matrix r;
  out.loss = residuals_and_loss(w, problem, &r);
  out.grad = gradient_from_residuals(r, problem.features());
  if (w.has_bias()) out.bias_grad = r.colwise().mean().transpose();
  return out;
}

double multinomial_loss(const WeightMatrix& w, const Problem& problem) {
  return residuals_and_loss(w, problem, nullptr);
}

double l1_objective(const WeightMatrix& w, const Problem& problem, double lambda) {
  return multinomial_loss(w, problem) + lambda * w.weights.cwiseAbs().sum();
}

Vector null_intercept(const Problem& problem) {
  Vector counts = Vector::Zero(static_cast<Eigen::Index>(problem.num_classes()));
  for (int y : problem.labels()) counts[y] += 1.0;
  const double n = std::max<double>(1.0, static_cast<double>(problem.num_samples()));
  // Absent classes get a large negative (finite) intercept.
  return (counts / n).unaryExpr([](double f) { return std::log(std::max(f, 1e-12)); });
}

double lambda_max(const Problem& problem, bool intercept) {
  if (problem.num_samples() == 0) throw InvalidArgument("lambda_max needs at least one sample");
  auto zero = WeightMatrix::zeros(problem.num_classes(), problem.num_features(), FeatureSpace::avd);
  if (intercept) zero.bias = null_intercept(problem);
  const Matrix g = gradient_from_residuals(softmax_residuals(zero, problem), problem.features());
  return g.size() == 0 ? 0.0 : g.cwiseAbs().maxCoeff();
}

double accuracy(const WeightMatrix& w, const Matrix& features, const LabelVector& labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size())
    throw ShapeError("feature rows and label count differ");
  if (labels.empty()) return 0.0;
  const auto pred = argmax_rows(logits(w, features));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Mask extract_support(const WeightMatrix& w, double tol) {
  if (tol < 0) throw InvalidArgument("support tolerance must be non-negative");
  return w.weights.cwiseAbs().array() > tol;
}

std::size_t count_nonzeros(const WeightMatrix& w, double tol) {
  return static_cast<std::size_t>(extract_support(w, tol).count());
}

Vector column_scales(const Matrix& features) {
  Vector scales(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const auto col = features.col(j).array();
    const double mean = col.mean();
    const double sd = std::sqrt((col - mean).square().mean());
    scales[j] = sd > 0.0 ? sd : 1.0;
  }
  return scales;
}

}  // namespace avd
