#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "avd/grounding.hpp"
#include "avd/types.hpp"

namespace avd {

/// Non-owning view of a labelled training set. Labels are checked against
/// the class count on construction; num_classes = 0 infers max(label) + 1.
class Problem {
 public:
  Problem(const Matrix& features, const LabelVector& labels, std::size_t num_classes = 0);
  // The view must not outlive its data.
  Problem(Matrix&&, const LabelVector&, std::size_t = 0) = delete;
  Problem(const Matrix&, LabelVector&&, std::size_t = 0) = delete;
  Problem(Matrix&&, LabelVector&&, std::size_t = 0) = delete;

  const Matrix& features() const { return *features_; }
  const LabelVector& labels() const { return *labels_; }
  std::size_t num_samples() const { return labels_->size(); }
  std::size_t num_features() const { return static_cast<std::size_t>(features_->cols()); }
  std::size_t num_classes() const { return num_classes_; }

 private:
  const Matrix* features_;
  const LabelVector* labels_;
  std::size_t num_classes_;
};

struct SolverConfig {
  /// SAGA epoch budget (one epoch = n sampled updates).
  std::size_t epochs = 50;
  /// SAGA stops once the relative change of the penalized objective over an epoch drops below this.
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  bool intercept = false;
  /// Iteration budget of the full-batch solvers (FISTA, L-BFGS).
  std::size_t max_iterations = 20000;
  /// Full-batch solvers stop once the max-abs (proximal) gradient drops below this.
  double gradient_tolerance = 1e-9;
};

struct FitResult {
  WeightMatrix weights;
  /// Penalized objective at `weights`.
  double objective = 0.0;
  /// Mean negative log-likelihood at `weights`.
  double loss = 0.0;
  /// Epochs for SAGA, iterations for the full-batch solvers.
  std::size_t iterations = 0;
  bool converged = false;
  /// Non-empty when the solver stopped on its budget.
  std::string warning;
};

/// Thrown when a stochastic fit produces a non-finite objective.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double step) : Error(what), step_(step) {}
  double step() const { return step_; }

 private:
  double step_;
};

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
  Vector bias_grad;
};

/// Mean negative log-likelihood of the softmax model and its gradient
/// (1/n) sum_i (p_i - e_{y_i}) h_i^T. Uses max-subtracted log-sum-exp.
LossGrad multinomial_loss_grad(const WeightMatrix& w, const Problem& problem);
double multinomial_loss(const WeightMatrix& w, const Problem& problem);

/// Per-sample residuals p_i - e_{y_i} (n x C).
Matrix softmax_residuals(const WeightMatrix& w, const Problem& problem);
/// (1/n) R^T H, the weight gradient rebuilt from a residual table.
Matrix gradient_from_residuals(const Matrix& residuals, const Matrix& features);

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// loss + lambda * ||W||_1 (the intercept is never penalized).
double l1_objective(const WeightMatrix& w, const Problem& problem, double lambda);

/// Intercept minimizing the loss at W = 0: log class frequencies.
Vector null_intercept(const Problem& problem);

/// Smallest lambda for which W = 0 solves the l1 problem: the max-abs entry
/// of the loss gradient at W = 0 (at the null intercept when `intercept`).
/// Returns 0 when the features carry no signal (degenerate).
double lambda_max(const Problem& problem, bool intercept = false);

/// Full-batch accelerated proximal gradient (FISTA with backtracking and
/// gradient-based restart) on loss + (ridge/2)||W||_F^2 + lambda ||W||_1.
/// Serves as the reference oracle for prox_saga_fit.
FitResult fista_fit(const Problem& problem, double lambda, const SolverConfig& config,
                    const WeightMatrix* warm_start = nullptr, double ridge = 0.0);

/// Proximal SAGA with a residual-vector gradient table.
///
/// Each step samples i uniformly (xoshiro256** seeded from config.seed),
/// recomputes r_i = p_i - e_{y_i}, moves W by
/// step * ((r_i - r_i_old) h_i^T + mean table gradient) and soft-thresholds
/// with step * lambda. The step is 1 / (3 L_max), L_max = max_i ||h_i||^2.
/// The table average is recomputed exactly every 10 epochs.
FitResult prox_saga_fit(const Problem& problem, double lambda, const SolverConfig& config,
                        const WeightMatrix* warm_start = nullptr);

/// SAGA step size used for `problem`.
double saga_step_size(const Problem& problem, bool intercept);

struct PathConfig {
  std::size_t grid_size = 100;
  /// lambda_last = min_ratio * lambda_first.
  double min_ratio = 0.1;
  bool warm_start = true;
};

/// Log-spaced, strictly decreasing grid from `first` to min_ratio * first.
/// Both endpoints are exact.
std::vector<double> lambda_grid(double first, const PathConfig& config);

struct PathEntry {
  double lambda = 0.0;
  WeightMatrix weights;
  std::size_t nonzeros = 0;
  double train_loss = 0.0;
  double objective = 0.0;
  double validation_accuracy = 0.0;
  std::size_t epochs = 0;
  bool converged = false;
};

struct RegPathResult {
  std::vector<PathEntry> entries;
  std::size_t selected = 0;

  const PathEntry& best() const { return entries.at(selected); }
};

/// Solves the l1 path with prox_saga_fit from lambda_max down to
/// min_ratio * lambda_max and selects the entry with the highest validation
/// accuracy (ties go to the larger lambda).
RegPathResult regularization_path(const Problem& train, const Problem& validation, const PathConfig& path_config,
                                  const SolverConfig& solver_config);

/// |entries| > tol.
Mask extract_support(const WeightMatrix& w, double tol = 1e-10);
std::size_t count_nonzeros(const WeightMatrix& w, double tol = 1e-10);

/// Minimizes the unpenalized loss over the entries in `mask` (others held at
/// exactly 0) with L-BFGS on the free coordinates. Starts from `init`
/// (restricted to the mask) when given, else from zero.
FitResult masked_refit(const Problem& problem, const Mask& mask, const SolverConfig& config,
                       const WeightMatrix* init = nullptr);

/// Default linear-probe grid: 100 log-spaced strengths in [0.5, 6], ascending.
std::vector<double> default_lp_grid();

/// Minimizes loss + (lambda/2)||W||_F^2 with L-BFGS.
FitResult l2_logistic_fit(const Problem& problem, double lambda, const SolverConfig& config,
                          const WeightMatrix* warm_start = nullptr);

struct GridEntry {
  double lambda = 0.0;
  WeightMatrix weights;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
  bool converged = false;
};

struct GridResult {
  std::vector<GridEntry> entries;  // in grid order
  std::size_t selected = 0;

  const GridEntry& best() const { return entries.at(selected); }
};

/// Fits l2_logistic_fit at every grid strength (warm-started from the
/// largest down) and selects by validation accuracy, ties to larger lambda.
GridResult l2_logistic_grid(const Problem& train, const Problem& validation, const std::vector<double>& grid,
                            const SolverConfig& config);

/// Fraction of rows whose argmax logit equals the label (ties to lowest index).
double accuracy(const WeightMatrix& w, const Matrix& features, const LabelVector& labels);

/// Result of minimize_lbfgs.
struct LbfgsResult {
  Vector x;
  double value = 0.0;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

using Objective = std::function<double(const Vector& x, Vector& grad)>;

/// Limited-memory BFGS (two-loop recursion, memory 10) with a backtracking
/// Armijo line search. Converged when ||grad||_inf <= gradient_tolerance.
LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, std::size_t max_iterations, double gradient_tolerance);

/// Column standard deviations (population) of `features`; zero columns map to 1.
Vector column_scales(const Matrix& features);

}  // namespace avd
