#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "avd/slr.hpp"

namespace avd {

namespace {

std::string lbfgs_warning(const char* who, const LbfgsResult& r, double tolerance) {
  std::ostringstream msg;
  msg << who << " stopped after " << r.iterations << " iterations with gradient norm " << r.gradient_norm
      << " (tolerance " << tolerance << "), objective " << r.value;
  return msg.str();
}

}  // namespace

FitResult masked_refit(const Problem& problem, const Mask& mask, const SolverConfig& config, const WeightMatrix* init) {
  const auto c = static_cast<Eigen::Index>(problem.num_classes());
  const auto f = static_cast<Eigen::Index>(problem.num_features());
  if (mask.rows() != c || mask.cols() != f)
    throw ShapeError("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                     ", problem needs " + std::to_string(c) + "x" + std::to_string(f));
  if (mask.count() == 0) throw InvalidArgument("masked_refit needs a nonempty mask");

  std::vector<Eigen::Index> free;  // flat row-major indices of masked entries
  for (Eigen::Index k = 0; k < mask.size(); ++k)
    if (mask.data()[k]) free.push_back(k);
  const auto nfree = static_cast<Eigen::Index>(free.size());
  const Eigen::Index nbias = config.intercept ? c : 0;

  WeightMatrix w = WeightMatrix::zeros(problem.num_classes(), problem.num_features(),
                                       init ? init->space : FeatureSpace::avd, config.intercept);
  w.mask = mask;
  Vector x0 = Vector::Zero(nfree + nbias);
  if (init) {
    if (init->num_classes() != problem.num_classes() || init->num_features() != problem.num_features())
      throw ShapeError("initial weights do not match the problem shape");
    for (Eigen::Index k = 0; k < nfree; ++k) x0[k] = init->weights.data()[free[static_cast<std::size_t>(k)]];
    if (config.intercept && init->has_bias()) x0.tail(nbias) = init->bias;
  }
  if (config.intercept && !(init && init->has_bias())) x0.tail(nbias) = null_intercept(problem);

  auto unpack = [&](const Vector& x) {
    for (Eigen::Index k = 0; k < nfree; ++k) w.weights.data()[free[static_cast<std::size_t>(k)]] = x[k];
    if (config.intercept) w.bias = x.tail(nbias);
  };
  const Objective objective = [&](const Vector& x, Vector& grad) {
    unpack(x);
    const LossGrad lg = multinomial_loss_grad(w, problem);
    for (Eigen::Index k = 0; k < nfree; ++k) grad[k] = lg.grad.data()[free[static_cast<std::size_t>(k)]];
    if (config.intercept) grad.tail(nbias) = lg.bias_grad;
    return lg.loss;
  };

  const LbfgsResult r = minimize_lbfgs(objective, x0, config.max_iterations, config.gradient_tolerance);
  unpack(r.x);
  FitResult out;
  out.weights = w;
  out.loss = multinomial_loss(out.weights, problem);
  out.objective = out.loss;
  out.iterations = r.iterations;
  out.converged = r.converged;
  if (!r.converged) out.warning = lbfgs_warning("masked_refit", r, config.gradient_tolerance);
  return out;
}

FitResult l2_logistic_fit(const Problem& problem, double lambda, const SolverConfig& config,
                          const WeightMatrix* warm_start) {
  if (!(lambda >= 0.0)) throw InvalidArgument("l2 strength must be non-negative");
  const auto c = static_cast<Eigen::Index>(problem.num_classes());
  const auto f = static_cast<Eigen::Index>(problem.num_features());
  const Eigen::Index nw = c * f;
  const Eigen::Index nbias = config.intercept ? c : 0;

  WeightMatrix w = WeightMatrix::zeros(problem.num_classes(), problem.num_features(),
                                       warm_start ? warm_start->space : FeatureSpace::image, config.intercept);
  Vector x0 = Vector::Zero(nw + nbias);
  if (warm_start) {
    if (warm_start->num_classes() != problem.num_classes() || warm_start->num_features() != problem.num_features())
      throw ShapeError("warm start does not match the problem shape");
    x0.head(nw) = Eigen::Map<const Vector>(warm_start->weights.data(), nw);
    if (config.intercept && warm_start->has_bias()) x0.tail(nbias) = warm_start->bias;
  }
  if (config.intercept && !(warm_start && warm_start->has_bias())) x0.tail(nbias) = null_intercept(problem);

  auto unpack = [&](const Vector& x) {
    Eigen::Map<Vector>(w.weights.data(), nw) = x.head(nw);
    if (config.intercept) w.bias = x.tail(nbias);
  };
  const Objective objective = [&](const Vector& x, Vector& grad) {
    unpack(x);
    const LossGrad lg = multinomial_loss_grad(w, problem);
    grad.head(nw) = Eigen::Map<const Vector>(lg.grad.data(), nw) + lambda * x.head(nw);
    if (config.intercept) grad.tail(nbias) = lg.bias_grad;
    return lg.loss + 0.5 * lambda * x.head(nw).squaredNorm();
  };

  const LbfgsResult r = minimize_lbfgs(objective, x0, config.max_iterations, config.gradient_tolerance);
  unpack(r.x);
  FitResult out;
  out.weights = w;
  out.weights.mask = out.weights.weights.array() != 0.0;
  out.loss = multinomial_loss(out.weights, problem);
  out.objective = out.loss + 0.5 * lambda * out.weights.weights.squaredNorm();
  out.iterations = r.iterations;
  out.converged = r.converged;
  if (!r.converged) out.warning = lbfgs_warning("l2_logistic_fit", r, config.gradient_tolerance);
  return out;
}

std::vector<double> default_lp_grid() {
  constexpr std::size_t kSize = 100;
  constexpr double kLow = 0.5;
  constexpr double kHigh = 6.0;
  std::vector<double> grid(kSize);
  const double lo = std::log10(kLow);
  const double hi = std::log10(kHigh);
  for (std::size_t k = 0; k < kSize; ++k)
    grid[k] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(kSize - 1));
  grid.front() = kLow;
  grid.back() = kHigh;
  return grid;
}

GridResult l2_logistic_grid(const Problem& train, const Problem& validation, const std::vector<double>& grid,
                            const SolverConfig& config) {
  if (grid.empty()) throw InvalidArgument("l2 grid is empty");
  if (validation.num_samples() == 0) throw InvalidArgument("l2 grid search needs a nonempty validation set");
  GridResult result;
  result.entries.resize(grid.size());

  // Visit strengths from largest to smallest so each fit warm-starts from a smoother neighbour.
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  const WeightMatrix* previous = nullptr;
  for (std::size_t k : order) {
    FitResult fit = l2_logistic_fit(train, grid[k], config, previous);
    GridEntry& e = result.entries[k];
    e.lambda = grid[k];
    e.train_loss = fit.loss;
    e.validation_accuracy = accuracy(fit.weights, validation.features(), validation.labels());
    e.converged = fit.converged;
    e.weights = std::move(fit.weights);
    previous = &e.weights;
  }
  bool first = true;
  for (std::size_t k : order) {
    const auto& e = result.entries[k];
    if (first || e.validation_accuracy > result.entries[result.selected].validation_accuracy) result.selected = k;
    first = false;
  }
  return result;
}

}  // namespace avd
