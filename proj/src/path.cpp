#include <cmath>

#include "avd/slr.hpp"

namespace avd {

std::vector<double> lambda_grid(double first, const PathConfig& config) {
  if (!(first > 0.0)) throw InvalidArgument("lambda grid needs a positive starting strength");
  if (config.grid_size < 1) throw InvalidArgument("grid size must be >= 1");
  if (!(config.min_ratio > 0.0 && config.min_ratio < 1.0)) throw InvalidArgument("min_ratio must lie in (0, 1)");
  std::vector<double> grid(config.grid_size);
  const double hi = std::log10(first);
  const double lo = std::log10(first * config.min_ratio);
  const auto last = static_cast<double>(config.grid_size - 1);
  for (std::size_t k = 0; k < config.grid_size; ++k)
    grid[k] = std::pow(10.0, hi + (lo - hi) * (last == 0 ? 0.0 : static_cast<double>(k) / last));
  grid.front() = first;
  if (config.grid_size > 1) grid.back() = first * config.min_ratio;
  return grid;
}

RegPathResult regularization_path(const Problem& train, const Problem& validation, const PathConfig& path_config,
                                  const SolverConfig& solver_config) {
  if (validation.num_samples() == 0) throw InvalidArgument("regularization path needs a nonempty validation set");
  if (validation.num_features() != train.num_features())
    throw ShapeError("train and validation feature widths differ");
  const double first = lambda_max(train, solver_config.intercept);
  if (!(first > 0.0)) throw InvalidArgument("degenerate problem: lambda_max = 0 (features carry no signal)");

  RegPathResult result;
  const auto grid = lambda_grid(first, path_config);
  result.entries.reserve(grid.size());
  const WeightMatrix* previous = nullptr;
  for (double lambda : grid) {
    FitResult fit = prox_saga_fit(train, lambda, solver_config, path_config.warm_start ? previous : nullptr);
    PathEntry e;
    e.lambda = lambda;
    e.nonzeros = count_nonzeros(fit.weights);
    e.train_loss = fit.loss;
    e.objective = fit.objective;
    e.validation_accuracy = accuracy(fit.weights, validation.features(), validation.labels());
    e.epochs = fit.iterations;
    e.converged = fit.converged;
    e.weights = std::move(fit.weights);
    result.entries.push_back(std::move(e));
    previous = &result.entries.back().weights;
  }
  for (std::size_t k = 1; k < result.entries.size(); ++k)
    if (result.entries[k].validation_accuracy > result.entries[result.selected].validation_accuracy) result.selected = k;
  return result;
}

}  // namespace avd
