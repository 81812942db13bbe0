#include <algorithm>
#include <cmath>
#include <sstream>

#include "avd/rng.hpp"
#include "avd/slr.hpp"

namespace avd {

namespace {
constexpr std::size_t kReanchorEpochs = 10;
}

double saga_step_size(const Problem& problem, bool intercept) {
  const double l_max = problem.features().rowwise().squaredNorm().maxCoeff() + (intercept ? 1.0 : 0.0);
  if (!(l_max > 0.0)) throw InvalidArgument("all feature rows are zero; SAGA step size undefined");
  return 1.0 / (3.0 * l_max);
}

FitResult prox_saga_fit(const Problem& problem, double lambda, const SolverConfig& config,
                        const WeightMatrix* warm_start) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (problem.num_samples() == 0) throw InvalidArgument("prox_saga_fit needs at least one sample");
  if (config.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(config.tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");

  const Matrix& h = problem.features();
  const auto& y = problem.labels();
  const auto n = static_cast<Eigen::Index>(problem.num_samples());
  const double inv_n = 1.0 / static_cast<double>(n);
  const double step = saga_step_size(problem, config.intercept);
  const double threshold = step * lambda;

  WeightMatrix w = warm_start ? *warm_start
                              : WeightMatrix::zeros(problem.num_classes(), problem.num_features(), FeatureSpace::avd);
  if (config.intercept && !w.has_bias()) w.bias = null_intercept(problem);
  if (!config.intercept) w.bias.resize(0);

  // table.row(i) holds the residual p_i - e_{y_i} from the last visit of i.
  Matrix table = softmax_residuals(w, problem);
  Matrix mean_grad = gradient_from_residuals(table, h);
  Vector mean_bias_grad = config.intercept ? Vector(table.colwise().mean().transpose()) : Vector();

  Xoshiro256 rng(config.seed);
  const auto classes = static_cast<Eigen::Index>(problem.num_classes());
  const auto fdim = static_cast<Eigen::Index>(problem.num_features());
  Vector z(classes), r(classes), delta(classes);

  double previous = l1_objective(w, problem, lambda);
  bool converged = false;
  std::size_t epoch = 0;
  for (epoch = 1; epoch <= config.epochs; ++epoch) {
    for (Eigen::Index t = 0; t < n; ++t) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      const auto hi = h.row(i);
      z.noalias() = w.weights * hi.transpose();
      if (config.intercept) z += w.bias;
      const double m = z.maxCoeff();
      r = (z.array() - m).exp();
      r /= r.sum();
      r[y[static_cast<std::size_t>(i)]] -= 1.0;
      delta = r - table.row(i).transpose();

      // One fused pass: gradient step, prox, running-average update.
      const double* hp = hi.data();
      for (Eigen::Index c = 0; c < classes; ++c) {
        double* wc = w.weights.row(c).data();
        double* gc = mean_grad.row(c).data();
        const double dc = delta[c];
        const double dcn = inv_n * dc;
        for (Eigen::Index j = 0; j < fdim; ++j) {
          const double g = dc * hp[j];
          // Branch-free soft threshold: v - clamp(v, -t, t).
          const double v = wc[j] - step * (g + gc[j]);
          wc[j] = v - std::max(-threshold, std::min(v, threshold));
          gc[j] += dcn * hp[j];
        }
      }
      if (config.intercept) {
        w.bias -= step * (delta + mean_bias_grad);
        mean_bias_grad += inv_n * delta;
      }
      table.row(i) = r.transpose();
    }
    // Re-anchor the running average periodically to bound round-off drift.
    if (epoch % kReanchorEpochs == 0) {
      mean_grad = gradient_from_residuals(table, h);
      if (config.intercept) mean_bias_grad = table.colwise().mean().transpose();
    }

    const double objective = l1_objective(w, problem, lambda);
    if (!std::isfinite(objective)) {
      std::ostringstream msg;
      msg << "prox_saga_fit diverged in epoch " << epoch << " (objective " << objective << ", step size " << step
          << ")";
      throw DivergenceError(msg.str(), step);
    }
    const double change = std::abs(previous - objective) / std::max(std::abs(objective), 1e-300);
    previous = objective;
    if (change < config.tolerance) {
      converged = true;
      break;
    }
  }

  FitResult out;
  out.weights = std::move(w);
  out.weights.space = warm_start ? warm_start->space : FeatureSpace::avd;
  out.weights.mask = out.weights.weights.array() != 0.0;
  out.loss = multinomial_loss(out.weights, problem);
  out.objective = out.loss + lambda * out.weights.weights.cwiseAbs().sum();
  out.iterations = std::min(epoch, config.epochs);
  out.converged = converged;
  if (!converged) {
    std::ostringstream msg;
    msg << "prox_saga_fit stopped after " << config.epochs << " epochs without reaching relative tolerance "
        << config.tolerance << " (objective " << out.objective << ")";
    out.warning = msg.str();
  }
  return out;
}

}  // namespace avd
