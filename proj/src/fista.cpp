#include <algorithm>
#include <cmath>
#include <sstream>

#include "avd/slr.hpp"

namespace avd {

namespace {

// Upper-bound estimate of the Lipschitz constant of the mean multinomial
// loss gradient: 0.5 * sigma_max(H)^2 / n (+ the intercept column).
double lipschitz_estimate(const Matrix& h, bool intercept) {
  const double n = static_cast<double>(std::max<Eigen::Index>(h.rows(), 1));
  Vector v = Vector::Ones(h.cols());
  double sigma2 = 0.0;
  for (int it = 0; it < 60 && v.norm() > 0; ++it) {
    v.normalize();
    Vector hv = h * v;
    Vector next = h.transpose() * hv;
    sigma2 = v.dot(next);
    v = next;
  }
  return 0.5 * (sigma2 / n + (intercept ? 1.0 : 0.0)) * 1.05;
}

struct Smooth {
  double value;
  Matrix grad;
  Vector bias_grad;
};

}  // namespace

FitResult fista_fit(const Problem& problem, double lambda, const SolverConfig& config, const WeightMatrix* warm_start,
                    double ridge) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  if (!(ridge >= 0.0)) throw InvalidArgument("ridge must be non-negative");
  const std::size_t c = problem.num_classes();
  const std::size_t f = problem.num_features();

  WeightMatrix x = warm_start ? *warm_start : WeightMatrix::zeros(c, f, FeatureSpace::avd, config.intercept);
  if (config.intercept && !x.has_bias()) x.bias = null_intercept(problem);
  if (!config.intercept) x.bias.resize(0);

  auto smooth = [&](const WeightMatrix& w) {
    LossGrad lg = multinomial_loss_grad(w, problem);
    Smooth s{lg.loss, std::move(lg.grad), std::move(lg.bias_grad)};
    if (ridge > 0.0) {
      s.value += 0.5 * ridge * w.weights.squaredNorm();
      s.grad += ridge * w.weights;
    }
    return s;
  };
  auto smooth_value = [&](const WeightMatrix& w) {
    return multinomial_loss(w, problem) + 0.5 * ridge * w.weights.squaredNorm();
  };

  double lip = std::max(lipschitz_estimate(problem.features(), config.intercept) + ridge, 1e-12);
  WeightMatrix y = x;
  WeightMatrix next = x;
  double t = 1.0;

  double current = smooth_value(x) + lambda * x.weights.cwiseAbs().sum();
  WeightMatrix best = x;
  double best_objective = current;
  double mapping_norm = std::numeric_limits<double>::infinity();
  double last_change = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t it = 0;

  for (it = 1; it <= config.max_iterations; ++it) {
    const Smooth sy = smooth(y);
    double f_next = 0.0;
    for (;;) {
      const double step = 1.0 / lip;
      next.weights = (y.weights - step * sy.grad).unaryExpr([&](double v) { return soft_threshold(v, step * lambda); });
      if (config.intercept) next.bias = y.bias - step * sy.bias_grad;
      f_next = smooth_value(next);
      const Matrix dw = next.weights - y.weights;
      double model = sy.value + (sy.grad.array() * dw.array()).sum() + 0.5 * lip * dw.squaredNorm();
      if (config.intercept) {
        const Vector db = next.bias - y.bias;
        model += sy.bias_grad.dot(db) + 0.5 * lip * db.squaredNorm();
      }
      if (f_next <= model + 1e-12 * std::abs(sy.value) || !std::isfinite(model)) break;
      lip *= 2.0;
    }

    mapping_norm = lip * (y.weights - next.weights).cwiseAbs().maxCoeff();
    if (config.intercept) mapping_norm = std::max(mapping_norm, lip * (y.bias - next.bias).cwiseAbs().maxCoeff());

    const double objective = f_next + lambda * next.weights.cwiseAbs().sum();
    last_change = current - objective;
    current = objective;
    if (objective < best_objective) {
      best_objective = objective;
      best = next;
    }

    // Gradient-based restart: drop momentum when it points uphill.
    double uphill = ((y.weights - next.weights).array() * (next.weights - x.weights).array()).sum();
    if (config.intercept) uphill += (y.bias - next.bias).dot(next.bias - x.bias);
    if (uphill > 0.0) {
      t = 1.0;
      y = next;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      y.weights = next.weights + beta * (next.weights - x.weights);
      if (config.intercept) y.bias = next.bias + beta * (next.bias - x.bias);
      t = t_next;
    }
    std::swap(x, next);

    if (mapping_norm <= config.gradient_tolerance) {
      converged = true;
      break;
    }
  }

  FitResult out;
  out.weights = std::move(best);
  out.weights.space = warm_start ? warm_start->space : FeatureSpace::avd;
  out.weights.mask = out.weights.weights.array() != 0.0;
  out.loss = multinomial_loss(out.weights, problem);
  out.objective = out.loss + 0.5 * ridge * out.weights.weights.squaredNorm() +
                  lambda * out.weights.weights.cwiseAbs().sum();
  out.iterations = std::min(it, config.max_iterations);
  out.converged = converged;
  if (!converged) {
    std::ostringstream msg;
    msg << "fista_fit did not converge in " << config.max_iterations << " iterations: objective " << out.objective
        << ", proximal gradient norm " << mapping_norm << " (tolerance " << config.gradient_tolerance
        << "), last objective decrease " << last_change;
    out.warning = msg.str();
  }
  return out;
}

}  // namespace avd
