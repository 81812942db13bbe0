#include <cmath>
#include <deque>

#include "avd/slr.hpp"

namespace avd {

LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, std::size_t max_iterations, double gradient_tolerance) {
  constexpr std::size_t kMemory = 10;
  constexpr double kArmijo = 1e-4;
  constexpr double kCurvature = 0.9;
  constexpr double kValueSlack = 1e-14;

  LbfgsResult out;
  out.x = std::move(x0);
  Vector g(out.x.size());
  out.value = f(out.x, g);
  std::deque<std::pair<Vector, Vector>> history;  // (s, y)
  Vector x_new(out.x.size()), g_new(out.x.size()), d(out.x.size());

  for (out.iterations = 0; out.iterations < max_iterations; ++out.iterations) {
    out.gradient_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    if (out.gradient_norm <= gradient_tolerance) {
      out.converged = true;
      return out;
    }

    // Two-loop recursion.
    d = -g;
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const auto& [s, y] = history[k];
      alpha[k] = s.dot(d) / y.dot(s);
      d -= alpha[k] * y;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      d *= s.dot(y) / y.squaredNorm();
    } else {
      d /= std::max(1.0, g.norm());
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const auto& [s, y] = history[k];
      const double beta = y.dot(d) / y.dot(s);
      d += (alpha[k] - beta) * s;
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      history.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    // Armijo, or the approximate Wolfe test once f differences reach rounding level.
    const double f_slack = kValueSlack * std::abs(out.value);
    double step = 1.0;
    double value_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      x_new = out.x + step * d;
      if (x_new == out.x) break;
      value_new = f(x_new, g_new);
      if (!std::isfinite(value_new)) {
        step *= 0.5;
        continue;
      }
      const double slope_new = g_new.dot(d);
      if (value_new <= out.value + kArmijo * step * slope ||
          (value_new <= out.value + f_slack && slope_new >= kCurvature * slope &&
           slope_new <= (1.0 - 2.0 * kArmijo) * -slope)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress at machine precision

    Vector s = x_new - out.x;
    Vector y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      history.emplace_back(std::move(s), std::move(y));
      if (history.size() > kMemory) history.pop_front();
    }
    out.x.swap(x_new);
    g.swap(g_new);
    out.value = value_new;
  }
  out.gradient_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
  out.converged = out.gradient_norm <= gradient_tolerance;
  return out;
}

}  // namespace avd
