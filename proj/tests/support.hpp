#pragma once

// Synthetic data generators and independent oracles shared by the test
// binaries. Nothing here calls into the solver code paths it is used to check.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avd/rng.hpp"
#include "avd/slr.hpp"
#include "avd/types.hpp"

namespace avd::testing {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Xoshiro256& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

/// Labels drawn from a softmax model over Gaussian features, so the data is
/// not separable and the l1 problem has a finite solution for every lambda.
struct SyntheticProblem {
  Matrix features;
  LabelVector labels;
  std::size_t num_classes = 0;
};

inline SyntheticProblem softmax_problem(std::size_t n, std::size_t f, std::size_t c, std::uint64_t seed,
                                        double signal = 3.0) {
  Xoshiro256 rng(seed);
  SyntheticProblem p;
  p.num_classes = c;
  p.features = gaussian_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f), rng);
  const Matrix w = gaussian_matrix(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(f), rng,
                                   signal / std::sqrt(static_cast<double>(f)));
  const Matrix z = p.features * w.transpose();
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto e = (z.row(i).array() - z.row(i).maxCoeff()).exp().eval();
    double u = rng.uniform() * e.sum();
    int label = static_cast<int>(c) - 1;
    for (Eigen::Index k = 0; k < e.size(); ++k) {
      u -= e[k];
      if (u < 0) {
        label = static_cast<int>(k);
        break;
      }
    }
    p.labels.push_back(label);
  }
  // Every class must be present.
  for (std::size_t k = 0; k < c && k < n; ++k) p.labels[k] = static_cast<int>(k);
  return p;
}

/// AVD-shaped planted-support problem: |C| classes, `descriptors` descriptor
/// features followed by |C| class-prompt features. Each class owns
/// `planted` features whose mean is shifted by `shift` for that class's
/// samples; all features carry N(0, sigma^2) noise. The Bayes-optimal
/// linear head is supported exactly on the planted set.
struct PlantedProblem {
  Matrix train_features;
  LabelVector train_labels;
  Matrix val_features;
  LabelVector val_labels;
  Mask planted;  // |C| x F
  std::size_t num_classes = 0;
};

inline PlantedProblem planted_problem(std::size_t n_train, std::size_t n_val, std::size_t classes,
                                      std::size_t descriptors, std::size_t planted, double sigma, double shift,
                                      std::uint64_t seed) {
  Xoshiro256 rng(seed);
  const std::size_t f = descriptors + classes;
  PlantedProblem p;
  p.num_classes = classes;
  p.planted = Mask::Constant(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(f), false);
  // Planted features are drawn without replacement across all columns.
  std::vector<std::size_t> cols(f);
  for (std::size_t j = 0; j < f; ++j) cols[j] = j;
  for (std::size_t k = 0; k < classes * planted; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(f - k));
    std::swap(cols[k], cols[j]);
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t q = 0; q < planted; ++q)
      p.planted(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(cols[c * planted + q])) = true;

  auto draw = [&](std::size_t n, Matrix& h, LabelVector& y) {
    h = gaussian_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f), rng, sigma);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i % classes);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(f); ++j)
        if (p.planted(y[i], j)) h(static_cast<Eigen::Index>(i), j) += shift;
    }
  };
  draw(n_train, p.train_features, p.train_labels);
  draw(n_val, p.val_features, p.val_labels);
  return p;
}

inline double support_f1(const Mask& recovered, const Mask& truth) {
  const double tp = static_cast<double>((recovered.array() && truth.array()).count());
  const double fp = static_cast<double>((recovered.array() && !truth.array()).count());
  const double fn = static_cast<double>((!recovered.array() && truth.array()).count());
  if (tp == 0) return 0.0;
  const double precision = tp / (tp + fp);
  const double recall = tp / (tp + fn);
  return 2 * precision * recall / (precision + recall);
}

/// Mean negative log-likelihood written as a plain loop over samples and
/// classes (no Eigen expressions, no max subtraction shortcuts shared with
/// the library).
inline double loop_loss(const Matrix& w, const Matrix& h, const LabelVector& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    std::vector<double> z(static_cast<std::size_t>(w.rows()), 0.0);
    double m = -INFINITY;
    for (Eigen::Index c = 0; c < w.rows(); ++c) {
      for (Eigen::Index j = 0; j < h.cols(); ++j) z[static_cast<std::size_t>(c)] += w(c, j) * h(i, j);
      m = std::max(m, z[static_cast<std::size_t>(c)]);
    }
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    total += m + std::log(s) - z[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])];
  }
  return total / static_cast<double>(h.rows());
}

/// Mann-Whitney statistic by explicit O(n^2) pair counting.
inline double pair_count_auc(const std::vector<double>& a, const std::vector<double>& b) {
  double wins = 0.0;
  for (double x : a)
    for (double v : b) wins += x > v ? 1.0 : (x == v ? 0.5 : 0.0);
  return wins / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("avd_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace avd::testing
