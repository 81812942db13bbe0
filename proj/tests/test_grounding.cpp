#include <cmath>

#include "doctest.h"

#include "avd/grounding.hpp"
#include "support.hpp"

using namespace avd;
using testing::gaussian_matrix;

namespace {

double loop_cosine(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    dot += a(i, k) * b(j, k);
    na += a(i, k) * a(i, k);
    nb += b(j, k) * b(j, k);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

TEST_CASE("row normalization") {
  Matrix m(2, 2);
  m << 3, 4, 0, -2;
  const Matrix n = l2_normalize_rows(m);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(n(1, 1) == -1.0);

  Matrix z = Matrix::Ones(3, 4);
  z.row(2).setZero();
  try {
    l2_normalize_rows(z);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("feature space names round trip") {
  for (auto s : {FeatureSpace::vd, FeatureSpace::cp, FeatureSpace::avd, FeatureSpace::image})
    CHECK(parse_feature_space(to_string(s)) == s);
  CHECK_THROWS_AS(parse_feature_space("pixels"), InvalidArgument);
}

TEST_CASE("class prompts are renormalized means of class-major template rows") {
  Xoshiro256 rng(5);
  const Matrix t = gaussian_matrix(2 * 3, 4, rng);  // 2 classes, 3 templates each
  const Matrix p = average_class_prompts(t, 2);
  REQUIRE(p.rows() == 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Vector mean = Vector::Zero(4);
    for (Eigen::Index k = 0; k < 3; ++k) mean += t.row(c * 3 + k).transpose();
    mean /= mean.norm();
    CHECK((p.row(c).transpose() - mean).cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK_THROWS_AS(average_class_prompts(t, 4), ShapeError);
}

TEST_CASE("seven-template averaging yields one row per class") {
  Xoshiro256 rng(6);
  const Matrix p = average_class_prompts(gaussian_matrix(5 * 7, 8, rng), 5);
  CHECK(p.rows() == 5);
  CHECK((p.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("grounding matrix stacks unit descriptor rows then class prompts") {
  Xoshiro256 rng(7);
  const DescriptorLayout layout({2, 3});
  const Matrix d = gaussian_matrix(5, 6, rng, 3.0);
  const Matrix cp = gaussian_matrix(2, 6, rng, 0.5);
  const GroundingMatrix u = build_grounding(d, cp, layout);
  REQUIRE(u.rows.rows() == 7);
  CHECK(u.num_descriptors() == 5);
  CHECK(u.num_classes() == 2);
  CHECK((u.rows.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-14);
  CHECK((u.rows.row(3) - d.row(3) / d.row(3).norm()).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((u.rows.row(6) - cp.row(1) / cp.row(1).norm()).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(build_grounding(d.topRows(4), cp, layout), ShapeError);
  CHECK_THROWS_AS(build_grounding(d, cp.topRows(1), layout), ShapeError);
  CHECK_THROWS_AS(build_grounding(d, gaussian_matrix(2, 5, rng), layout), ShapeError);
}

TEST_CASE("groundings equal a triple-loop product and respect bilinearity") {
  Xoshiro256 rng(8);
  const DescriptorLayout layout({3, 1, 2});
  const GroundingMatrix u = build_grounding(gaussian_matrix(6, 10, rng), gaussian_matrix(3, 10, rng), layout);
  const Matrix z1 = gaussian_matrix(12, 10, rng);
  const Matrix z2 = gaussian_matrix(12, 10, rng);
  const Matrix h = compute_groundings(u, z1);
  REQUIRE(h.rows() == 12);
  REQUIRE(h.cols() == 9);
  double worst = 0;
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index j = 0; j < 9; ++j) {
      double s = 0;
      for (Eigen::Index k = 0; k < 10; ++k) s += z1(i, k) * u.rows(j, k);
      worst = std::max(worst, std::abs(s - h(i, j)));
    }
  CHECK(worst <= 1e-12);

  const Matrix combo = compute_groundings(u, 2.5 * z1 - 0.75 * z2);
  const Matrix expect = 2.5 * h - 0.75 * compute_groundings(u, z2);
  CHECK((combo - expect).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(compute_groundings(u, gaussian_matrix(2, 9, rng)), ShapeError);
}

TEST_CASE("an image equal to a descriptor embedding grounds to 1 on that descriptor") {
  Xoshiro256 rng(9);
  const Matrix d = gaussian_matrix(4, 16, rng);
  const GroundingMatrix u = build_grounding(d, gaussian_matrix(2, 16, rng), DescriptorLayout({2, 2}));
  const Matrix h = compute_groundings(u, l2_normalize_rows(d));
  for (Eigen::Index j = 0; j < 4; ++j) {
    CHECK(h(j, j) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(h.row(j).cwiseAbs().maxCoeff() <= 1.0 + 1e-14);
  }
}

TEST_CASE("vd zero-shot head reproduces the per-class mean descriptor similarity") {
  Xoshiro256 rng(10);
  const DescriptorLayout layout({4, 1, 3, 2});
  const Matrix d = gaussian_matrix(10, 12, rng);
  const Matrix cp = gaussian_matrix(4, 12, rng);
  const Matrix z = gaussian_matrix(25, 12, rng);
  const GroundingMatrix u = build_grounding(d, cp, layout);
  const Matrix h = compute_groundings(u, l2_normalize_rows(z));

  const WeightMatrix w = zero_shot_vd_weights(layout);
  CHECK(w.space == FeatureSpace::vd);
  const Matrix scores = logits(w, h.leftCols(10));
  double worst = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (std::size_t c = 0; c < layout.num_classes(); ++c) {
      double s = 0;
      for (std::size_t j = layout.begin(c); j < layout.end(c); ++j) s += loop_cosine(z, i, d, static_cast<Eigen::Index>(j));
      s /= static_cast<double>(layout.count(c));
      worst = std::max(worst, std::abs(s - scores(i, static_cast<Eigen::Index>(c))));
    }
  CHECK(worst <= 1e-12);

  // Block-diagonal structure: zeros off the class block, 1/M_c on it.
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t j = 0; j < 10; ++j) {
      const double expect = layout.class_of(j) == c ? 1.0 / static_cast<double>(layout.count(c)) : 0.0;
      CHECK(w.weights(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) == expect);
    }
}

TEST_CASE("merged zero-shot head") {
  const DescriptorLayout layout({2, 3, 1});
  const WeightMatrix vd = zero_shot_vd_weights(layout);
  const WeightMatrix cp = zero_shot_cp_weights(3);
  const WeightMatrix w = merge_zero_shot(vd, cp);
  CHECK(w.space == FeatureSpace::avd);
  REQUIRE(w.num_features() == 9);
  CHECK(w.weights.leftCols(6) == vd.weights);
  CHECK(w.weights.rightCols(3) == 5.0 * Matrix::Identity(3, 3));
  CHECK(w.mask.count() == 6 + 3);

  Xoshiro256 rng(11);
  const Matrix h = gaussian_matrix(40, 9, rng);
  SUBCASE("gamma = 0 predicts like the vd head") {
    const auto p = predict(merge_zero_shot(vd, cp, 0.0), h);
    CHECK(p.labels == predict(vd, h.leftCols(6)).labels);
  }
  SUBCASE("very large gamma predicts like the cp head") {
    const auto p = predict(merge_zero_shot(vd, cp, 1e6), h);
    CHECK(p.labels == predict(cp, h.rightCols(3)).labels);
  }
  CHECK_THROWS_AS(merge_zero_shot(cp, vd), InvalidArgument);
  CHECK_THROWS_AS(merge_zero_shot(vd, zero_shot_cp_weights(2)), ShapeError);
}

TEST_CASE("image-space zero-shot head is the class-prompt rows of U") {
  Xoshiro256 rng(12);
  const GroundingMatrix u = build_grounding(gaussian_matrix(3, 5, rng), gaussian_matrix(2, 5, rng), DescriptorLayout({1, 2}));
  const WeightMatrix w = zero_shot_image_weights(u);
  CHECK(w.space == FeatureSpace::image);
  CHECK(w.weights == u.rows.bottomRows(2));
}

TEST_CASE("softmax probabilities, temperature and ties") {
  WeightMatrix w = WeightMatrix::from_dense(Matrix::Identity(2, 2), FeatureSpace::cp);
  Matrix h(1, 2);
  h << 2, 1;
  const Prediction p = predict(w, h);
  CHECK(p.probabilities(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
  CHECK(p.probabilities(0, 1) == doctest::Approx(0.2689414213699951).epsilon(1e-14));
  CHECK(p.labels[0] == 0);

  Xoshiro256 rng(13);
  const WeightMatrix g = WeightMatrix::from_dense(gaussian_matrix(4, 6, rng), FeatureSpace::avd);
  const Matrix x = gaussian_matrix(30, 6, rng);
  const auto base = predict(g, x).labels;
  for (double tau : {0.01, 0.5, 3.0, 100.0}) CHECK(predict(g, x, tau).labels == base);
  CHECK((predict(g, x, 0.7).probabilities.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(predict(g, x, 0.0), InvalidArgument);
  CHECK_THROWS_AS(predict(g, x.leftCols(5)), ShapeError);

  Matrix tied(2, 3);
  tied << 1, 1, 0, 0, 2, 2;
  CHECK(argmax_rows(tied) == std::vector<int>{0, 1});
}

TEST_CASE("weight heads: mask follows the dense pattern and apply_mask zeroes the rest") {
  Matrix m(2, 3);
  m << 0, 1, 0, -2, 0, 3;
  WeightMatrix w = WeightMatrix::from_dense(m, FeatureSpace::avd);
  CHECK(w.mask.count() == 3);
  w.mask(1, 2) = false;
  w.apply_mask();
  CHECK(w.weights(1, 2) == 0.0);
  CHECK(w.weights(1, 0) == -2.0);
  const WeightMatrix z = WeightMatrix::zeros(3, 4, FeatureSpace::vd, true);
  CHECK(z.has_bias());
  CHECK(z.mask.count() == 0);
  CHECK(z.weights.isZero(0));
}
