#include "avd/grounding.hpp"

#include <cmath>

namespace avd {

std::string_view to_string(FeatureSpace space) {
  switch (space) {
    case FeatureSpace::vd: return "vd";
    case FeatureSpace::cp: return "cp";
    case FeatureSpace::avd: return "avd";
    case FeatureSpace::image: return "image";
  }
  return "unknown";
}

FeatureSpace parse_feature_space(std::string_view name) {
  if (name == "vd") return FeatureSpace::vd;
  if (name == "cp") return FeatureSpace::cp;
  if (name == "avd") return FeatureSpace::avd;
  if (name == "image") return FeatureSpace::image;
  throw InvalidArgument("unknown feature space \"" + std::string(name) + "\"");
}

WeightMatrix WeightMatrix::zeros(std::size_t num_classes, std::size_t num_features, FeatureSpace space,
                                 bool with_bias) {
  WeightMatrix out;
  const auto c = static_cast<Eigen::Index>(num_classes);
  const auto f = static_cast<Eigen::Index>(num_features);
  out.weights = Matrix::Zero(c, f);
  out.mask = Mask::Constant(c, f, false);
  out.space = space;
  if (with_bias) out.bias = Vector::Zero(c);
  return out;
}

WeightMatrix WeightMatrix::from_dense(Matrix w, FeatureSpace space, Vector bias) {
  WeightMatrix out;
  out.mask = w.array() != 0.0;
  out.weights = std::move(w);
  out.space = space;
  out.bias = std::move(bias);
  return out;
}

void WeightMatrix::apply_mask() { weights = mask.select(weights, Matrix::Zero(weights.rows(), weights.cols())); }

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm == 0.0) throw InvalidArgument("cannot normalize zero row " + std::to_string(i));
    out.row(i) = m.row(i) / norm;
  }
  return out;
}

Matrix average_class_prompts(const Matrix& template_embeddings, std::size_t num_classes) {
  if (num_classes == 0 || template_embeddings.rows() % static_cast<Eigen::Index>(num_classes) != 0)
    throw ShapeError("class-prompt matrix has " + std::to_string(template_embeddings.rows()) +
                     " rows, not a multiple of " + std::to_string(num_classes) + " classes");
  const Eigen::Index per_class = template_embeddings.rows() / static_cast<Eigen::Index>(num_classes);
  Matrix means(static_cast<Eigen::Index>(num_classes), template_embeddings.cols());
  for (Eigen::Index c = 0; c < means.rows(); ++c)
    means.row(c) = template_embeddings.middleRows(c * per_class, per_class).colwise().mean();
  return l2_normalize_rows(means);
}

GroundingMatrix build_grounding(const Matrix& descriptor_embeddings, const Matrix& class_prompt_embeddings,
                                const DescriptorLayout& layout) {
  const auto m = static_cast<Eigen::Index>(layout.num_descriptors());
  const auto c = static_cast<Eigen::Index>(layout.num_classes());
  if (descriptor_embeddings.rows() != m)
    throw ShapeError("descriptor embeddings have " + std::to_string(descriptor_embeddings.rows()) +
                     " rows, layout expects M=" + std::to_string(m));
  if (class_prompt_embeddings.rows() != c)
    throw ShapeError("class-prompt embeddings have " + std::to_string(class_prompt_embeddings.rows()) +
                     " rows, layout expects |C|=" + std::to_string(c));
  if (descriptor_embeddings.cols() != class_prompt_embeddings.cols())
    throw ShapeError("descriptor and class-prompt embedding widths differ (" +
                     std::to_string(descriptor_embeddings.cols()) + " vs " +
                     std::to_string(class_prompt_embeddings.cols()) + ")");
  GroundingMatrix g;
  g.layout = layout;
  g.rows.resize(m + c, descriptor_embeddings.cols());
  g.rows.topRows(m) = descriptor_embeddings;
  g.rows.bottomRows(c) = class_prompt_embeddings;
  g.rows = l2_normalize_rows(g.rows);
  return g;
}

Matrix compute_groundings(const GroundingMatrix& grounding, const Matrix& images) {
  if (images.cols() != grounding.rows.cols())
    throw ShapeError("image embedding width " + std::to_string(images.cols()) + " does not match grounding width " +
                     std::to_string(grounding.rows.cols()));
  return images * grounding.rows.transpose();
}

WeightMatrix zero_shot_vd_weights(const DescriptorLayout& layout) {
  const auto c = static_cast<Eigen::Index>(layout.num_classes());
  Matrix w = Matrix::Zero(c, static_cast<Eigen::Index>(layout.num_descriptors()));
  for (std::size_t k = 0; k < layout.num_classes(); ++k) {
    const double v = 1.0 / static_cast<double>(layout.count(k));
    for (std::size_t j = layout.begin(k); j < layout.end(k); ++j)
      w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = v;
  }
  return WeightMatrix::from_dense(std::move(w), FeatureSpace::vd);
}

WeightMatrix zero_shot_cp_weights(std::size_t num_classes) {
  const auto c = static_cast<Eigen::Index>(num_classes);
  return WeightMatrix::from_dense(Matrix::Identity(c, c), FeatureSpace::cp);
}

WeightMatrix merge_zero_shot(const WeightMatrix& vd, const WeightMatrix& cp, double gamma) {
  if (vd.space != FeatureSpace::vd || cp.space != FeatureSpace::cp)
    throw InvalidArgument("merge_zero_shot expects a vd head and a cp head");
  if (vd.num_classes() != cp.num_classes())
    throw ShapeError("class count mismatch: vd has " + std::to_string(vd.num_classes()) + ", cp has " +
                     std::to_string(cp.num_classes()));
  WeightMatrix out;
  out.space = FeatureSpace::avd;
  out.weights.resize(vd.weights.rows(), vd.weights.cols() + cp.weights.cols());
  out.weights << vd.weights, gamma * cp.weights;
  out.mask.resize(out.weights.rows(), out.weights.cols());
  out.mask << vd.mask, cp.mask;
  out.apply_mask();
  return out;
}

WeightMatrix zero_shot_image_weights(const GroundingMatrix& grounding) {
  const auto c = static_cast<Eigen::Index>(grounding.num_classes());
  return WeightMatrix::from_dense(grounding.rows.bottomRows(c), FeatureSpace::image);
}

Matrix logits(const WeightMatrix& w, const Matrix& features) {
  if (features.cols() != w.weights.cols())
    throw ShapeError("feature width " + std::to_string(features.cols()) + " does not match weight width " +
                     std::to_string(w.weights.cols()));
  Matrix out = features * w.weights.transpose();
  if (w.has_bias()) out.rowwise() += w.bias.transpose();
  return out;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()), 0);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(i, c) > scores(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

Prediction predict(const WeightMatrix& w, const Matrix& features, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive, got " + std::to_string(tau));
  Prediction p;
  p.logits = logits(w, features);
  p.probabilities.resize(p.logits.rows(), p.logits.cols());
  for (Eigen::Index i = 0; i < p.logits.rows(); ++i) {
    const auto scaled = (p.logits.row(i).array() / tau).eval();
    const auto e = (scaled - scaled.maxCoeff()).exp().eval();
    p.probabilities.row(i) = e / e.sum();
  }
  p.labels = argmax_rows(p.logits);
  return p;
}

}  // namespace avd
