#pragma once

#include <string>
#include <string_view>

#include "avd/tensor_io.hpp"
#include "avd/types.hpp"

namespace avd {

/// Which feature space a weight matrix acts on.
enum class FeatureSpace { vd, cp, avd, image };

std::string_view to_string(FeatureSpace space);
FeatureSpace parse_feature_space(std::string_view name);

/// Linear classifier head, one row per class.
///
/// Entries outside `mask` are exactly zero. `bias` is empty unless the head
/// was fitted with an intercept.
struct WeightMatrix {
  Matrix weights;
  Mask mask;
  FeatureSpace space = FeatureSpace::avd;
  Vector bias;

  std::size_t num_classes() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(weights.cols()); }
  bool has_bias() const { return bias.size() != 0; }

  /// All-zero head with an empty mask; `with_bias` adds a zero intercept.
  static WeightMatrix zeros(std::size_t num_classes, std::size_t num_features, FeatureSpace space,
                            bool with_bias = false);
  /// Builds a head whose mask is the nonzero pattern of `w`.
  static WeightMatrix from_dense(Matrix w, FeatureSpace space, Vector bias = {});
  /// Zeroes every entry outside the mask.
  void apply_mask();
};

/// Fixed projection: descriptor rows (class-major) followed by one
/// class-prompt row per class, all unit-norm.
struct GroundingMatrix {
  Matrix rows;
  DescriptorLayout layout;

  std::size_t num_descriptors() const { return layout.num_descriptors(); }
  std::size_t num_classes() const { return layout.num_classes(); }
  std::size_t dim() const { return static_cast<std::size_t>(rows.cols()); }
};

/// Throws InvalidArgument naming the first zero row.
Matrix l2_normalize_rows(const Matrix& m);

/// Averages T consecutive template embeddings per class (class-major
/// layout, rows = classes * T) and renormalizes each mean to unit norm.
Matrix average_class_prompts(const Matrix& template_embeddings, std::size_t num_classes);

GroundingMatrix build_grounding(const Matrix& descriptor_embeddings, const Matrix& class_prompt_embeddings,
                                const DescriptorLayout& layout);

/// H = Z * U^T; one row of groundings per image.
Matrix compute_groundings(const GroundingMatrix& grounding, const Matrix& images);

/// Block-diagonal averaging head: row c holds 1/M_c on class c's descriptors.
WeightMatrix zero_shot_vd_weights(const DescriptorLayout& layout);
WeightMatrix zero_shot_cp_weights(std::size_t num_classes);
/// [W_vd, gamma * W_cp].
WeightMatrix merge_zero_shot(const WeightMatrix& vd, const WeightMatrix& cp, double gamma = 5.0);
/// Zero-shot head acting directly on image embeddings: the class-prompt rows of U.
WeightMatrix zero_shot_image_weights(const GroundingMatrix& grounding);

struct Prediction {
  Matrix logits;
  Matrix probabilities;
  std::vector<int> labels;
};

/// Logits W h (+ b), softmax(logits / tau) and argmax labels (lowest index
/// wins exact ties).
Prediction predict(const WeightMatrix& w, const Matrix& features, double tau = 1.0);

/// Row-wise argmax with lowest-index tie break.
std::vector<int> argmax_rows(const Matrix& scores);

/// Logits for every row of `features` (n x C).
Matrix logits(const WeightMatrix& w, const Matrix& features);

}  // namespace avd
