#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "avd/grounding.hpp"
#include "avd/tensor_io.hpp"

namespace avd {

/// alpha * learned + (1 - alpha) * zero_shot; mask is the union. The
/// endpoints return the corresponding input weights bit for bit. A missing
/// intercept on either side is treated as zero.
WeightMatrix interpolate(const WeightMatrix& learned, const WeightMatrix& zero_shot, double alpha);

/// Shot-dependent prior: alpha = min(0.05 k, 1).
double prior_alpha(std::size_t shots);
WeightMatrix prior_injected_weights(const WeightMatrix& learned, const WeightMatrix& zero_shot, std::size_t shots);

double evaluate_accuracy(const WeightMatrix& w, const Matrix& features, const LabelVector& labels);

/// Labelled features to score a head on. Does not own the data.
struct EvalSet {
  std::string name;
  const Matrix* features = nullptr;
  const LabelVector* labels = nullptr;
};

/// The 21 standard mixing weights: 0, 1e-4, 2e-4, ..., 0.0251, 0.0501, then 0.1, 0.2, ..., 1.0.
std::vector<double> standard_alpha_grid();
/// 0, 0.05, ..., 1.0.
std::vector<double> uniform_alpha_grid();

struct FrontierRow {
  double alpha = 0.0;
  double id_accuracy = 0.0;
  std::vector<double> ood_accuracy;  // aligned with FrontierCurve::ood_names
  double ood_mean = 0.0;
};

struct FrontierCurve {
  std::string id_name;
  std::vector<std::string> ood_names;
  std::vector<FrontierRow> rows;  // ascending alpha
};

/// Evaluates interpolate(learned, zero_shot, alpha) on the ID set and every
/// OOD set for each alpha. The OOD mean is unweighted across datasets.
/// Work is spread over up to `threads` threads; results do not depend on it.
FrontierCurve frontier_sweep(const WeightMatrix& learned, const WeightMatrix& zero_shot, const EvalSet& id,
                             const std::vector<EvalSet>& ood, std::vector<double> alphas, unsigned threads = 1);

std::string frontier_to_csv(const FrontierCurve& curve);
nlohmann::json frontier_to_json(const FrontierCurve& curve);

struct FeatureEntry {
  std::size_t index = 0;
  std::string text;
  double coefficient = 0.0;
};

struct ClassFeatures {
  std::string class_name;
  std::vector<FeatureEntry> top;
};

struct FeatureReport {
  std::vector<ClassFeatures> classes;
};

/// Human-readable label of feature j: the descriptor text for j < M, the
/// class prompt (first template filled with the class name) for j >= M.
std::string feature_text(const DescriptorSet& descriptors, std::size_t j);

/// Per class, the k largest nonzero coefficients over all features (not just
/// the class's own descriptors), in nonincreasing order; ties by index.
FeatureReport top_features(const WeightMatrix& w, const DescriptorSet& descriptors, std::size_t k = 3);

nlohmann::json feature_report_to_json(const FeatureReport& report);
std::string feature_report_to_csv(const FeatureReport& report);

/// P(a > b) + 0.5 P(a == b) over all pairs, via the rank-sum statistic with
/// average ranks for ties. O(n log n).
double rank_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

struct ClassSimilarity {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::size_t> histogram;  // counts per bin, bins from PromptSeparation::bin_edges
};

struct PairSeparation {
  std::size_t class_a = 0;
  std::size_t class_b = 0;
  /// Probability that a class-a image is more similar to the prompt than a class-b image.
  double auc = 0.5;
};

struct PromptSeparation {
  std::string prompt;
  std::vector<double> bin_edges;
  std::vector<ClassSimilarity> classes;
  std::vector<PairSeparation> pairs;  // every a < b
};

struct SeparationStats {
  std::vector<PromptSeparation> prompts;
};

/// Cosine similarity of each class's image rows with each prompt row.
/// Inputs are expected to be unit-normalized. Throws on an empty class.
SeparationStats separation_probe(const std::vector<Matrix>& images_by_class, const Matrix& prompts,
                                 const std::vector<std::string>& prompt_names = {}, std::size_t bins = 20);

nlohmann::json separation_to_json(const SeparationStats& stats, const std::vector<std::string>& class_names = {});

}  // namespace avd
