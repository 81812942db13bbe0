// Small deterministic dataset for trying out the pipeline: two classes
// ("cat": 3 descriptors, "dog": 2), two prompt templates, 8-dimensional
// embeddings, an ID image set and a shifted OOD image set.

#include "commands.hpp"

#include "avd/rng.hpp"
#include "avd/tensor_io.hpp"

namespace avd::cli {

namespace {

Matrix noisy_rows(const Matrix& centers, const std::vector<int>& owner, double noise, Xoshiro256& rng) {
  Matrix out(static_cast<Eigen::Index>(owner.size()), centers.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      out(i, j) = centers(owner[static_cast<std::size_t>(i)], j) + noise * rng.normal();
  return out;
}

}  // namespace

void write_toy_dataset(const fs::path& out) {
  fs::create_directories(out);
  Xoshiro256 rng(7);

  const auto set = make_descriptor_set(
      {{"cat", {"cat which has slit pupils", "cat which has whiskers", "cat which has a long tail"}},
       {"dog", {"dog which has floppy ears", "dog which has a wet nose"}}},
      {"a photo of a {}.", "a blurry photo of a {}."});
  const std::string text = descriptor_set_to_json(set);
  write_file_bytes(out / "descriptors.json", std::vector<std::uint8_t>(text.begin(), text.end()));

  constexpr Eigen::Index dim = 8;
  Matrix centers(2, dim);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = rng.normal();
  centers.rowwise().normalize();

  const Matrix desc = noisy_rows(centers, {0, 0, 0, 1, 1}, 0.4, rng);
  const Matrix prompts = noisy_rows(centers, {0, 0, 1, 1}, 0.2, rng);  // class-major, 2 templates
  write_matrix({desc, DType::f32}, out / "desc_emb.embf");
  write_matrix({prompts, DType::f32}, out / "cp_emb.embf");

  std::vector<int> labels;
  for (int i = 0; i < 120; ++i) labels.push_back(i % 2);
  write_matrix({noisy_rows(centers, labels, 0.6, rng), DType::f32}, out / "images.embf");
  write_labels(labels, out / "labels.embf");

  Matrix shifted = noisy_rows(centers, labels, 0.9, rng);
  shifted.array() += 0.3;
  write_matrix({shifted, DType::f32}, out / "images_shift.embf");
  write_labels(labels, out / "labels_shift.embf");
}

}  // namespace avd::cli
