#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "avd/types.hpp"

namespace avd {

// EMBF layout (little-endian):
//   "EMBF" | version u8 = 1 | dtype u8 (1 = f32, 2 = f64) | reserved u8 x3
//   | rows u64 | cols u64 | rows*cols values, row-major
inline constexpr std::size_t kEmbfHeaderSize = 25;  // 4 + 1 + 1 + 3 + 8 + 8
inline constexpr std::uint8_t kEmbfVersion = 1;

class LoadError : public Error {
 public:
  enum class Kind { io, bad_magic, bad_version, bad_dtype, bad_reserved, truncated, trailing_bytes, non_finite, bad_label };

  LoadError(Kind kind, std::string path, std::uint64_t offset, const std::string& detail);

  Kind kind() const { return kind_; }
  const std::string& path() const { return path_; }
  /// Byte offset in the file where the problem was detected.
  std::uint64_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::string path_;
  std::uint64_t offset_;
};

EmbeddingMatrix read_matrix(const std::filesystem::path& path);
/// Decodes an EMBF image already in memory. `origin` names it in errors.
EmbeddingMatrix decode_matrix(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");

void write_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
/// Throws InvalidArgument on non-finite entries before producing any bytes.
std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& matrix);

/// Labels are EMBF with one f64 column holding exact non-negative integers.
LabelVector read_labels(const std::filesystem::path& path);
LabelVector decode_labels(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
std::vector<std::uint8_t> encode_labels(const LabelVector& labels);
void write_labels(const LabelVector& labels, const std::filesystem::path& path);

/// Contiguous per-class descriptor index ranges partitioning [0, M).
class DescriptorLayout {
 public:
  DescriptorLayout() = default;
  explicit DescriptorLayout(std::vector<std::size_t> counts);

  std::size_t num_classes() const { return counts_.size(); }
  std::size_t num_descriptors() const { return offsets_.empty() ? 0 : offsets_.back(); }
  std::size_t count(std::size_t c) const { return counts_.at(c); }
  std::size_t begin(std::size_t c) const { return offsets_.at(c); }
  std::size_t end(std::size_t c) const { return offsets_.at(c + 1); }
  /// Class owning descriptor index j.
  std::size_t class_of(std::size_t j) const;

  const std::vector<std::size_t>& counts() const { return counts_; }

 private:
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> offsets_;
};

struct DescriptorClass {
  std::string name;
  std::vector<std::string> descriptors;
};

struct DescriptorSet {
  std::vector<DescriptorClass> classes;
  std::vector<std::string> templates;
  DescriptorLayout layout;
};

DescriptorSet read_descriptor_set(const std::filesystem::path& path);
DescriptorSet parse_descriptor_set(const std::string& json_text, const std::string& origin = "<memory>");
/// Validates and fills in the layout.
DescriptorSet make_descriptor_set(std::vector<DescriptorClass> classes, std::vector<std::string> templates);
std::string descriptor_set_to_json(const DescriptorSet& set);

/// Throws ShapeError if any label is negative or >= num_classes.
void check_labels(const LabelVector& labels, std::size_t num_classes);

struct FewShotSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::uint64_t seed = 0;
};

/// Draws, for every class present in `labels` (and every class below
/// `num_classes` when given), k train and val_k validation indices without
/// replacement using xoshiro256** seeded with `seed`. Classes are visited in
/// ascending order; per class a partial Fisher-Yates shuffle of the class's
/// ascending index list is run for k + val_k positions, the first k go to
/// train and the rest to validation. Each output list is sorted ascending.
FewShotSplit sample_few_shot(const LabelVector& labels, std::size_t k, std::size_t val_k, std::uint64_t seed,
                             std::optional<std::size_t> num_classes = std::nullopt);

/// Rows of `m` at the given indices, in order.
Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& indices);
LabelVector select_labels(const LabelVector& labels, const std::vector<std::size_t>& indices);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace avd
