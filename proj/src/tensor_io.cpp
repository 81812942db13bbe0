#include "avd/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

#include "avd/rng.hpp"

namespace avd {

namespace {

std::string kind_name(LoadError::Kind kind) {
  switch (kind) {
    case LoadError::Kind::io: return "I/O error";
    case LoadError::Kind::bad_magic: return "bad magic";
    case LoadError::Kind::bad_version: return "unsupported version";
    case LoadError::Kind::bad_dtype: return "unknown dtype";
    case LoadError::Kind::bad_reserved: return "nonzero reserved byte";
    case LoadError::Kind::truncated: return "truncated payload";
    case LoadError::Kind::trailing_bytes: return "trailing bytes";
    case LoadError::Kind::non_finite: return "non-finite entry";
    case LoadError::Kind::bad_label: return "invalid label";
  }
  return "load error";
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename UInt>
UInt get_le(const std::uint8_t* p) {
  UInt v = 0;
  for (int i = sizeof(UInt) - 1; i >= 0; --i) v = static_cast<UInt>((v << 8) | p[i]);
  return v;
}

template <typename UInt>
void put_le(std::vector<std::uint8_t>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

LoadError::LoadError(Kind kind, std::string path, std::uint64_t offset, const std::string& detail)
    : Error(path + ": " + kind_name(kind) + " at byte offset " + std::to_string(offset) +
            (detail.empty() ? "" : " (" + detail + ")")),
      kind_(kind),
      path_(std::move(path)),
      offset_(offset) {}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(LoadError::Kind::io, path.string(), 0, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

EmbeddingMatrix decode_matrix(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  using K = LoadError::Kind;
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "EMBF"))
    throw LoadError(K::bad_magic, origin, 0, "expected \"EMBF\"");
  if (bytes.size() < kEmbfHeaderSize)
    throw LoadError(K::truncated, origin, bytes.size(), "header needs " + std::to_string(kEmbfHeaderSize) + " bytes");
  if (bytes[4] != kEmbfVersion) throw LoadError(K::bad_version, origin, 4, "version " + std::to_string(bytes[4]));
  const std::uint8_t dtype_tag = bytes[5];
  if (dtype_tag != 1 && dtype_tag != 2) throw LoadError(K::bad_dtype, origin, 5, "dtype " + std::to_string(dtype_tag));
  for (std::size_t i = 6; i < 9; ++i)
    if (bytes[i] != 0) throw LoadError(K::bad_reserved, origin, i, "");

  const std::uint64_t rows = get_u64(&bytes[9]);
  const std::uint64_t cols = get_u64(&bytes[17]);
  const std::size_t width = dtype_tag == 1 ? 4 : 8;
  const std::uint64_t payload = bytes.size() - kEmbfHeaderSize;
  if (cols != 0 && rows > payload / width / cols + 1)
    throw LoadError(K::truncated, origin, bytes.size(), "declared shape exceeds file size");
  const std::uint64_t count = rows * cols;
  if (payload < count * width)
    throw LoadError(K::truncated, origin, bytes.size(),
                    "declared " + std::to_string(rows) + "x" + std::to_string(cols) + ", found " +
                        std::to_string(payload / width) + " values");
  if (payload > count * width)
    throw LoadError(K::trailing_bytes, origin, kEmbfHeaderSize + count * width, "");

  EmbeddingMatrix m;
  m.dtype = static_cast<DType>(dtype_tag);
  m.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  double* out = m.data.data();
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t off = kEmbfHeaderSize + i * width;
    const double v = dtype_tag == 1 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(&bytes[off])))
                                    : std::bit_cast<double>(get_le<std::uint64_t>(&bytes[off]));
    if (!std::isfinite(v))
      throw LoadError(K::non_finite, origin, off,
                      "row " + std::to_string(i / cols) + ", col " + std::to_string(i % cols));
    out[i] = v;
  }
  return m;
}

EmbeddingMatrix read_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_file_bytes(path), path.string());
}

std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& matrix) {
  const Matrix& d = matrix.data;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      if (!std::isfinite(d(i, j)))
        throw InvalidArgument("non-finite entry at row " + std::to_string(i) + ", col " + std::to_string(j));

  const bool f32 = matrix.dtype == DType::f32;
  std::vector<std::uint8_t> out;
  out.reserve(kEmbfHeaderSize + static_cast<std::size_t>(d.size()) * (f32 ? 4 : 8));
  out.insert(out.end(), {'E', 'M', 'B', 'F'});
  out.push_back(kEmbfVersion);
  out.push_back(static_cast<std::uint8_t>(matrix.dtype));
  out.insert(out.end(), {0, 0, 0});
  put_u64(out, static_cast<std::uint64_t>(d.rows()));
  put_u64(out, static_cast<std::uint64_t>(d.cols()));
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (f32)
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(d.data()[i])));
    else
      put_le(out, std::bit_cast<std::uint64_t>(d.data()[i]));
  }
  return out;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

void write_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  write_file_bytes(path, encode_matrix(matrix));
}

LabelVector decode_labels(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  const EmbeddingMatrix m = decode_matrix(bytes, origin);
  if (m.cols() != 1 && m.rows() != 0)
    throw LoadError(LoadError::Kind::bad_label, origin, 17, "labels need cols=1, got " + std::to_string(m.cols()));
  const std::size_t width = m.dtype == DType::f32 ? 4 : 8;
  LabelVector labels(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double v = m.data(static_cast<Eigen::Index>(i), 0);
    if (v < 0 || v != std::floor(v) || v > 2147483647.0)
      throw LoadError(LoadError::Kind::bad_label, origin, kEmbfHeaderSize + i * width,
                      "value " + std::to_string(v) + " is not a non-negative integer");
    labels[i] = static_cast<int>(v);
  }
  return labels;
}

LabelVector read_labels(const std::filesystem::path& path) {
  return decode_labels(read_file_bytes(path), path.string());
}

std::vector<std::uint8_t> encode_labels(const LabelVector& labels) {
  EmbeddingMatrix m;
  m.dtype = DType::f64;
  m.data.resize(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw InvalidArgument("negative label at index " + std::to_string(i));
    m.data(static_cast<Eigen::Index>(i), 0) = labels[i];
  }
  return encode_matrix(m);
}

void write_labels(const LabelVector& labels, const std::filesystem::path& path) {
  write_file_bytes(path, encode_labels(labels));
}

DescriptorLayout::DescriptorLayout(std::vector<std::size_t> counts) : counts_(std::move(counts)) {
  offsets_.reserve(counts_.size() + 1);
  offsets_.push_back(0);
  for (std::size_t c = 0; c < counts_.size(); ++c) {
    if (counts_[c] == 0) throw InvalidArgument("class " + std::to_string(c) + " has no descriptors");
    offsets_.push_back(offsets_.back() + counts_[c]);
  }
}

std::size_t DescriptorLayout::class_of(std::size_t j) const {
  if (j >= num_descriptors()) throw InvalidArgument("descriptor index " + std::to_string(j) + " out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), j);
  return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

DescriptorSet make_descriptor_set(std::vector<DescriptorClass> classes, std::vector<std::string> templates) {
  std::set<std::string> seen;
  std::vector<std::size_t> counts;
  counts.reserve(classes.size());
  for (const auto& c : classes) {
    if (!seen.insert(c.name).second) throw InvalidArgument("duplicate class name \"" + c.name + "\"");
    if (c.descriptors.empty()) throw InvalidArgument("class \"" + c.name + "\" has an empty descriptor list");
    counts.push_back(c.descriptors.size());
  }
  DescriptorSet set;
  set.layout = DescriptorLayout(std::move(counts));
  set.classes = std::move(classes);
  set.templates = std::move(templates);
  return set;
}

DescriptorSet parse_descriptor_set(const std::string& json_text, const std::string& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(origin + ": " + e.what());
  }
  try {
    std::vector<DescriptorClass> classes;
    for (const auto& entry : doc.at("classes")) {
      classes.push_back({entry.at("name").get<std::string>(), entry.at("descriptors").get<std::vector<std::string>>()});
    }
    std::vector<std::string> templates;
    if (doc.contains("templates")) templates = doc.at("templates").get<std::vector<std::string>>();
    return make_descriptor_set(std::move(classes), std::move(templates));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(origin + ": malformed descriptor set: " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(origin + ": " + e.what());
  }
}

DescriptorSet read_descriptor_set(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_descriptor_set(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string descriptor_set_to_json(const DescriptorSet& set) {
  nlohmann::json doc;
  doc["classes"] = nlohmann::json::array();
  for (const auto& c : set.classes) doc["classes"].push_back({{"name", c.name}, {"descriptors", c.descriptors}});
  doc["templates"] = set.templates;
  return doc.dump(2);
}

void check_labels(const LabelVector& labels, std::size_t num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw ShapeError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                       " outside [0, " + std::to_string(num_classes) + ")");
}

FewShotSplit sample_few_shot(const LabelVector& labels, std::size_t k, std::size_t val_k, std::uint64_t seed,
                             std::optional<std::size_t> num_classes) {
  std::size_t classes = num_classes.value_or(0);
  for (int y : labels) {
    if (y < 0) throw InvalidArgument("negative label");
    classes = std::max(classes, static_cast<std::size_t>(y) + 1);
  }
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  Xoshiro256 rng(seed);
  FewShotSplit split;
  split.seed = seed;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& pool = by_class[c];
    const std::size_t need = k + val_k;
    if (pool.size() < need)
      throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                            " samples, needs " + std::to_string(need) + " (k=" + std::to_string(k) +
                            ", val_k=" + std::to_string(val_k) + ")");
    for (std::size_t i = 0; i < need; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    split.train.insert(split.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    split.validation.insert(split.validation.end(), pool.begin() + static_cast<std::ptrdiff_t>(k),
                            pool.begin() + static_cast<std::ptrdiff_t>(need));
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

Matrix select_rows(const Matrix& m, const std::vector<std::size_t>& indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= static_cast<std::size_t>(m.rows())) throw ShapeError("row index out of range");
    out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(indices[r]));
  }
  return out;
}

LabelVector select_labels(const LabelVector& labels, const std::vector<std::size_t>& indices) {
  LabelVector out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

}  // namespace avd
