#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "avd/grounding.hpp"

namespace avd {

inline constexpr const char* kToolVersion = "0.3.0";

/// Lowercase hex SHA-256 of a byte buffer / file.
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Weight heads on disk: an EMBF f64 matrix plus a JSON sidecar at
/// `<path>.json` holding the feature space and optional intercept. The mask
/// is restored as the nonzero pattern.
struct EncodedWeights {
  std::vector<std::uint8_t> matrix;
  std::string sidecar;
};
EncodedWeights encode_weights(const WeightMatrix& w);
WeightMatrix read_weights(const std::filesystem::path& path);
std::filesystem::path weights_sidecar(const std::filesystem::path& path);

/// Collects every output of a run in memory and writes them all at once.
///
/// commit() writes each file to a temporary name in the target directory and
/// renames them into place only after every write succeeded; on failure the
/// temporaries (and any already renamed file) are removed.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir);

  void add(const std::string& name, std::vector<std::uint8_t> bytes);
  void add_text(const std::string& name, const std::string& text);
  bool contains(const std::string& name) const { return files_.count(name) != 0; }
  const std::map<std::string, std::vector<std::uint8_t>>& files() const { return files_; }

  std::vector<std::filesystem::path> commit();

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::vector<std::uint8_t>> files_;
};

/// Record of one CLI invocation: resolved config, input digests, seed and
/// timings. Every successful command writes exactly one manifest.json.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_config(const std::string& key, nlohmann::json value) { config_[key] = std::move(value); }
  void add_input(const std::string& role, const std::filesystem::path& path);
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void note(const std::string& key, nlohmann::json value) { notes_[key] = std::move(value); }
  /// Starts / stops a named wall-clock phase.
  void begin_phase(const std::string& name);
  void end_phase(const std::string& name);

  const nlohmann::json& inputs() const { return inputs_; }
  const nlohmann::json& config() const { return config_; }

  /// Manifest JSON, including digests of every output staged in `outputs`.
  nlohmann::json to_json(const OutputSet& outputs) const;

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  nlohmann::json notes_ = nlohmann::json::object();
  std::optional<std::uint64_t> seed_;
  std::map<std::string, std::chrono::steady_clock::time_point> started_;
  std::map<std::string, double> timings_ms_;
};

}  // namespace avd
