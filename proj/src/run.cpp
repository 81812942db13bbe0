#include "avd/run.hpp"

#include <iomanip>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

#include "avd/tensor_io.hpp"

namespace avd {

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

std::filesystem::path weights_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

EncodedWeights encode_weights(const WeightMatrix& w) {
  EncodedWeights out;
  out.matrix = encode_matrix(EmbeddingMatrix{w.weights, DType::f64});
  nlohmann::json meta{{"feature_space", std::string(to_string(w.space))},
                      {"num_classes", w.num_classes()},
                      {"num_features", w.num_features()},
                      {"nonzeros", static_cast<std::size_t>((w.weights.array() != 0.0).count())}};
  if (w.has_bias())
    meta["bias"] = std::vector<double>(w.bias.data(), w.bias.data() + w.bias.size());
  else
    meta["bias"] = nullptr;
  out.sidecar = meta.dump(2) + "\n";
  return out;
}

WeightMatrix read_weights(const std::filesystem::path& path) {
  const EmbeddingMatrix m = read_matrix(path);
  const auto sidecar_path = weights_sidecar(path);
  const auto bytes = read_file_bytes(sidecar_path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(sidecar_path.string() + ": " + e.what());
  }
  Vector bias;
  if (meta.contains("bias") && !meta["bias"].is_null()) {
    const auto b = meta["bias"].get<std::vector<double>>();
    if (b.size() != m.rows()) throw ShapeError(sidecar_path.string() + ": bias length does not match class count");
    bias = Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  return WeightMatrix::from_dense(m.data, parse_feature_space(meta.value("feature_space", "avd")), bias);
}

OutputSet::OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

void OutputSet::add(const std::string& name, std::vector<std::uint8_t> bytes) { files_[name] = std::move(bytes); }

void OutputSet::add_text(const std::string& name, const std::string& text) {
  files_[name] = std::vector<std::uint8_t>(text.begin(), text.end());
}

std::vector<std::filesystem::path> OutputSet::commit() {
  namespace fs = std::filesystem;
  fs::create_directories(dir_);
  std::vector<std::pair<fs::path, fs::path>> staged;  // (temporary, final)
  std::vector<fs::path> done;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& [tmp, final_path] : staged) fs::remove(tmp, ec);
    for (const auto& p : done) fs::remove(p, ec);
  };
  try {
    for (const auto& [name, bytes] : files_) {
      const fs::path final_path = dir_ / name;
      const fs::path tmp = dir_ / ("." + name + ".partial");
      staged.emplace_back(tmp, final_path);
      write_file_bytes(tmp, bytes);
    }
    for (const auto& [tmp, final_path] : staged) {
      fs::rename(tmp, final_path);
      done.push_back(final_path);
    }
  } catch (...) {
    cleanup();
    throw;
  }
  return done;
}

RunManifest::RunManifest(std::string command) : command_(std::move(command)) {}

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  inputs_[role] = {{"path", path.string()}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}};
}

void RunManifest::begin_phase(const std::string& name) { started_[name] = std::chrono::steady_clock::now(); }

void RunManifest::end_phase(const std::string& name) {
  const auto it = started_.find(name);
  if (it == started_.end()) return;
  timings_ms_[name] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - it->second).count();
}

nlohmann::json RunManifest::to_json(const OutputSet& outputs) const {
  nlohmann::json out_files = nlohmann::json::object();
  for (const auto& [name, bytes] : outputs.files())
    if (name != "manifest.json") out_files[name] = {{"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}};
  nlohmann::json doc{{"command", command_},
                     {"tool_version", kToolVersion},
                     {"config", config_},
                     {"inputs", inputs_},
                     {"outputs", out_files},
                     {"timings_ms", timings_ms_}};
  doc["seed"] = seed_ ? nlohmann::json(*seed_) : nlohmann::json(nullptr);
  if (!notes_.empty()) doc["notes"] = notes_;
  return doc;
}

}  // namespace avd
