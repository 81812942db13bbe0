#pragma once

// Subcommand implementations behind the `avd` executable. Each command reads
// its inputs, stages every output in memory and commits them (plus
// manifest.json) to the output directory only on success.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace avd::cli {

namespace fs = std::filesystem;

struct GroundOptions {
  fs::path images;
  fs::path descriptors;
  fs::path desc_emb;
  fs::path cp_emb;
  fs::path out;
};

struct ZeroShotOptions {
  fs::path descriptors;
  std::string space = "avd";  // vd | cp | avd | image
  double gamma = 5.0;
  fs::path desc_emb;  // image space only
  fs::path cp_emb;    // image space only
  fs::path out;
};

struct FitOptions {
  fs::path features;
  fs::path labels;
  std::string mode = "slr";  // slr | lp
  std::size_t shots = 16;
  std::size_t val_shots = 20;
  std::uint64_t seed = 0;
  std::optional<std::string> space;  // defaults: avd for slr, image for lp
  fs::path descriptors;              // optional shape check for avd/vd features
  std::size_t epochs = 50;
  double tolerance = 1e-8;
  std::size_t grid_size = 100;
  double min_ratio = 0.1;
  bool intercept = false;
  bool standardize = false;
  bool refit = false;
  fs::path zeroshot;  // optional: also write the shot-dependent prior-injected head
  fs::path out;
};

struct EvalOptions {
  fs::path weights;
  fs::path features;
  fs::path labels;
  double tau = 1.0;
  fs::path out;
};

struct FrontierOptions {
  fs::path learned;
  fs::path zeroshot;
  fs::path features;
  fs::path labels;
  std::string id_name = "id";
  /// Each entry is name=features.embf:labels.embf.
  std::vector<std::string> ood;
  std::string alpha_grid = "paper";  // paper | uniform21
  unsigned threads = 1;
  fs::path out;
};

struct FeaturesOptions {
  fs::path weights;
  fs::path descriptors;
  std::size_t top = 3;
  fs::path out;
};

struct ProbeOptions {
  fs::path images;
  fs::path labels;
  fs::path prompts;
  std::vector<std::string> prompt_names;
  std::vector<std::string> class_names;
  std::size_t bins = 20;
  fs::path out;
};

void cmd_ground(const GroundOptions& options);
void cmd_zeroshot(const ZeroShotOptions& options);
void cmd_fit(const FitOptions& options);
void cmd_eval(const EvalOptions& options);
void cmd_frontier(const FrontierOptions& options);
void cmd_features(const FeaturesOptions& options);
void cmd_probe(const ProbeOptions& options);

/// Writes the small two-class example dataset used in the README walkthrough:
/// descriptors.json, desc_emb.embf, cp_emb.embf, images.embf, labels.embf and
/// a shifted copy (images_shift.embf, labels_shift.embf).
void write_toy_dataset(const fs::path& dir);

/// Parses argv and dispatches; returns the process exit code. Errors are
/// reported on stderr.
int run(int argc, const char* const* argv);

}  // namespace avd::cli
