#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "avd/run.hpp"
#include "avd/tensor_io.hpp"
#include "support.hpp"

using namespace avd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string err;
};

// Runs the avd executable with `args`; stderr is captured.
Result avd_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err_file = scratch / "stderr.txt";
  const std::string cmd = std::string(AVD_BINARY) + " " + args + " 2> " + err_file.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err_file);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// Toy dataset shared by the tests, created once.
const fs::path& toy() {
  static const fs::path dir = [] {
    auto d = testing::temp_dir("cli_toy");
    const std::string cmd = std::string(AVD_TOY_BINARY) + " " + d.string();
    REQUIRE(std::system(cmd.c_str()) == 0);
    return d;
  }();
  return dir;
}

std::string ground_args(const fs::path& out, const std::string& images = "images.embf") {
  const auto& t = toy();
  return "ground --images " + (t / images).string() + " --descriptors " + (t / "descriptors.json").string() +
         " --desc-emb " + (t / "desc_emb.embf").string() + " --cp-emb " + (t / "cp_emb.embf").string() + " --out " +
         out.string();
}

fs::path grounded() {
  static const fs::path out = [] {
    auto d = testing::temp_dir("cli_grounded");
    REQUIRE(avd_cli(ground_args(d), d).code == 0);
    return d;
  }();
  return out / "groundings.embf";
}

fs::path zero_shot_head() {
  static const fs::path out = [] {
    auto d = testing::temp_dir("cli_zs");
    REQUIRE(avd_cli("zeroshot --descriptors " + (toy() / "descriptors.json").string() + " --out " + d.string(), d)
                .code == 0);
    return d;
  }();
  return out / "weights.embf";
}

std::string fit_args(const fs::path& out, const std::string& extra) {
  return "fit --features " + grounded().string() + " --labels " + (toy() / "labels.embf").string() + " --out " +
         out.string() + " " + extra;
}

}  // namespace

TEST_CASE("ground writes a 7-column grounding file, deterministically") {
  const auto a = testing::temp_dir("cli_ground_a");
  const auto b = testing::temp_dir("cli_ground_b");
  REQUIRE(avd_cli(ground_args(a), a).code == 0);
  REQUIRE(avd_cli(ground_args(b), b).code == 0);
  const EmbeddingMatrix h = read_matrix(a / "groundings.embf");
  CHECK(h.rows() == 120);
  CHECK(h.cols() == 7);
  CHECK(h.data.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);  // cosine similarities
  CHECK(slurp(a / "groundings.embf") == slurp(b / "groundings.embf"));
  CHECK(read_json(a / "groundings.embf.json")["feature_space"] == "avd");
  const json m = read_json(a / "manifest.json");
  CHECK(m["command"] == "ground");
  CHECK(m["notes"]["embedding_dim"] == 8);
  CHECK(m["inputs"]["images"]["sha256"] == sha256_file(toy() / "images.embf"));
  CHECK(m["outputs"]["groundings.embf"]["sha256"] == sha256_file(a / "groundings.embf"));
}

TEST_CASE("missing input file: nonzero exit, message on stderr, no outputs") {
  const auto scratch = testing::temp_dir("cli_missing");
  const auto out = scratch / "out";
  const std::string args = "ground --images " + (toy() / "images.embf").string() +
                           " --descriptors /nonexistent/descriptors.json --desc-emb " +
                           (toy() / "desc_emb.embf").string() + " --cp-emb " + (toy() / "cp_emb.embf").string() +
                           " --out " + out.string();
  const Result r = avd_cli(args, scratch);
  CHECK(r.code != 0);
  CHECK(r.err.find("/nonexistent/descriptors.json") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("bad flags are usage errors") {
  const auto scratch = testing::temp_dir("cli_usage");
  CHECK(avd_cli("", scratch).code != 0);
  CHECK(avd_cli("fit --labels x", scratch).code != 0);
  CHECK(avd_cli("nonsense", scratch).code != 0);
}

TEST_CASE("zero-shot head uses gamma = 5 by default") {
  const WeightMatrix w = read_weights(zero_shot_head());
  CHECK(w.space == FeatureSpace::avd);
  REQUIRE(w.num_features() == 7);
  CHECK(w.weights.rightCols(2) == 5.0 * Matrix::Identity(2, 2));
  CHECK(w.weights(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(w.weights(1, 3) == 0.5);
}

TEST_CASE("fit slr: reruns are bitwise identical") {
  const auto a = testing::temp_dir("cli_fit_a");
  const auto b = testing::temp_dir("cli_fit_b");
  REQUIRE(avd_cli(fit_args(a, "--mode slr --shots 1 --val-shots 5 --seed 0"), a).code == 0);
  REQUIRE(avd_cli(fit_args(b, "--mode slr --shots 1 --val-shots 5 --seed 0"), b).code == 0);
  for (const char* name : {"weights.embf", "weights.embf.json", "path.csv", "split.json"})
    CHECK(slurp(a / name) == slurp(b / name));
  const std::string path_csv = slurp(a / "path.csv");
  CHECK(std::count(path_csv.begin(), path_csv.end(), '\n') == 101);  // header + 100 lambdas
  const json m = read_json(a / "manifest.json");
  CHECK(m["seed"] == 0);
  CHECK(m["config"]["shots"] == 1);
  const json split = read_json(a / "split.json");
  CHECK(split["train"].size() == 2);
  CHECK(split["validation"].size() == 10);
}

TEST_CASE("fit with another seed draws another split") {
  const auto a = testing::temp_dir("cli_fit_seed_a");
  const auto b = testing::temp_dir("cli_fit_seed_b");
  REQUIRE(avd_cli(fit_args(a, "--shots 4 --seed 1"), a).code == 0);
  REQUIRE(avd_cli(fit_args(b, "--shots 4 --seed 2"), b).code == 0);
  CHECK(slurp(a / "split.json") != slurp(b / "split.json"));
}

TEST_CASE("fit lp: grid endpoints 0.5 and 6 appear in the report") {
  const auto out = testing::temp_dir("cli_lp");
  const std::string args = "fit --mode lp --images " + (toy() / "images.embf").string() + " --labels " +
                           (toy() / "labels.embf").string() + " --shots 8 --out " + out.string();
  REQUIRE(avd_cli(args, out).code == 0);
  std::istringstream csv(slurp(out / "lp_grid.csv"));
  std::string header, first, line, last;
  std::getline(csv, header);
  std::getline(csv, first);
  while (std::getline(csv, line)) last = line;
  CHECK(first.rfind("0,0.5,", 0) == 0);
  CHECK(last.rfind("99,6,", 0) == 0);
  CHECK(read_weights(out / "weights.embf").space == FeatureSpace::image);
}

TEST_CASE("fit with too few samples per class fails without outputs") {
  const auto scratch = testing::temp_dir("cli_shots");
  const auto out = scratch / "out";
  const Result r = avd_cli(fit_args(out, "--shots 50 --val-shots 20"), scratch);
  CHECK(r.code != 0);
  CHECK(r.err.find("class 0") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("fit writes refit and prior-injected heads on request") {
  const auto out = testing::temp_dir("cli_fit_extra");
  REQUIRE(avd_cli(fit_args(out, "--shots 8 --refit --zeroshot " + zero_shot_head().string() + " --descriptors " +
                                    (toy() / "descriptors.json").string()),
                  out)
              .code == 0);
  const WeightMatrix learned = read_weights(out / "weights.embf");
  const WeightMatrix refit = read_weights(out / "weights_refit.embf");
  const WeightMatrix prior = read_weights(out / "weights_prior.embf");
  for (Eigen::Index k = 0; k < learned.weights.size(); ++k)
    if (learned.weights.data()[k] == 0.0) CHECK(refit.weights.data()[k] == 0.0);
  const WeightMatrix zs = read_weights(zero_shot_head());
  CHECK((prior.weights - (0.4 * learned.weights + 0.6 * zs.weights)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(read_json(out / "manifest.json")["notes"]["prior_alpha"] == doctest::Approx(0.4));
}

TEST_CASE("frontier alpha = 0 row equals eval of the zero-shot head") {
  const auto fit = testing::temp_dir("cli_fr_fit");
  REQUIRE(avd_cli(fit_args(fit, "--shots 8"), fit).code == 0);
  const auto eval = testing::temp_dir("cli_fr_eval");
  REQUIRE(avd_cli("eval --weights " + zero_shot_head().string() + " --features " + grounded().string() +
                      " --labels " + (toy() / "labels.embf").string() + " --out " + eval.string(),
                  eval)
              .code == 0);
  const auto eval_learned = testing::temp_dir("cli_fr_eval_l");
  REQUIRE(avd_cli("eval --weights " + (fit / "weights.embf").string() + " --features " + grounded().string() +
                      " --labels " + (toy() / "labels.embf").string() + " --out " + eval_learned.string(),
                  eval_learned)
              .code == 0);

  const auto shift = testing::temp_dir("cli_fr_shift");
  REQUIRE(avd_cli(ground_args(shift, "images_shift.embf"), shift).code == 0);
  auto frontier = [&](const fs::path& out, const std::string& extra) {
    return avd_cli("frontier --learned " + (fit / "weights.embf").string() + " --zeroshot " +
                       zero_shot_head().string() + " --features " + grounded().string() + " --labels " +
                       (toy() / "labels.embf").string() + " --ood shift=" + (shift / "groundings.embf").string() +
                       ":" + (toy() / "labels_shift.embf").string() + " --out " + out.string() + " " + extra,
                   out);
  };
  const auto f1 = testing::temp_dir("cli_fr_1");
  const auto f4 = testing::temp_dir("cli_fr_4");
  REQUIRE(frontier(f1, "--threads 1").code == 0);
  REQUIRE(frontier(f4, "--threads 4").code == 0);
  CHECK(slurp(f1 / "frontier.csv") == slurp(f4 / "frontier.csv"));

  const json rows = read_json(f1 / "frontier.json")["rows"];
  REQUIRE(rows.size() == 21);
  CHECK(rows.front()["alpha"] == 0.0);
  CHECK(rows.front()["id_acc"] == read_json(eval / "eval.json")["accuracy"]);
  CHECK(rows.back()["id_acc"] == read_json(eval_learned / "eval.json")["accuracy"]);
  CHECK(rows[7]["alpha"] == 0.0063);

  const auto u = testing::temp_dir("cli_fr_u");
  REQUIRE(frontier(u, "--alpha-grid uniform21").code == 0);
  CHECK(read_json(u / "frontier.json")["rows"][1]["alpha"] == 0.05);
  const auto bad = testing::temp_dir("cli_fr_bad");
  CHECK(frontier(bad / "out", "--alpha-grid coarse").code != 0);
  CHECK_FALSE(fs::exists(bad / "out"));
}

TEST_CASE("eval rejects a head tagged for another feature space") {
  const auto scratch = testing::temp_dir("cli_tag");
  const auto zs_img = scratch / "zs_img";
  REQUIRE(avd_cli("zeroshot --space image --descriptors " + (toy() / "descriptors.json").string() + " --desc-emb " +
                      (toy() / "desc_emb.embf").string() + " --cp-emb " + (toy() / "cp_emb.embf").string() +
                      " --out " + zs_img.string(),
                  scratch)
              .code == 0);
  // Image-space head on raw images works.
  const auto ok = scratch / "ok";
  CHECK(avd_cli("eval --weights " + (zs_img / "weights.embf").string() + " --features " +
                    (toy() / "images.embf").string() + " --labels " + (toy() / "labels.embf").string() + " --out " +
                    ok.string(),
                scratch)
            .code == 0);

  // A 7-column avd-tagged file against an image head: shape and tag both differ.
  const auto out = scratch / "out";
  const Result r = avd_cli("eval --weights " + (zs_img / "weights.embf").string() + " --features " +
                               grounded().string() + " --labels " + (toy() / "labels.embf").string() + " --out " +
                               out.string(),
                           scratch);
  CHECK(r.code != 0);
  CHECK_FALSE(fs::exists(out));

  // Same shape, different tag.
  const auto vd_like = scratch / "vd_like";
  fs::create_directories(vd_like);
  const WeightMatrix zs = read_weights(zero_shot_head());
  WeightMatrix retagged = zs;
  retagged.space = FeatureSpace::vd;
  const auto enc = encode_weights(retagged);
  write_file_bytes(vd_like / "w.embf", enc.matrix);
  std::ofstream(weights_sidecar(vd_like / "w.embf")) << enc.sidecar;
  const Result t = avd_cli("eval --weights " + (vd_like / "w.embf").string() + " --features " + grounded().string() +
                               " --labels " + (toy() / "labels.embf").string() + " --out " + out.string(),
                           scratch);
  CHECK(t.code != 0);
  CHECK(t.err.find("feature space mismatch") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("eval is temperature-invariant in accuracy") {
  const auto a = testing::temp_dir("cli_tau_a");
  const auto b = testing::temp_dir("cli_tau_b");
  const std::string base = "eval --weights " + zero_shot_head().string() + " --features " + grounded().string() +
                           " --labels " + (toy() / "labels.embf").string();
  REQUIRE(avd_cli(base + " --out " + a.string(), a).code == 0);
  REQUIRE(avd_cli(base + " --tau 0.01 --out " + b.string(), b).code == 0);
  CHECK(read_json(a / "eval.json")["accuracy"] == read_json(b / "eval.json")["accuracy"]);
  CHECK(read_json(a / "eval.json")["mean_nll"] != read_json(b / "eval.json")["mean_nll"]);
  CHECK(avd_cli(base + " --tau 0 --out " + (a / "neg").string(), a).code != 0);
}

TEST_CASE("features report lists the top 3 per class") {
  const auto scratch = testing::temp_dir("cli_features");
  Matrix w = Matrix::Zero(2, 7);
  w.row(0) << 2.0, 0.5, 1.0, 0.0, -0.3, 0.8, 0.0;
  w.row(1) << 0.0, 0.0, 0.2, 1.7, 0.9, 0.0, 0.4;
  const auto enc = encode_weights(WeightMatrix::from_dense(w, FeatureSpace::avd));
  write_file_bytes(scratch / "w.embf", enc.matrix);
  std::ofstream(weights_sidecar(scratch / "w.embf")) << enc.sidecar;
  const auto out = scratch / "out";
  REQUIRE(avd_cli("features --weights " + (scratch / "w.embf").string() + " --descriptors " +
                      (toy() / "descriptors.json").string() + " --out " + out.string(),
                  scratch)
              .code == 0);
  const json report = read_json(out / "features.json");
  REQUIRE(report["classes"].size() == 2);
  for (const auto& c : report["classes"]) CHECK(c["top"].size() == 3);
  CHECK(report["classes"][0]["top"][0]["text"] == "cat which has slit pupils");
  CHECK(report["classes"][0]["top"][2]["text"] == "a photo of a cat.");
  CHECK(report["classes"][1]["top"][0]["text"] == "dog which has floppy ears");
}

TEST_CASE("probe on two clusters reports 5 prompts x 2 classes") {
  const auto scratch = testing::temp_dir("cli_probe");
  Xoshiro256 rng(3);
  Matrix images(40, 4);
  LabelVector labels(40);
  for (Eigen::Index i = 0; i < 40; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    images.row(i) << (i % 2 == 0 ? 1.0 : 0.0), (i % 2 == 0 ? 0.0 : 1.0), 0.1 * rng.normal(), 0.1 * rng.normal();
  }
  const Matrix prompts = testing::gaussian_matrix(5, 4, rng);
  write_matrix({images, DType::f32}, scratch / "z.embf");
  write_labels(labels, scratch / "y.embf");
  write_matrix({prompts, DType::f32}, scratch / "p.embf");
  const auto out = scratch / "out";
  REQUIRE(avd_cli("probe --images " + (scratch / "z.embf").string() + " --labels " + (scratch / "y.embf").string() +
                      " --prompts " + (scratch / "p.embf").string() + " --prompt-names a,b,c,d,e --class-names x,y" +
                      " --out " + out.string(),
                  scratch)
              .code == 0);
  const json probe = read_json(out / "probe.json");
  REQUIRE(probe["prompts"].size() == 5);
  for (const auto& p : probe["prompts"]) {
    CHECK(p["classes"].size() == 2);
    CHECK(p["pairs"].size() == 1);
    CHECK(p["bin_edges"].size() == 21);
  }
  CHECK(probe["prompts"][4]["prompt"] == "e");
  CHECK(avd_cli("probe --images " + (scratch / "z.embf").string() + " --labels " + (scratch / "y.embf").string() +
                    " --prompts " + (scratch / "p.embf").string() + " --prompt-names a,b --out " +
                    (scratch / "bad").string(),
                scratch)
            .code != 0);
}
