#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "avd/ensemble.hpp"
#include "avd/grounding.hpp"
#include "avd/rng.hpp"
#include "avd/run.hpp"
#include "avd/slr.hpp"
#include "avd/tensor_io.hpp"

namespace avd::cli {

using nlohmann::json;

namespace {

struct Features {
  Matrix data;
  std::optional<FeatureSpace> space;
};

// Feature files written by `ground` carry a sidecar naming their space;
// plain embedding files do not.
Features load_features(const fs::path& path) {
  Features f{read_matrix(path).data, std::nullopt};
  const auto sidecar = weights_sidecar(path);
  if (fs::exists(sidecar)) {
    const auto bytes = read_file_bytes(sidecar);
    try {
      const auto meta = json::parse(bytes.begin(), bytes.end());
      if (meta.contains("feature_space")) f.space = parse_feature_space(meta["feature_space"].get<std::string>());
    } catch (const json::exception& e) {
      throw InvalidArgument(sidecar.string() + ": " + e.what());
    }
  }
  return f;
}

void check_compatible(const WeightMatrix& w, const fs::path& weights_path, const Features& f,
                      const fs::path& features_path) {
  if (w.num_features() != static_cast<std::size_t>(f.data.cols())) {
    std::ostringstream msg;
    msg << weights_path.string() << " has " << w.num_features() << " feature columns but " << features_path.string()
        << " has " << f.data.cols();
    throw ShapeError(msg.str());
  }
  if (f.space && *f.space != w.space)
    throw InvalidArgument("feature space mismatch: " + weights_path.string() + " is tagged '" +
                          std::string(to_string(w.space)) + "' but " + features_path.string() + " is tagged '" +
                          std::string(to_string(*f.space)) + "'");
}

void check_label_count(const Matrix& m, const LabelVector& y, const fs::path& features, const fs::path& labels) {
  if (static_cast<std::size_t>(m.rows()) != y.size())
    throw ShapeError(features.string() + " has " + std::to_string(m.rows()) + " rows but " + labels.string() +
                     " has " + std::to_string(y.size()) + " labels");
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

void add_weights(OutputSet& outputs, const std::string& name, const WeightMatrix& w) {
  auto encoded = encode_weights(w);
  outputs.add(name, std::move(encoded.matrix));
  outputs.add_text(name + ".json", encoded.sidecar);
}

void finish(OutputSet& outputs, const RunManifest& manifest) {
  outputs.add_text("manifest.json", manifest.to_json(outputs).dump(2) + "\n");
  outputs.commit();
}

std::string features_sidecar(FeatureSpace space, const DescriptorLayout& layout) {
  json meta{{"feature_space", std::string(to_string(space))},
            {"num_descriptors", layout.num_descriptors()},
            {"num_classes", layout.num_classes()}};
  return meta.dump(2) + "\n";
}

// Class-prompt input: either one row per class or |C| * T template rows.
Matrix class_prompts(const Matrix& cp, const DescriptorSet& set, const fs::path& path) {
  const auto classes = static_cast<Eigen::Index>(set.layout.num_classes());
  if (cp.rows() == classes) return cp;
  if (classes > 0 && cp.rows() % classes == 0) return average_class_prompts(cp, set.layout.num_classes());
  throw ShapeError(path.string() + " has " + std::to_string(cp.rows()) + " rows; expected " +
                   std::to_string(classes) + " class prompts or a multiple of it (templates per class)");
}

GroundingMatrix load_grounding(const fs::path& desc_emb, const fs::path& cp_emb, const DescriptorSet& set) {
  const Matrix d = read_matrix(desc_emb).data;
  if (static_cast<std::size_t>(d.rows()) != set.layout.num_descriptors())
    throw ShapeError(desc_emb.string() + " has " + std::to_string(d.rows()) + " rows but the descriptor set has " +
                     std::to_string(set.layout.num_descriptors()) + " descriptors");
  const Matrix cp = class_prompts(read_matrix(cp_emb).data, set, cp_emb);
  if (cp.cols() != d.cols())
    throw ShapeError(cp_emb.string() + " has dimension " + std::to_string(cp.cols()) + " but " + desc_emb.string() +
                     " has " + std::to_string(d.cols()));
  return build_grounding(d, cp, set.layout);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void cmd_ground(const GroundOptions& o) {
  RunManifest manifest("ground");
  manifest.begin_phase("total");
  manifest.add_input("images", o.images);
  manifest.add_input("descriptors", o.descriptors);
  manifest.add_input("desc_emb", o.desc_emb);
  manifest.add_input("cp_emb", o.cp_emb);

  const DescriptorSet set = read_descriptor_set(o.descriptors);
  const GroundingMatrix u = load_grounding(o.desc_emb, o.cp_emb, set);
  const Matrix z = read_matrix(o.images).data;
  if (static_cast<std::size_t>(z.cols()) != u.dim())
    throw ShapeError(o.images.string() + " has dimension " + std::to_string(z.cols()) +
                     " but the text embeddings have " + std::to_string(u.dim()));
  const Matrix h = compute_groundings(u, l2_normalize_rows(z));

  OutputSet outputs(o.out);
  outputs.add("groundings.embf", encode_matrix(EmbeddingMatrix{h, DType::f64}));
  outputs.add_text("groundings.embf.json", features_sidecar(FeatureSpace::avd, u.layout));
  manifest.set_config("normalize_images", true);
  manifest.note("embedding_dim", u.dim());
  manifest.note("num_descriptors", u.num_descriptors());
  manifest.note("num_classes", u.num_classes());
  manifest.note("num_images", z.rows());
  manifest.end_phase("total");
  finish(outputs, manifest);
}

void cmd_zeroshot(const ZeroShotOptions& o) {
  RunManifest manifest("zeroshot");
  manifest.begin_phase("total");
  manifest.add_input("descriptors", o.descriptors);
  const DescriptorSet set = read_descriptor_set(o.descriptors);
  const FeatureSpace space = parse_feature_space(o.space);
  manifest.set_config("space", o.space);

  WeightMatrix w;
  switch (space) {
    case FeatureSpace::vd:
      w = zero_shot_vd_weights(set.layout);
      break;
    case FeatureSpace::cp:
      w = zero_shot_cp_weights(set.layout.num_classes());
      break;
    case FeatureSpace::avd:
      if (!(o.gamma >= 0.0) || !std::isfinite(o.gamma)) throw InvalidArgument("--gamma must be finite and >= 0");
      w = merge_zero_shot(zero_shot_vd_weights(set.layout), zero_shot_cp_weights(set.layout.num_classes()), o.gamma);
      manifest.set_config("gamma", o.gamma);
      break;
    case FeatureSpace::image:
      if (o.desc_emb.empty() || o.cp_emb.empty())
        throw InvalidArgument("--space image needs --desc-emb and --cp-emb");
      manifest.add_input("desc_emb", o.desc_emb);
      manifest.add_input("cp_emb", o.cp_emb);
      w = zero_shot_image_weights(load_grounding(o.desc_emb, o.cp_emb, set));
      break;
  }

  OutputSet outputs(o.out);
  add_weights(outputs, "weights.embf", w);
  manifest.end_phase("total");
  finish(outputs, manifest);
}

void cmd_fit(const FitOptions& o) {
  if (o.mode != "slr" && o.mode != "lp") throw InvalidArgument("--mode must be slr or lp, got '" + o.mode + "'");
  if (o.shots < 1) throw InvalidArgument("--shots must be >= 1");
  if (o.val_shots < 1) throw InvalidArgument("--val-shots must be >= 1");

  RunManifest manifest("fit");
  manifest.begin_phase("total");
  manifest.set_seed(o.seed);
  manifest.add_input("features", o.features);
  manifest.add_input("labels", o.labels);

  const Features features = load_features(o.features);
  const LabelVector labels = read_labels(o.labels);
  check_label_count(features.data, labels, o.features, o.labels);

  const bool slr = o.mode == "slr";
  const FeatureSpace space =
      o.space ? parse_feature_space(*o.space) : (slr ? features.space.value_or(FeatureSpace::avd) : FeatureSpace::image);
  if (features.space && *features.space != space)
    throw InvalidArgument("feature space mismatch: " + o.features.string() + " is tagged '" +
                          std::string(to_string(*features.space)) + "' but --space is '" +
                          std::string(to_string(space)) + "'");

  std::optional<std::size_t> num_classes;
  if (!o.descriptors.empty()) {
    manifest.add_input("descriptors", o.descriptors);
    const DescriptorSet set = read_descriptor_set(o.descriptors);
    num_classes = set.layout.num_classes();
    std::size_t expected = 0;
    switch (space) {
      case FeatureSpace::avd: expected = set.layout.num_descriptors() + set.layout.num_classes(); break;
      case FeatureSpace::vd: expected = set.layout.num_descriptors(); break;
      case FeatureSpace::cp: expected = set.layout.num_classes(); break;
      case FeatureSpace::image: expected = static_cast<std::size_t>(features.data.cols()); break;
    }
    if (static_cast<std::size_t>(features.data.cols()) != expected)
      throw ShapeError(o.features.string() + " has " + std::to_string(features.data.cols()) + " columns; the " +
                       std::string(to_string(space)) + " space of " + o.descriptors.string() + " has " +
                       std::to_string(expected));
    check_labels(labels, *num_classes);
  }

  manifest.begin_phase("split");
  const FewShotSplit split = sample_few_shot(labels, o.shots, o.val_shots, o.seed, num_classes);
  const std::size_t classes = num_classes.value_or(static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1);
  Matrix train_h = select_rows(features.data, split.train);
  Matrix val_h = select_rows(features.data, split.validation);
  const LabelVector train_y = select_labels(labels, split.train);
  const LabelVector val_y = select_labels(labels, split.validation);
  manifest.end_phase("split");

  // Optional standardization: fit on H / s and map the head back to raw
  // feature units, so the stored weights always act on the input features.
  Vector scales = Vector::Ones(features.data.cols());
  if (o.standardize) {
    scales = column_scales(train_h);
    train_h = train_h.array().rowwise() / scales.transpose().array();
    val_h = val_h.array().rowwise() / scales.transpose().array();
  }
  auto unscale = [&](WeightMatrix w) {
    if (o.standardize) {
      w.weights = w.weights.array().rowwise() / scales.transpose().array();
      w.apply_mask();
    }
    w.space = space;
    return w;
  };

  const Problem train(train_h, train_y, classes);
  const Problem validation(val_h, val_y, classes);
  SolverConfig solver;
  solver.epochs = o.epochs;
  solver.tolerance = o.tolerance;
  solver.seed = o.seed;
  solver.intercept = o.intercept;

  manifest.set_config("mode", o.mode);
  manifest.set_config("space", std::string(to_string(space)));
  manifest.set_config("shots", o.shots);
  manifest.set_config("val_shots", o.val_shots);
  manifest.set_config("intercept", o.intercept);
  manifest.set_config("standardize", o.standardize);

  OutputSet outputs(o.out);
  WeightMatrix selected;
  manifest.begin_phase("solve");
  if (slr) {
    PathConfig path_config;
    path_config.grid_size = o.grid_size;
    path_config.min_ratio = o.min_ratio;
    manifest.set_config("epochs", o.epochs);
    manifest.set_config("tolerance", o.tolerance);
    manifest.set_config("grid_size", o.grid_size);
    manifest.set_config("min_ratio", o.min_ratio);
    const RegPathResult path = regularization_path(train, validation, path_config, solver);
    std::ostringstream csv;
    csv << "index,lambda,nonzeros,train_loss,objective,validation_accuracy,epochs,converged,selected\n";
    for (std::size_t i = 0; i < path.entries.size(); ++i) {
      const auto& e = path.entries[i];
      csv << i << ',' << fmt(e.lambda) << ',' << e.nonzeros << ',' << fmt(e.train_loss) << ',' << fmt(e.objective)
          << ',' << fmt(e.validation_accuracy) << ',' << e.epochs << ',' << (e.converged ? 1 : 0) << ','
          << (i == path.selected ? 1 : 0) << '\n';
    }
    outputs.add_text("path.csv", csv.str());
    selected = unscale(path.best().weights);
    manifest.note("selected_lambda", path.best().lambda);
    manifest.note("lambda_max", path.entries.front().lambda);
    manifest.note("selected_nonzeros", path.best().nonzeros);
    const auto unconverged = std::count_if(path.entries.begin(), path.entries.end(),
                                           [](const PathEntry& e) { return !e.converged; });
    if (unconverged > 0) manifest.note("unconverged_path_entries", unconverged);

    if (o.refit) {
      FitResult refit = masked_refit(train, extract_support(path.best().weights), solver, &path.best().weights);
      if (!refit.warning.empty()) manifest.note("refit_warning", refit.warning);
      add_weights(outputs, "weights_refit.embf", unscale(refit.weights));
    }
  } else {
    const auto grid = default_lp_grid();
    const GridResult result = l2_logistic_grid(train, validation, grid, solver);
    std::ostringstream csv;
    csv << "index,lambda,train_loss,validation_accuracy,converged,selected\n";
    for (std::size_t i = 0; i < result.entries.size(); ++i) {
      const auto& e = result.entries[i];
      csv << i << ',' << fmt(e.lambda) << ',' << fmt(e.train_loss) << ',' << fmt(e.validation_accuracy) << ','
          << (e.converged ? 1 : 0) << ',' << (i == result.selected ? 1 : 0) << '\n';
    }
    outputs.add_text("lp_grid.csv", csv.str());
    selected = unscale(result.best().weights);
    manifest.note("selected_lambda", result.best().lambda);
  }
  manifest.end_phase("solve");
  add_weights(outputs, "weights.embf", selected);

  if (!o.zeroshot.empty()) {
    manifest.add_input("zeroshot", o.zeroshot);
    const WeightMatrix zs = read_weights(o.zeroshot);
    if (zs.num_classes() != selected.num_classes() || zs.num_features() != selected.num_features() ||
        zs.space != selected.space)
      throw ShapeError(o.zeroshot.string() + " does not match the fitted head (shape or feature space)");
    add_weights(outputs, "weights_prior.embf", prior_injected_weights(selected, zs, o.shots));
    manifest.note("prior_alpha", prior_alpha(o.shots));
  }

  json split_doc{{"seed", split.seed}, {"train", split.train}, {"validation", split.validation}};
  outputs.add_text("split.json", split_doc.dump(2) + "\n");
  manifest.end_phase("total");
  finish(outputs, manifest);
}

void cmd_eval(const EvalOptions& o) {
  if (!(o.tau > 0.0)) throw InvalidArgument("--tau must be positive");
  RunManifest manifest("eval");
  manifest.begin_phase("total");
  manifest.add_input("weights", o.weights);
  manifest.add_input("features", o.features);
  manifest.add_input("labels", o.labels);
  manifest.set_config("tau", o.tau);

  const WeightMatrix w = read_weights(o.weights);
  const Features f = load_features(o.features);
  const LabelVector y = read_labels(o.labels);
  check_compatible(w, o.weights, f, o.features);
  check_label_count(f.data, y, o.features, o.labels);
  check_labels(y, w.num_classes());

  const Prediction p = predict(w, f.data, o.tau);
  std::vector<std::size_t> hits(w.num_classes(), 0), totals(w.num_classes(), 0);
  double nll = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    ++totals[c];
    if (p.labels[i] == y[i]) ++hits[c];
    nll -= std::log(std::max(p.probabilities(static_cast<Eigen::Index>(i), y[i]), 1e-300));
  }
  json per_class = json::array();
  for (std::size_t c = 0; c < totals.size(); ++c)
    per_class.push_back(totals[c] ? json(static_cast<double>(hits[c]) / static_cast<double>(totals[c])) : json(nullptr));

  json report{{"accuracy", evaluate_accuracy(w, f.data, y)},
              {"num_samples", y.size()},
              {"num_classes", w.num_classes()},
              {"tau", o.tau},
              {"mean_nll", y.empty() ? 0.0 : nll / static_cast<double>(y.size())},
              {"per_class_accuracy", per_class}};
  OutputSet outputs(o.out);
  outputs.add_text("eval.json", report.dump(2) + "\n");
  manifest.end_phase("total");
  finish(outputs, manifest);
}

void cmd_frontier(const FrontierOptions& o) {
  if (o.threads < 1) throw InvalidArgument("--threads must be >= 1");
  RunManifest manifest("frontier");
  manifest.begin_phase("total");
  manifest.add_input("learned", o.learned);
  manifest.add_input("zeroshot", o.zeroshot);
  manifest.add_input("features", o.features);
  manifest.add_input("labels", o.labels);
  manifest.set_config("alpha_grid", o.alpha_grid);
  manifest.set_config("threads", o.threads);

  std::vector<double> alphas;
  if (o.alpha_grid == "paper")
    alphas = standard_alpha_grid();
  else if (o.alpha_grid == "uniform21")
    alphas = uniform_alpha_grid();
  else
    throw InvalidArgument("--alpha-grid must be paper or uniform21, got '" + o.alpha_grid + "'");

  const WeightMatrix learned = read_weights(o.learned);
  const WeightMatrix zs = read_weights(o.zeroshot);
  if (learned.num_classes() != zs.num_classes() || learned.num_features() != zs.num_features())
    throw ShapeError(o.learned.string() + " and " + o.zeroshot.string() + " have different shapes");
  if (learned.space != zs.space)
    throw InvalidArgument("feature space mismatch: " + o.learned.string() + " is tagged '" +
                          std::string(to_string(learned.space)) + "' but " + o.zeroshot.string() + " is tagged '" +
                          std::string(to_string(zs.space)) + "'");

  const Features id_features = load_features(o.features);
  const LabelVector id_labels = read_labels(o.labels);
  check_compatible(learned, o.learned, id_features, o.features);
  check_label_count(id_features.data, id_labels, o.features, o.labels);
  check_labels(id_labels, learned.num_classes());

  struct OodData {
    std::string name;
    Features features;
    LabelVector labels;
  };
  std::vector<OodData> ood;
  json ood_config = json::array();
  for (const auto& spec : o.ood) {
    const auto eq = spec.find('=');
    const auto colon = spec.rfind(':');
    if (eq == std::string::npos || colon == std::string::npos || colon < eq)
      throw InvalidArgument("--ood expects name=features.embf:labels.embf, got '" + spec + "'");
    const std::string name = spec.substr(0, eq);
    const fs::path fpath = spec.substr(eq + 1, colon - eq - 1);
    const fs::path lpath = spec.substr(colon + 1);
    manifest.add_input("ood:" + name + ":features", fpath);
    manifest.add_input("ood:" + name + ":labels", lpath);
    OodData d{name, load_features(fpath), read_labels(lpath)};
    check_compatible(learned, o.learned, d.features, fpath);
    check_label_count(d.features.data, d.labels, fpath, lpath);
    check_labels(d.labels, learned.num_classes());
    ood.push_back(std::move(d));
    ood_config.push_back(name);
  }
  manifest.set_config("ood", ood_config);

  std::vector<EvalSet> ood_sets;
  for (const auto& d : ood) ood_sets.push_back(EvalSet{d.name, &d.features.data, &d.labels});
  manifest.begin_phase("sweep");
  const FrontierCurve curve = frontier_sweep(learned, zs, EvalSet{o.id_name, &id_features.data, &id_labels},
                                             ood_sets, alphas, o.threads);
  manifest.end_phase("sweep");

  OutputSet outputs(o.out);
  outputs.add_text("frontier.csv", frontier_to_csv(curve));
  outputs.add_text("frontier.json", frontier_to_json(curve).dump(2) + "\n");
  manifest.end_phase("total");
  finish(outputs, manifest);
}

void cmd_features(const FeaturesOptions& o) {
  if (o.top < 1) throw InvalidArgument("--top must be >= 1");
  RunManifest manifest("features");
  manifest.begin_phase("total");
  manifest.add_input("weights", o.weights);
  manifest.add_input("descriptors", o.descriptors);
  manifest.set_config("top", o.top);

  const WeightMatrix w = read_weights(o.weights);
  const DescriptorSet set = read_descriptor_set(o.descriptors);
  const FeatureReport report = top_features(w, set, o.top);

  OutputSet outputs(o.out);
  outputs.add_text("features.json", feature_report_to_json(report).dump(2) + "\n");
  outputs.add_text("features.csv", feature_report_to_csv(report));
  manifest.end_phase("total");
  finish(outputs, manifest);
}

void cmd_probe(const ProbeOptions& o) {
  if (o.bins < 1) throw InvalidArgument("--bins must be >= 1");
  RunManifest manifest("probe");
  manifest.begin_phase("total");
  manifest.add_input("images", o.images);
  manifest.add_input("labels", o.labels);
  manifest.add_input("prompts", o.prompts);
  manifest.set_config("bins", o.bins);

  const Matrix z = l2_normalize_rows(read_matrix(o.images).data);
  const LabelVector y = read_labels(o.labels);
  const Matrix prompts = l2_normalize_rows(read_matrix(o.prompts).data);
  check_label_count(z, y, o.images, o.labels);
  if (prompts.cols() != z.cols())
    throw ShapeError(o.prompts.string() + " has dimension " + std::to_string(prompts.cols()) + " but " +
                     o.images.string() + " has " + std::to_string(z.cols()));
  if (!o.prompt_names.empty() && o.prompt_names.size() != static_cast<std::size_t>(prompts.rows()))
    throw ShapeError("--prompt-names lists " + std::to_string(o.prompt_names.size()) + " names for " +
                     std::to_string(prompts.rows()) + " prompts");

  std::size_t classes = o.class_names.size();
  for (int label : y) classes = std::max(classes, static_cast<std::size_t>(label) + 1);
  if (!o.class_names.empty() && o.class_names.size() != classes)
    throw ShapeError("--class-names lists " + std::to_string(o.class_names.size()) + " names but labels span " +
                     std::to_string(classes) + " classes");
  std::vector<std::vector<std::size_t>> rows(classes);
  for (std::size_t i = 0; i < y.size(); ++i) rows[static_cast<std::size_t>(y[i])].push_back(i);
  std::vector<Matrix> by_class;
  for (const auto& r : rows) by_class.push_back(select_rows(z, r));

  const SeparationStats stats = separation_probe(by_class, prompts, o.prompt_names, o.bins);
  OutputSet outputs(o.out);
  outputs.add_text("probe.json", separation_to_json(stats, o.class_names).dump(2) + "\n");
  manifest.end_phase("total");
  finish(outputs, manifest);
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Sparse descriptor classifiers over frozen vision-language embeddings"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GroundOptions ground;
  auto* g = app.add_subcommand("ground", "Project image embeddings onto descriptor and class-prompt directions");
  g->add_option("--images", ground.images, "Image embeddings (EMBF)")->required();
  g->add_option("--descriptors", ground.descriptors, "Descriptor set (JSON)")->required();
  g->add_option("--desc-emb", ground.desc_emb, "Descriptor text embeddings (EMBF)")->required();
  g->add_option("--cp-emb", ground.cp_emb, "Class-prompt embeddings, per class or per template (EMBF)")->required();
  g->add_option("--out", ground.out, "Output directory")->required();

  ZeroShotOptions zeroshot;
  auto* z = app.add_subcommand("zeroshot", "Write a zero-shot head");
  z->add_option("--descriptors", zeroshot.descriptors, "Descriptor set (JSON)")->required();
  z->add_option("--space", zeroshot.space, "vd, cp, avd or image")->capture_default_str();
  z->add_option("--gamma", zeroshot.gamma, "Class-prompt weight in the avd head")->capture_default_str();
  z->add_option("--desc-emb", zeroshot.desc_emb, "Descriptor text embeddings (image space)");
  z->add_option("--cp-emb", zeroshot.cp_emb, "Class-prompt embeddings (image space)");
  z->add_option("--out", zeroshot.out, "Output directory")->required();

  FitOptions fit;
  std::string fit_space;
  auto* f = app.add_subcommand("fit", "Few-shot fit: l1 path (slr) or l2 grid (lp)");
  f->add_option("--features,--images", fit.features, "Training features (EMBF)")->required();
  f->add_option("--labels", fit.labels, "Labels (EMBF)")->required();
  f->add_option("--mode", fit.mode, "slr or lp")->capture_default_str();
  f->add_option("--shots", fit.shots, "Training samples per class")->capture_default_str();
  f->add_option("--val-shots", fit.val_shots, "Validation samples per class")->capture_default_str();
  f->add_option("--seed", fit.seed, "Seed for the split and the solver")->capture_default_str();
  f->add_option("--space", fit_space, "Feature space tag of the fitted head");
  f->add_option("--descriptors", fit.descriptors, "Descriptor set, to check the feature layout");
  f->add_option("--epochs", fit.epochs, "SAGA epoch budget per lambda")->capture_default_str();
  f->add_option("--tolerance", fit.tolerance, "SAGA relative objective tolerance")->capture_default_str();
  f->add_option("--grid-size", fit.grid_size, "Number of path lambdas")->capture_default_str();
  f->add_option("--min-ratio", fit.min_ratio, "Last lambda / first lambda")->capture_default_str();
  f->add_flag("--intercept", fit.intercept, "Fit an unpenalized intercept");
  f->add_flag("--standardize", fit.standardize, "Scale features to unit variance before fitting");
  f->add_flag("--refit", fit.refit, "Also write an unpenalized refit on the selected support");
  f->add_option("--zeroshot", fit.zeroshot, "Zero-shot head; also writes the prior-injected head");
  f->add_option("--out", fit.out, "Output directory")->required();

  EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Accuracy of a head on labelled features");
  e->add_option("--weights", eval.weights, "Weights (EMBF + sidecar)")->required();
  e->add_option("--features,--images", eval.features, "Features (EMBF)")->required();
  e->add_option("--labels", eval.labels, "Labels (EMBF)")->required();
  e->add_option("--tau", eval.tau, "Softmax temperature")->capture_default_str();
  e->add_option("--out", eval.out, "Output directory")->required();

  FrontierOptions frontier;
  auto* fr = app.add_subcommand("frontier", "ID / OOD accuracy along the interpolation path");
  fr->add_option("--learned", frontier.learned, "Learned head")->required();
  fr->add_option("--zeroshot", frontier.zeroshot, "Zero-shot head")->required();
  fr->add_option("--features,--images", frontier.features, "ID features")->required();
  fr->add_option("--labels", frontier.labels, "ID labels")->required();
  fr->add_option("--id-name", frontier.id_name, "Name of the ID set")->capture_default_str();
  fr->add_option("--ood", frontier.ood, "OOD set as name=features.embf:labels.embf (repeatable)");
  fr->add_option("--alpha-grid", frontier.alpha_grid, "paper (the 21 standard weights) or uniform21")->capture_default_str();
  fr->add_option("--threads", frontier.threads, "Evaluation threads")->capture_default_str();
  fr->add_option("--out", frontier.out, "Output directory")->required();

  FeaturesOptions features;
  auto* ft = app.add_subcommand("features", "Largest coefficients per class");
  ft->add_option("--weights", features.weights, "Weights (EMBF + sidecar)")->required();
  ft->add_option("--descriptors", features.descriptors, "Descriptor set (JSON)")->required();
  ft->add_option("--top", features.top, "Features per class")->capture_default_str();
  ft->add_option("--out", features.out, "Output directory")->required();

  ProbeOptions probe;
  std::string prompt_names, class_names;
  auto* p = app.add_subcommand("probe", "Per-class similarity statistics for a set of prompts");
  p->add_option("--images", probe.images, "Image embeddings (EMBF)")->required();
  p->add_option("--labels", probe.labels, "Labels (EMBF)")->required();
  p->add_option("--prompts", probe.prompts, "Prompt text embeddings (EMBF)")->required();
  p->add_option("--prompt-names", prompt_names, "Comma-separated prompt names");
  p->add_option("--class-names", class_names, "Comma-separated class names");
  p->add_option("--bins", probe.bins, "Histogram bins")->capture_default_str();
  p->add_option("--out", probe.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  const CLI::App* active = app.get_subcommands().front();
  try {
    if (active == g) {
      cmd_ground(ground);
    } else if (active == z) {
      cmd_zeroshot(zeroshot);
    } else if (active == f) {
      if (!fit_space.empty()) fit.space = fit_space;
      cmd_fit(fit);
    } else if (active == e) {
      cmd_eval(eval);
    } else if (active == fr) {
      cmd_frontier(frontier);
    } else if (active == ft) {
      cmd_features(features);
    } else if (active == p) {
      if (!prompt_names.empty()) probe.prompt_names = split_list(prompt_names);
      if (!class_names.empty()) probe.class_names = split_list(class_names);
      cmd_probe(probe);
    }
  } catch (const std::exception& ex) {
    std::cerr << "avd " << active->get_name() << ": error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace avd::cli
