#include "avd/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "avd/slr.hpp"

namespace avd {

WeightMatrix interpolate(const WeightMatrix& learned, const WeightMatrix& zero_shot, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (learned.space != zero_shot.space)
    throw InvalidArgument("cannot interpolate a " + std::string(to_string(learned.space)) + " head with a " +
                          std::string(to_string(zero_shot.space)) + " head");
  if (learned.weights.rows() != zero_shot.weights.rows() || learned.weights.cols() != zero_shot.weights.cols())
    throw ShapeError("interpolated heads differ in shape");

  WeightMatrix out;
  out.space = learned.space;
  out.mask = learned.mask.array() || zero_shot.mask.array();
  if (alpha == 0.0)
    out.weights = zero_shot.weights;
  else if (alpha == 1.0)
    out.weights = learned.weights;
  else
    out.weights = alpha * learned.weights + (1.0 - alpha) * zero_shot.weights;

  if (learned.has_bias() || zero_shot.has_bias()) {
    const auto c = learned.weights.rows();
    const Vector bl = learned.has_bias() ? learned.bias : Vector::Zero(c);
    const Vector bz = zero_shot.has_bias() ? zero_shot.bias : Vector::Zero(c);
    out.bias = alpha == 0.0 ? bz : alpha == 1.0 ? bl : Vector(alpha * bl + (1.0 - alpha) * bz);
  }
  return out;
}

double prior_alpha(std::size_t shots) {
  if (shots < 1) throw InvalidArgument("shot count must be >= 1");
  return std::min(0.05 * static_cast<double>(shots), 1.0);
}

WeightMatrix prior_injected_weights(const WeightMatrix& learned, const WeightMatrix& zero_shot, std::size_t shots) {
  return interpolate(learned, zero_shot, prior_alpha(shots));
}

double evaluate_accuracy(const WeightMatrix& w, const Matrix& features, const LabelVector& labels) {
  return accuracy(w, features, labels);
}

std::vector<double> standard_alpha_grid() {
  return {0.0,    0.0001, 0.0002, 0.0004, 0.0008, 0.0016, 0.0032, 0.0063, 0.0126, 0.0251, 0.0501,
          0.1,    0.2,    0.3,    0.4,    0.5,    0.6,    0.7,    0.8,    0.9,    1.0};
}

std::vector<double> uniform_alpha_grid() {
  std::vector<double> grid(21);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = static_cast<double>(k) / 20.0;
  return grid;
}

FrontierCurve frontier_sweep(const WeightMatrix& learned, const WeightMatrix& zero_shot, const EvalSet& id,
                             const std::vector<EvalSet>& ood, std::vector<double> alphas, unsigned threads) {
  if (alphas.empty()) throw InvalidArgument("alpha grid is empty");
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("alpha values must lie in [0, 1]");
  std::sort(alphas.begin(), alphas.end());
  auto check = [](const EvalSet& s) {
    if (!s.features || !s.labels) throw InvalidArgument("missing dataset \"" + s.name + "\"");
    if (s.labels->empty()) throw InvalidArgument("dataset \"" + s.name + "\" is empty");
  };
  check(id);
  for (const auto& s : ood) check(s);

  FrontierCurve curve;
  curve.id_name = id.name;
  for (const auto& s : ood) curve.ood_names.push_back(s.name);
  curve.rows.resize(alphas.size());

  std::vector<const EvalSet*> sets{&id};
  for (const auto& s : ood) sets.push_back(&s);
  const std::size_t per_alpha = sets.size();
  std::vector<double> results(alphas.size() * per_alpha);
  std::vector<WeightMatrix> heads;
  heads.reserve(alphas.size());
  for (double a : alphas) heads.push_back(interpolate(learned, zero_shot, a));

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task; (task = next.fetch_add(1)) < results.size();) {
      const EvalSet& s = *sets[task % per_alpha];
      results[task] = evaluate_accuracy(heads[task / per_alpha], *s.features, *s.labels);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(results.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t a = 0; a < alphas.size(); ++a) {
    FrontierRow& row = curve.rows[a];
    row.alpha = alphas[a];
    row.id_accuracy = results[a * per_alpha];
    row.ood_accuracy.assign(results.begin() + static_cast<std::ptrdiff_t>(a * per_alpha + 1),
                            results.begin() + static_cast<std::ptrdiff_t>((a + 1) * per_alpha));
    row.ood_mean = row.ood_accuracy.empty()
                       ? 0.0
                       : std::accumulate(row.ood_accuracy.begin(), row.ood_accuracy.end(), 0.0) /
                             static_cast<double>(row.ood_accuracy.size());
  }
  return curve;
}

std::string frontier_to_csv(const FrontierCurve& curve) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "alpha,id_acc";
  for (const auto& name : curve.ood_names) out << ',' << name << "_acc";
  out << ",ood_mean\n";
  for (const auto& row : curve.rows) {
    out << row.alpha << ',' << row.id_accuracy;
    for (double v : row.ood_accuracy) out << ',' << v;
    out << ',' << row.ood_mean << '\n';
  }
  return out.str();
}

nlohmann::json frontier_to_json(const FrontierCurve& curve) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : curve.rows) {
    nlohmann::json ood = nlohmann::json::object();
    for (std::size_t k = 0; k < curve.ood_names.size(); ++k) ood[curve.ood_names[k]] = row.ood_accuracy[k];
    rows.push_back({{"alpha", row.alpha}, {"id_acc", row.id_accuracy}, {"ood_acc", ood}, {"ood_mean", row.ood_mean}});
  }
  return {{"id_dataset", curve.id_name}, {"ood_datasets", curve.ood_names}, {"rows", rows}};
}

std::string feature_text(const DescriptorSet& descriptors, std::size_t j) {
  const auto& layout = descriptors.layout;
  if (j < layout.num_descriptors()) {
    const std::size_t c = layout.class_of(j);
    return descriptors.classes[c].descriptors[j - layout.begin(c)];
  }
  const std::size_t c = j - layout.num_descriptors();
  if (c >= layout.num_classes()) throw InvalidArgument("feature index " + std::to_string(j) + " out of range");
  const std::string& name = descriptors.classes[c].name;
  if (descriptors.templates.empty()) return name;
  std::string text = descriptors.templates.front();
  const auto pos = text.find("{}");
  return pos == std::string::npos ? text + " " + name : text.replace(pos, 2, name);
}

FeatureReport top_features(const WeightMatrix& w, const DescriptorSet& descriptors, std::size_t k) {
  const std::size_t m = descriptors.layout.num_descriptors();
  const std::size_t c = descriptors.layout.num_classes();
  if (w.space == FeatureSpace::avd) {
    if (w.num_features() != m + c) throw ShapeError("avd head needs M + |C| = " + std::to_string(m + c) + " features");
  } else if (w.space == FeatureSpace::vd) {
    if (w.num_features() != m) throw ShapeError("vd head needs M = " + std::to_string(m) + " features");
  } else {
    throw InvalidArgument("feature report needs an avd or vd head, got " + std::string(to_string(w.space)));
  }
  if (w.num_classes() != c) throw ShapeError("head has " + std::to_string(w.num_classes()) + " classes, descriptors " +
                                             std::to_string(c));

  FeatureReport report;
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < w.num_features(); ++j)
      if (w.weights(static_cast<Eigen::Index>(cls), static_cast<Eigen::Index>(j)) != 0.0) idx.push_back(j);
    const auto row = w.weights.row(static_cast<Eigen::Index>(cls));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return row(static_cast<Eigen::Index>(a)) > row(static_cast<Eigen::Index>(b));
    });
    if (idx.size() > k) idx.resize(k);
    ClassFeatures entry{descriptors.classes[cls].name, {}};
    for (std::size_t j : idx) entry.top.push_back({j, feature_text(descriptors, j), row(static_cast<Eigen::Index>(j))});
    report.classes.push_back(std::move(entry));
  }
  return report;
}

nlohmann::json feature_report_to_json(const FeatureReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.classes) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& f : c.top) top.push_back({{"index", f.index}, {"text", f.text}, {"coefficient", f.coefficient}});
    classes.push_back({{"class", c.class_name}, {"top", top}});
  }
  return {{"classes", classes}};
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string feature_report_to_csv(const FeatureReport& report) {
  std::ostringstream out;
  out << std::setprecision(17) << "class,rank,index,coefficient,text\n";
  for (const auto& c : report.classes)
    for (std::size_t r = 0; r < c.top.size(); ++r)
      out << csv_quote(c.class_name) << ',' << r + 1 << ',' << c.top[r].index << ',' << c.top[r].coefficient << ','
          << csv_quote(c.top[r].text) << '\n';
  return out.str();
}

double rank_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) throw InvalidArgument("AUC needs two nonempty groups");
  const std::size_t np = positives.size();
  const std::size_t total = np + negatives.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(total);
  for (double v : positives) all.emplace_back(v, true);
  for (double v : negatives) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Sum of (average, 1-based) ranks of the positives; doubled to stay integral.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j < total && all[j].first == all[i].first) ++j;
    const std::uint64_t twice_avg = (i + 1) + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) twice_rank_sum += twice_avg;
    i = j;
  }
  // U = R - np (np + 1) / 2, AUC = U / (np * nn).
  const std::uint64_t twice_u = twice_rank_sum - np * (np + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(np) * static_cast<double>(negatives.size()));
}

SeparationStats separation_probe(const std::vector<Matrix>& images_by_class, const Matrix& prompts,
                                 const std::vector<std::string>& prompt_names, std::size_t bins) {
  if (images_by_class.empty()) throw InvalidArgument("separation probe needs at least one class");
  if (bins == 0) throw InvalidArgument("histogram needs at least one bin");
  if (!prompt_names.empty() && prompt_names.size() != static_cast<std::size_t>(prompts.rows()))
    throw ShapeError("prompt name count does not match prompt rows");
  for (std::size_t c = 0; c < images_by_class.size(); ++c) {
    if (images_by_class[c].rows() == 0) throw InvalidArgument("class " + std::to_string(c) + " has no images");
    if (images_by_class[c].cols() != prompts.cols())
      throw ShapeError("class " + std::to_string(c) + " embedding width does not match prompt width");
  }

  SeparationStats stats;
  for (Eigen::Index p = 0; p < prompts.rows(); ++p) {
    PromptSeparation sep;
    sep.prompt = prompt_names.empty() ? "prompt" + std::to_string(p) : prompt_names[static_cast<std::size_t>(p)];
    std::vector<std::vector<double>> sims;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& z : images_by_class) {
      const Vector s = z * prompts.row(p).transpose();
      sims.emplace_back(s.data(), s.data() + s.size());
      lo = std::min(lo, s.minCoeff());
      hi = std::max(hi, s.maxCoeff());
    }
    if (hi == lo) hi = lo + 1e-12;
    for (std::size_t b = 0; b <= bins; ++b)
      sep.bin_edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));

    for (const auto& s : sims) {
      ClassSimilarity cs;
      const double n = static_cast<double>(s.size());
      cs.mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : s) ss += (v - cs.mean) * (v - cs.mean);
      cs.stddev = std::sqrt(ss / n);
      cs.histogram.assign(bins, 0);
      for (double v : s) {
        auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
        cs.histogram[std::min(b, bins - 1)] += 1;
      }
      sep.classes.push_back(std::move(cs));
    }
    for (std::size_t a = 0; a < sims.size(); ++a)
      for (std::size_t b = a + 1; b < sims.size(); ++b) sep.pairs.push_back({a, b, rank_auc(sims[a], sims[b])});
    stats.prompts.push_back(std::move(sep));
  }
  return stats;
}

nlohmann::json separation_to_json(const SeparationStats& stats, const std::vector<std::string>& class_names) {
  auto name_of = [&](std::size_t c) { return c < class_names.size() ? class_names[c] : std::to_string(c); };
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& p : stats.prompts) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < p.classes.size(); ++c)
      classes.push_back({{"class", name_of(c)},
                         {"mean", p.classes[c].mean},
                         {"std", p.classes[c].stddev},
                         {"histogram", p.classes[c].histogram}});
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& pr : p.pairs)
      pairs.push_back({{"class_a", name_of(pr.class_a)}, {"class_b", name_of(pr.class_b)}, {"auc", pr.auc}});
    prompts.push_back({{"prompt", p.prompt}, {"bin_edges", p.bin_edges}, {"classes", classes}, {"pairs", pairs}});
  }
  return {{"prompts", prompts}};
}

}  // namespace avd
