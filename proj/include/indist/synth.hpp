#pragma once

// Synthetic data with known ground truth. Four generators:
//   side_info          latent coin U moves outcome and expert score together,
//                      planting a within-cell covariance of exactly `effect`
//   tree_realizable    E[Y|X] is a random depth-3 regression tree
//   sufficiency        outcome and expert score depend on X only through a
//                      binary stump, so they are independent given its value
//   adversarial_groups two duplicate-feature groups with split outcome means,
//                      the impossibility construction
// Every generator is a pure function of its spec; the sidecar records the
// planted quantities a test needs to check recovery against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "indist/boosting.hpp"
#include "indist/dataset.hpp"
#include "indist/errors.hpp"
#include "indist/rng.hpp"

namespace indist {

enum class Generator { side_info, tree_realizable, sufficiency, adversarial_groups };

inline const char* generator_name(Generator g) {
  switch (g) {
    case Generator::side_info: return "side_info";
    case Generator::tree_realizable: return "tree_realizable";
    case Generator::sufficiency: return "sufficiency";
    case Generator::adversarial_groups: return "adversarial_groups";
  }
  return "side_info";
}

inline Generator generator_from_name(const std::string& name) {
  if (name == "side_info") return Generator::side_info;
  if (name == "tree_realizable") return Generator::tree_realizable;
  if (name == "sufficiency") return Generator::sufficiency;
  if (name == "adversarial_groups") return Generator::adversarial_groups;
  fail(errc::bad_spec, "unknown generator '" + name + "'");
}

struct SynthSpec {
  Generator generator = Generator::side_info;
  std::size_t n = 1000;
  std::size_t d = 2;
  double effect = 0.1;   // planted covariance / group-mean offset
  std::uint64_t seed = 0;
  int k_cells = 4;       // ground-truth cell count (side_info buckets)
  int m_models = 5;      // finite-class size written to the prediction matrix
  double noise = -1.0;   // negative: per-generator default
};

struct SynthOutput {
  Dataset dataset;
  PredictionMatrix preds;
  nlohmann::json sidecar;
};

namespace detail {

inline void base_spec_checks(const SynthSpec& spec) {
  if (spec.n < 2) fail(errc::bad_spec, "n must be >= 2");
  if (spec.d < 1) fail(errc::bad_spec, "d must be >= 1");
  if (spec.m_models < 1) fail(errc::bad_spec, "m_models must be >= 1");
  if (spec.effect < 0.0) fail(errc::bad_spec, "effect must be >= 0");
}

inline void init_ids_and_names(Dataset& ds, std::size_t n, std::size_t d) {
  ds.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.row_ids[i] = std::to_string(i);
  ds.feature_names.resize(d);
  for (std::size_t j = 0; j < d; ++j) ds.feature_names[j] = "x" + std::to_string(j);
}

inline std::vector<std::string> model_names(int m) {
  std::vector<std::string> names(m);
  for (int j = 0; j < m; ++j) names[j] = "f" + std::to_string(j);
  return names;
}

// Complete random tree of the given depth. Thresholds split the surviving
// interval of the chosen feature in its middle band so every leaf cell keeps
// probability mass under uniform features.
inline int grow_random_tree(RegressionTree& tree, Rng& rng, int depth,
                            std::vector<std::pair<double, double>>& ranges,
                            const std::vector<double>& leaf_values,
                            std::size_t& next_leaf) {
  int idx = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (depth == 0) {
    tree.nodes[idx].feature = -1;
    tree.nodes[idx].value = leaf_values[next_leaf++];
    return idx;
  }
  int f = static_cast<int>(rng.index(ranges.size()));
  auto [lo, hi] = ranges[f];
  double t = lo + (hi - lo) * rng.uniform(0.3, 0.7);
  tree.nodes[idx].feature = f;
  tree.nodes[idx].threshold = t;
  auto saved = ranges[f];
  ranges[f] = {lo, t};
  tree.nodes[idx].left = grow_random_tree(tree, rng, depth - 1, ranges, leaf_values, next_leaf);
  ranges[f] = {t, hi};
  tree.nodes[idx].right = grow_random_tree(tree, rng, depth - 1, ranges, leaf_values, next_leaf);
  ranges[f] = saved;
  return idx;
}

inline RegressionTree random_tree(Rng& rng, int depth, std::size_t d,
                                  const std::vector<double>& leaf_values) {
  RegressionTree tree;
  std::vector<std::pair<double, double>> ranges(d, {0.0, 1.0});
  std::size_t next_leaf = 0;
  grow_random_tree(tree, rng, depth, ranges, leaf_values, next_leaf);
  return tree;
}

}  // namespace detail

// Latent side channel: U = ±1 hidden from X shifts both Y and the expert
// score by sqrt(effect), so Cov(Y, expert | X) = effect exactly. The affine
// parts keep every value inside [0,1] for any effect up to the 0.15 cap.
inline SynthOutput gen_side_info(const SynthSpec& spec) {
  detail::base_spec_checks(spec);
  if (spec.effect > 0.15)
    fail(errc::bad_spec, "effect above 0.15 pushes outcomes outside [0,1]");
  if (spec.k_cells < 1) fail(errc::bad_spec, "k_cells must be >= 1");
  double amp = std::sqrt(spec.effect);
  Rng rng(derive_seed(spec.seed, 0xA1));

  SynthOutput out;
  Dataset& ds = out.dataset;
  ds.features = Matrix(spec.n, spec.d);
  ds.outcome.resize(spec.n);
  ds.expert = std::vector<double>(spec.n);
  detail::init_ids_and_names(ds, spec.n, spec.d);

  std::vector<double> e_y_given_x(spec.n), e_y_given_xu(spec.n);
  std::vector<int> true_cell(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.d; ++j) ds.features.at(i, j) = rng.uniform();
    double x0 = ds.features.at(i, 0);
    double u = rng.sign();
    double base_y = 0.4 + 0.2 * x0;
    double base_e = 0.45 + 0.1 * x0;
    ds.outcome[i] = base_y + amp * u + rng.uniform(-0.01, 0.01);
    (*ds.expert)[i] = base_e + amp * u + rng.uniform(-0.02, 0.02);
    e_y_given_x[i] = base_y;
    e_y_given_xu[i] = base_y + amp * u;
    true_cell[i] = std::min(spec.k_cells - 1,
                            static_cast<int>(x0 * static_cast<double>(spec.k_cells)));
  }

  out.preds.preds = Matrix(spec.n, spec.m_models);
  out.preds.model_names = detail::model_names(spec.m_models);
  nlohmann::json coefs = nlohmann::json::array();
  for (int j = 0; j < spec.m_models; ++j) {
    double c0 = rng.uniform(0.35, 0.65);
    double c1 = rng.uniform(-0.3, 0.3);
    double c2 = rng.uniform(-0.3, 0.3);
    coefs.push_back({c0, c1, c2});
    std::size_t other = spec.d > 1 ? 1 : 0;
    for (std::size_t i = 0; i < spec.n; ++i) {
      double v = c0 + c1 * ds.features.at(i, 0) + c2 * ds.features.at(i, other);
      out.preds.preds.at(i, j) = std::clamp(v, 0.0, 1.0);
    }
  }

  out.sidecar["generator"] = "side_info";
  out.sidecar["planted_cov"] = spec.effect;
  out.sidecar["e_y_given_x"] = e_y_given_x;
  out.sidecar["e_y_given_xu"] = e_y_given_xu;
  out.sidecar["true_cell"] = true_cell;
  out.sidecar["model_coefs"] = coefs;
  return out;
}

// E[Y|X] realizable by a depth-3 tree; models are independent shallow trees.
inline SynthOutput gen_tree_realizable(const SynthSpec& spec) {
  detail::base_spec_checks(spec);
  double noise = spec.noise < 0.0 ? 0.05 : spec.noise;
  if (noise > 0.05)
    fail(errc::bad_spec, "noise above 0.05 pushes outcomes outside [0,1]");
  Rng rng(derive_seed(spec.seed, 0xA2));

  std::vector<double> leaf_values(8);
  for (int l = 0; l < 8; ++l)
    leaf_values[l] = 0.05 + 0.9 * static_cast<double>(l) / 7.0;
  rng.shuffle(leaf_values);
  RegressionTree truth = detail::random_tree(rng, 3, spec.d, leaf_values);

  SynthOutput out;
  Dataset& ds = out.dataset;
  ds.features = Matrix(spec.n, spec.d);
  ds.outcome.resize(spec.n);
  detail::init_ids_and_names(ds, spec.n, spec.d);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.d; ++j) ds.features.at(i, j) = rng.uniform();
    ds.outcome[i] = truth.predict_row(ds.features.row(i)) + rng.uniform(-noise, noise);
  }

  out.preds.preds = Matrix(spec.n, spec.m_models);
  out.preds.model_names = detail::model_names(spec.m_models);
  for (int j = 0; j < spec.m_models; ++j) {
    std::vector<double> lv(4);
    for (double& v : lv) v = rng.uniform();
    RegressionTree t = detail::random_tree(rng, 2, spec.d, lv);
    for (std::size_t i = 0; i < spec.n; ++i)
      out.preds.preds.at(i, j) = t.predict_row(ds.features.row(i));
  }

  out.sidecar["generator"] = "tree_realizable";
  out.sidecar["noise"] = noise;
  out.sidecar["truth_tree"] = tree_to_json(truth);
  out.sidecar["leaf_values"] = leaf_values;
  return out;
}

// Y and the expert score both depend on X only through the stump
// s(x) = 1(x0 > 0.5), with independent randomness, so Y and the score are
// independent given s. The first model IS the stump; the rest are random
// stumps on other coordinates.
inline SynthOutput gen_sufficiency(const SynthSpec& spec) {
  detail::base_spec_checks(spec);
  Rng rng(derive_seed(spec.seed, 0xA3));

  SynthOutput out;
  Dataset& ds = out.dataset;
  ds.features = Matrix(spec.n, spec.d);
  ds.outcome.resize(spec.n);
  ds.expert = std::vector<double>(spec.n);
  detail::init_ids_and_names(ds, spec.n, spec.d);

  out.preds.preds = Matrix(spec.n, spec.m_models);
  out.preds.model_names = detail::model_names(spec.m_models);
  std::vector<int> stump_feature(spec.m_models);
  std::vector<double> stump_threshold(spec.m_models);
  stump_feature[0] = 0;
  stump_threshold[0] = 0.5;
  for (int j = 1; j < spec.m_models; ++j) {
    stump_feature[j] = static_cast<int>(rng.index(spec.d));
    stump_threshold[j] = rng.uniform(0.2, 0.8);
  }

  std::vector<int> s_value(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.d; ++j) ds.features.at(i, j) = rng.uniform();
    int s = ds.features.at(i, 0) > 0.5 ? 1 : 0;
    s_value[i] = s;
    double p = 0.35 + 0.3 * static_cast<double>(s);
    ds.outcome[i] = rng.bernoulli(p) ? 1.0 : 0.0;
    (*ds.expert)[i] =
        std::clamp(p + rng.uniform(-0.1, 0.1), 0.0, 1.0);
    for (int j = 0; j < spec.m_models; ++j)
      out.preds.preds.at(i, j) =
          ds.features.at(i, stump_feature[j]) > stump_threshold[j] ? 1.0 : 0.0;
  }

  out.sidecar["generator"] = "sufficiency";
  out.sidecar["p_given_s"] = {0.35, 0.65};
  out.sidecar["s_value"] = s_value;
  out.sidecar["stump_features"] = stump_feature;
  out.sidecar["stump_thresholds"] = stump_threshold;
  return out;
}

// Two groups with identical features inside each group and outcome means
// 0.5 - effect and 0.5 + effect; the single model predicts the blended 0.5.
// Extra feature columns copy x0 so rows stay exact duplicates within groups.
inline SynthOutput gen_adversarial_groups(const SynthSpec& spec) {
  detail::base_spec_checks(spec);
  if (spec.effect > 0.5)
    fail(errc::bad_spec, "effect above 0.5 pushes group means outside [0,1]");
  Rng rng(derive_seed(spec.seed, 0xA4));

  SynthOutput out;
  Dataset& ds = out.dataset;
  ds.features = Matrix(spec.n, spec.d);
  ds.outcome.resize(spec.n);
  detail::init_ids_and_names(ds, spec.n, spec.d);

  std::vector<double> group(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) group[i] = i < spec.n / 2 ? 0.0 : 1.0;
  rng.shuffle(group);
  double p0 = 0.5 - spec.effect, p1 = 0.5 + spec.effect;
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t j = 0; j < spec.d; ++j) ds.features.at(i, j) = group[i];
    ds.outcome[i] = rng.bernoulli(group[i] == 1.0 ? p1 : p0) ? 1.0 : 0.0;
  }

  out.preds.preds = Matrix(spec.n, 1);
  out.preds.model_names = {"f0"};
  for (std::size_t i = 0; i < spec.n; ++i) out.preds.preds.at(i, 0) = 0.5;

  out.sidecar["generator"] = "adversarial_groups";
  out.sidecar["group_means"] = {p0, p1};
  out.sidecar["expected_gap"] = spec.effect * spec.effect;
  out.sidecar["group"] = group;
  return out;
}

inline SynthOutput gen_synthetic(const SynthSpec& spec) {
  switch (spec.generator) {
    case Generator::side_info: return gen_side_info(spec);
    case Generator::tree_realizable: return gen_tree_realizable(spec);
    case Generator::sufficiency: return gen_sufficiency(spec);
    case Generator::adversarial_groups: return gen_adversarial_groups(spec);
  }
  fail(errc::bad_spec, "unknown generator");
}

}  // namespace indist
