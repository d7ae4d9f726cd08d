#pragma once

// Multicalibration by boosting over shallow regression trees. fit_tree is the
// squared-error oracle: greedy CART, splits chosen from midpoints between
// consecutive sorted distinct feature values, leaves predicting the weighted
// mean. An impure node always takes the best candidate split, even when the
// immediate SSE reduction is zero, since parity-like targets only separate a
// level deeper; pure nodes stay leaves. The boosting loop bins the current
// predictor h into the eleven level
// sets {0}, (0,.1], ..., (.9,1], refits the oracle inside each bin, and
// replaces h there whenever the refit improves within-bin MSE by more than
// alpha^2. On convergence no bin admits such an improvement, which is
// precisely the premise under which the level sets are (2*alpha)-calibrated
// against the tree class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "indist/covariance.hpp"
#include "indist/dataset.hpp"
#include "indist/errors.hpp"

namespace indist {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf prediction, clamped to [0,1]

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // node 0 is the root

  double predict_row(const double* x) const {
    int at = 0;
    while (!nodes[at].is_leaf())
      at = (x[nodes[at].feature] <= nodes[at].threshold) ? nodes[at].left
                                                         : nodes[at].right;
    return nodes[at].value;
  }

  int depth() const { return depth_from(0); }

  int depth_from(int at) const {
    if (nodes[at].is_leaf()) return 0;
    return 1 + std::max(depth_from(nodes[at].left), depth_from(nodes[at].right));
  }
};

namespace detail {

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double reduction = 0.0;
};

// Best split over all (feature, midpoint) candidates. Maximizes the weighted
// SSE reduction; scanning features in index order and thresholds ascending
// makes the argmax deterministic under ties (earliest candidate wins). The
// caller decides whether splitting is worthwhile at all.
inline SplitChoice best_split(const Matrix& X, const std::vector<double>& y,
                              const std::vector<double>& w,
                              const std::vector<std::size_t>& rows) {
  SplitChoice best;
  double w_total = 0.0, s_total = 0.0;
  for (std::size_t i : rows) {
    w_total += w[i];
    s_total += w[i] * y[i];
  }
  if (!(w_total > 0.0)) return best;
  double parent_score = s_total * s_total / w_total;

  std::vector<std::pair<double, std::size_t>> order(rows.size());
  for (std::size_t j = 0; j < X.cols; ++j) {
    for (std::size_t r = 0; r < rows.size(); ++r)
      order[r] = {X.at(rows[r], j), rows[r]};
    std::sort(order.begin(), order.end());
    double w_left = 0.0, s_left = 0.0;
    for (std::size_t r = 0; r + 1 < order.size(); ++r) {
      std::size_t i = order[r].second;
      w_left += w[i];
      s_left += w[i] * y[i];
      double v = order[r].first, next = order[r + 1].first;
      if (v == next) continue;  // split only between distinct values
      double w_right = w_total - w_left, s_right = s_total - s_left;
      if (!(w_left > 0.0) || !(w_right > 0.0)) continue;
      double reduction =
          s_left * s_left / w_left + s_right * s_right / w_right - parent_score;
      if (!best.found || reduction > best.reduction) {
        double mid = v / 2.0 + next / 2.0;
        if (!(v <= mid && mid < next)) mid = v;  // adjacent floats
        best.found = true;
        best.feature = static_cast<int>(j);
        best.threshold = mid;
        best.reduction = reduction;
      }
    }
  }
  return best;
}

inline int build_tree_node(RegressionTree& tree, const Matrix& X,
                           const std::vector<double>& y,
                           const std::vector<double>& w,
                           const std::vector<std::size_t>& rows, int depth_left) {
  int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  double w_total = 0.0, s_total = 0.0, q_total = 0.0;
  for (std::size_t i : rows) {
    w_total += w[i];
    s_total += w[i] * y[i];
    q_total += w[i] * y[i] * y[i];
  }
  double mean = w_total > 0.0 ? s_total / w_total : 0.0;
  tree.nodes[id].value = std::clamp(mean, 0.0, 1.0);
  if (depth_left <= 0 || rows.size() < 2) return id;
  // Pure nodes stay leaves. Impure ones split on the argmax candidate even at
  // zero immediate reduction: parity-style targets only pay off a level down.
  double impurity = q_total - (w_total > 0.0 ? s_total * s_total / w_total : 0.0);
  if (!(impurity > 1e-12)) return id;
  SplitChoice split = best_split(X, y, w, rows);
  if (!split.found) return id;
  std::vector<std::size_t> left_rows, right_rows;
  for (std::size_t i : rows)
    (X.at(i, split.feature) <= split.threshold ? left_rows : right_rows).push_back(i);
  if (left_rows.empty() || right_rows.empty()) return id;
  tree.nodes[id].feature = split.feature;
  tree.nodes[id].threshold = split.threshold;
  int l = build_tree_node(tree, X, y, w, left_rows, depth_left - 1);
  tree.nodes[id].left = l;
  int r = build_tree_node(tree, X, y, w, right_rows, depth_left - 1);
  tree.nodes[id].right = r;
  return id;
}

inline RegressionTree fit_tree_rows(const Matrix& X, const std::vector<double>& y,
                                    const std::vector<double>& w,
                                    const std::vector<std::size_t>& rows,
                                    int max_depth) {
  if (rows.empty()) fail(errc::empty_input, "fit_tree: no rows");
  if (max_depth < 0) fail(errc::bad_param, "fit_tree: negative depth");
  RegressionTree tree;
  tree.nodes.reserve(64);
  build_tree_node(tree, X, y, w, rows, max_depth);
  return tree;
}

}  // namespace detail

inline RegressionTree fit_tree(const Matrix& X, const std::vector<double>& y,
                               const std::vector<double>& w, int max_depth) {
  if (X.rows != y.size() || y.size() != w.size())
    fail(errc::length_mismatch, "fit_tree: input lengths differ");
  std::vector<std::size_t> rows(X.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return detail::fit_tree_rows(X, y, w, rows, max_depth);
}

// ---------------------------------------------------------------------------
// level-set binning and the boosting loop

constexpr int kLevelSetBins = 11;  // {0}, (0,.1], (.1,.2], ..., (.9,1]

inline int level_set_bin(double v) {
  if (v <= 0.0) return 0;
  // guard against 10*v landing one ulp above an edge (e.g. 0.2*10)
  int b = static_cast<int>(std::ceil(10.0 * v - 1e-9));
  return std::clamp(b, 1, 10);
}

struct BoostConfig {
  double alpha = 0.05;
  int max_rounds = 200;
  std::size_t min_cell = 10;  // bins below this are frozen, never refit
  std::uint64_t seed = 0;
};

struct BoostStage {
  int bin = 0;  // level set the correction applied to
  RegressionTree tree;
};

struct BoostedPredictor {
  double init_value = 0.0;  // h starts at mean(Y)
  std::vector<BoostStage> stages;
  std::vector<double> bin_edges;   // 0, 0.1, ..., 1.0 (bin 0 is the point {0})
  std::vector<double> final_values;  // h on the training rows
  int rounds = 0;      // accepted updates
  bool converged = false;
  std::size_t n_features = 0;

  // Replays training: start at init_value, apply each stage's tree wherever
  // the current value falls in that stage's bin. Training rows reproduce
  // final_values exactly.
  std::vector<double> predict(const Matrix& features) const {
    if (features.cols != n_features)
      fail(errc::dimension_mismatch,
           "predict: expected " + std::to_string(n_features) + " features, got " +
               std::to_string(features.cols));
    std::vector<double> h(features.rows, init_value);
    for (const auto& stage : stages)
      for (std::size_t i = 0; i < features.rows; ++i)
        if (level_set_bin(h[i]) == stage.bin)
          h[i] = std::clamp(stage.tree.predict_row(features.row(i)), 0.0, 1.0);
    return h;
  }
};

inline BoostedPredictor fit_boosted(const Dataset& ds, const BoostConfig& config) {
  if (ds.n() == 0) fail(errc::empty_input, "fit_boosted: empty dataset");
  if (!(config.alpha > 0.0)) fail(errc::bad_param, "alpha must be > 0");
  if (config.max_rounds < 1) fail(errc::bad_param, "max_rounds must be >= 1");
  std::size_t n = ds.n();
  std::size_t min_cell = std::max<std::size_t>(config.min_cell, 1);
  double alpha_sq = config.alpha * config.alpha;

  BoostedPredictor model;
  model.n_features = ds.d();
  model.bin_edges = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  {
    detail::KahanSum s;
    for (double y : ds.outcome) s.add(y);
    model.init_value = std::clamp(s.value() / static_cast<double>(n), 0.0, 1.0);
  }

  std::vector<double> h(n, model.init_value);
  std::vector<double> weights(n, 1.0);
  std::vector<std::vector<std::size_t>> bins(kLevelSetBins);

  while (true) {
    for (auto& b : bins) b.clear();
    for (std::size_t i = 0; i < n; ++i) bins[level_set_bin(h[i])].push_back(i);

    bool accepted = false;
    for (int b = 0; b < kLevelSetBins && !accepted; ++b) {
      const auto& rows = bins[b];
      if (rows.size() < min_cell) continue;  // frozen: guarantee is vacuous here
      RegressionTree tree = detail::fit_tree_rows(ds.features, ds.outcome, weights,
                                                  rows, 5);
      double mse_h = 0.0, mse_t = 0.0;
      for (std::size_t i : rows) {
        double d_h = h[i] - ds.outcome[i];
        double d_t = std::clamp(tree.predict_row(ds.features.row(i)), 0.0, 1.0) -
                     ds.outcome[i];
        mse_h += d_h * d_h;
        mse_t += d_t * d_t;
      }
      double n_bin = static_cast<double>(rows.size());
      if ((mse_h - mse_t) / n_bin > alpha_sq) {
        for (std::size_t i : rows)
          h[i] = std::clamp(tree.predict_row(ds.features.row(i)), 0.0, 1.0);
        model.stages.push_back({b, std::move(tree)});
        ++model.rounds;
        accepted = true;
      }
    }
    if (!accepted) {
      model.converged = true;
      break;
    }
    if (model.rounds >= config.max_rounds) break;  // NoConvergence, still usable
  }
  model.final_values = std::move(h);
  return model;
}

// Cells are the nonempty level-set bins of h on the given rows, in bin order.
inline Partition level_set_partition(const BoostedPredictor& model,
                                     const Dataset& ds) {
  std::vector<double> h = model.predict(ds.features);
  std::vector<int> bin_of(h.size());
  std::vector<std::size_t> count(kLevelSetBins, 0);
  for (std::size_t i = 0; i < h.size(); ++i) {
    bin_of[i] = level_set_bin(h[i]);
    ++count[bin_of[i]];
  }
  std::vector<int> cell_of_bin(kLevelSetBins, -1);
  int k = 0;
  for (int b = 0; b < kLevelSetBins; ++b)
    if (count[b] > 0) cell_of_bin[b] = k++;
  std::vector<int> assignment(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) assignment[i] = cell_of_bin[bin_of[i]];
  return make_partition(std::move(assignment), k, Provenance::boost);
}

// ---------------------------------------------------------------------------
// JSON serialization (tree structures + bin edges) for reuse by predict

inline nlohmann::json tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) {
      nodes.push_back({{"value", node.value}});
    } else {
      nodes.push_back({{"feature", node.feature},
                       {"threshold", node.threshold},
                       {"left", node.left},
                       {"right", node.right}});
    }
  }
  return {{"nodes", nodes}};
}

inline RegressionTree tree_from_json(const nlohmann::json& j) {
  RegressionTree tree;
  for (const auto& jn : j.at("nodes")) {
    TreeNode node;
    if (jn.contains("feature")) {
      node.feature = jn.at("feature").get<int>();
      node.threshold = jn.at("threshold").get<double>();
      node.left = jn.at("left").get<int>();
      node.right = jn.at("right").get<int>();
    } else {
      node.value = jn.at("value").get<double>();
    }
    tree.nodes.push_back(node);
  }
  if (tree.nodes.empty()) fail(errc::parse_error, "tree JSON has no nodes");
  return tree;
}

inline nlohmann::json boosted_to_json(const BoostedPredictor& model) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& stage : model.stages)
    stages.push_back({{"bin", stage.bin}, {"tree", tree_to_json(stage.tree)}});
  return {{"init_value", model.init_value},
          {"stages", stages},
          {"bin_edges", model.bin_edges},
          {"rounds", model.rounds},
          {"converged", model.converged},
          {"n_features", model.n_features}};
}

inline BoostedPredictor boosted_from_json(const nlohmann::json& j) {
  BoostedPredictor model;
  model.init_value = j.at("init_value").get<double>();
  for (const auto& js : j.at("stages"))
    model.stages.push_back(
        {js.at("bin").get<int>(), tree_from_json(js.at("tree"))});
  model.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  model.rounds = j.at("rounds").get<int>();
  model.converged = j.at("converged").get<bool>();
  model.n_features = j.at("n_features").get<std::size_t>();
  return model;
}

}  // namespace indist
