#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "indist/boosting.hpp"
#include "indist/rng.hpp"
#include "indist/synth.hpp"
#include "oracles.hpp"

using namespace indist;

namespace {

Matrix random_features(Rng& rng, std::size_t n, std::size_t d) {
  Matrix X(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) X.at(i, j) = rng.uniform(0.0, 1.0);
  return X;
}

std::vector<double> unit_weights(std::size_t n) {
  return std::vector<double>(n, 1.0);
}

// rows of the full matrix copied into a standalone matrix, same order
Matrix submatrix(const Matrix& X, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), X.cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < X.cols; ++j) out.at(r, j) = X.at(rows[r], j);
  return out;
}

double subset_mse(const std::vector<double>& pred, const std::vector<double>& y,
                  const std::vector<std::size_t>& rows) {
  double acc = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double d = pred[r] - y[rows[r]];
    acc += d * d;
  }
  return acc / static_cast<double>(rows.size());
}

template <typename Fn>
std::optional<errc> thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const KitError& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("constant target fits as a single leaf", "[boosting]") {
  Rng rng(11);
  Matrix X = random_features(rng, 5, 2);
  std::vector<double> y(5, 0.4);
  RegressionTree tree = fit_tree(X, y, unit_weights(5), 3);
  REQUIRE(tree.nodes.size() == 1);
  REQUIRE(tree.nodes[0].is_leaf());
  REQUIRE(std::abs(tree.nodes[0].value - 0.4) < 1e-15);
  REQUIRE(tree.depth() == 0);
}

TEST_CASE("depth-two tree resolves the parity pattern exactly", "[boosting]") {
  // no single split reduces SSE here; the cut must still be taken
  Matrix X(4, 2);
  std::vector<double> y = {0.0, 1.0, 1.0, 0.0};
  double pts[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (std::size_t i = 0; i < 4; ++i) {
    X.at(i, 0) = pts[i][0];
    X.at(i, 1) = pts[i][1];
  }
  RegressionTree tree = fit_tree(X, y, unit_weights(4), 2);
  REQUIRE(tree.depth() == 2);
  for (std::size_t i = 0; i < 4; ++i)
    REQUIRE(std::abs(tree.predict_row(X.row(i)) - y[i]) < 1e-15);
}

TEST_CASE("depth-one split matches the exhaustive scan", "[boosting]") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::size_t n = 100, d = 4;
    Matrix X = random_features(rng, n, d);
    std::vector<double> y(n);
    for (auto& v : y) v = rng.uniform(0.0, 1.0);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});

    auto scan = oracle::best_split_scan(X, y, unit_weights(n), rows);
    REQUIRE(scan.found);  // continuous targets always have a strict winner
    RegressionTree tree = fit_tree(X, y, unit_weights(n), 1);
    REQUIRE(tree.depth() == 1);
    REQUIRE(tree.nodes[0].feature == scan.feature);
    REQUIRE(std::abs(tree.nodes[0].threshold - scan.threshold) < 1e-12);

    // leaves carry the side means
    std::vector<double> left, right;
    for (std::size_t i = 0; i < n; ++i)
      (X.at(i, scan.feature) <= scan.threshold ? left : right).push_back(y[i]);
    auto mean = [](const std::vector<double>& v) {
      return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    REQUIRE(std::abs(tree.nodes[tree.nodes[0].left].value - mean(left)) < 1e-10);
    REQUIRE(std::abs(tree.nodes[tree.nodes[0].right].value - mean(right)) < 1e-10);
  }
}

TEST_CASE("tree fitting input validation", "[boosting]") {
  Rng rng(3);
  Matrix X = random_features(rng, 4, 2);
  std::vector<double> y = {0.1, 0.2, 0.3, 0.4};
  REQUIRE(thrown_code([&] { fit_tree(X, {0.1, 0.2}, unit_weights(2), 2); }) ==
          errc::length_mismatch);
  REQUIRE(thrown_code([&] { fit_tree(X, y, unit_weights(3), 2); }) ==
          errc::length_mismatch);
  REQUIRE(thrown_code([&] {
            fit_tree(Matrix(0, 2), {}, {}, 2);
          }) == errc::empty_input);
  REQUIRE(thrown_code([&] { fit_tree(X, y, unit_weights(4), -1); }) ==
          errc::bad_param);
}

TEST_CASE("tree depth never exceeds the requested maximum", "[boosting]") {
  Rng rng(7);
  Matrix X = random_features(rng, 200, 3);
  std::vector<double> y(200);
  for (auto& v : y) v = rng.uniform(0.0, 1.0);
  for (int max_depth = 0; max_depth <= 5; ++max_depth) {
    RegressionTree tree = fit_tree(X, y, unit_weights(200), max_depth);
    REQUIRE(tree.depth() <= max_depth);
  }
  RegressionTree stump_only = fit_tree(X, y, unit_weights(200), 0);
  REQUIRE(stump_only.nodes.size() == 1);
}

TEST_CASE("level-set bin indexing", "[boosting]") {
  REQUIRE(level_set_bin(0.0) == 0);
  REQUIRE(level_set_bin(-0.5) == 0);
  REQUIRE(level_set_bin(1e-12) == 1);
  REQUIRE(level_set_bin(0.05) == 1);
  REQUIRE(level_set_bin(0.15) == 2);
  REQUIRE(level_set_bin(0.95) == 10);
  REQUIRE(level_set_bin(1.0) == 10);
  REQUIRE(level_set_bin(1.5) == 10);
  // exact edges stay in the closed-right bin despite float products like 0.2*10
  for (int k = 1; k <= 10; ++k) REQUIRE(level_set_bin(k / 10.0) == k);
}

TEST_CASE("boosting a constant outcome stops immediately", "[boosting]") {
  Rng rng(21);
  std::size_t n = 50;
  Dataset ds;
  ds.features = random_features(rng, n, 2);
  ds.outcome.assign(n, 0.3);
  ds.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.row_ids[i] = std::to_string(i);
  ds.feature_names = {"x0", "x1"};

  BoostConfig config;
  config.alpha = 0.05;
  BoostedPredictor model = fit_boosted(ds, config);
  REQUIRE(model.rounds == 0);
  REQUIRE(model.converged);
  REQUIRE(model.stages.empty());
  for (double v : model.final_values) REQUIRE(std::abs(v - 0.3) < 1e-12);

  Partition cells = level_set_partition(model, ds);
  REQUIRE(cells.cell_count == 1);
  REQUIRE(cells.cell_sizes[0] == n);
  REQUIRE(cells.provenance == Provenance::boost);
}

TEST_CASE("converged boosting leaves no bin improvable past alpha squared",
          "[boosting]") {
  SynthSpec spec;
  spec.generator = Generator::tree_realizable;
  spec.n = 600;
  spec.d = 3;
  spec.seed = 40;
  SynthOutput synth = gen_synthetic(spec);

  BoostConfig config;
  config.alpha = 0.05;
  config.max_rounds = 400;
  config.min_cell = 1;  // nothing frozen: the guarantee must cover every bin
  BoostedPredictor model = fit_boosted(synth.dataset, config);
  REQUIRE(model.converged);
  REQUIRE(model.rounds >= 1);

  std::vector<std::vector<std::size_t>> bins(kLevelSetBins);
  for (std::size_t i = 0; i < spec.n; ++i)
    bins[level_set_bin(model.final_values[i])].push_back(i);
  for (const auto& rows : bins) {
    if (rows.empty()) continue;
    Matrix sub = submatrix(synth.dataset.features, rows);
    std::vector<double> sub_y(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      sub_y[r] = synth.dataset.outcome[rows[r]];
    RegressionTree refit = fit_tree(sub, sub_y, unit_weights(rows.size()), 5);
    std::vector<double> refit_pred(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      refit_pred[r] = std::clamp(refit.predict_row(sub.row(r)), 0.0, 1.0);
    std::vector<double> h_pred(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
      h_pred[r] = model.final_values[rows[r]];
    double improvement =
        subset_mse(h_pred, synth.dataset.outcome, rows) -
        subset_mse(refit_pred, synth.dataset.outcome, rows);
    REQUIRE(improvement <= config.alpha * config.alpha + 1e-12);
  }
}

TEST_CASE("training error is monotone over accepted rounds", "[boosting]") {
  SynthSpec spec;
  spec.generator = Generator::tree_realizable;
  spec.n = 400;
  spec.d = 3;
  spec.seed = 41;
  SynthOutput synth = gen_synthetic(spec);
  const Dataset& ds = synth.dataset;

  BoostConfig config;
  config.alpha = 0.05;
  BoostedPredictor model = fit_boosted(ds, config);
  REQUIRE(model.rounds >= 1);

  std::vector<double> h(ds.n(), model.init_value);
  auto full_mse = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
      double d = h[i] - ds.outcome[i];
      acc += d * d;
    }
    return acc / static_cast<double>(ds.n());
  };
  double prev = full_mse();
  for (const auto& stage : model.stages) {
    for (std::size_t i = 0; i < ds.n(); ++i)
      if (level_set_bin(h[i]) == stage.bin)
        h[i] = std::clamp(stage.tree.predict_row(ds.features.row(i)), 0.0, 1.0);
    double now = full_mse();
    REQUIRE(now <= prev + 1e-12);
    prev = now;
  }
  for (std::size_t i = 0; i < ds.n(); ++i)
    REQUIRE(h[i] == model.final_values[i]);
}

TEST_CASE("round cap leaves a usable unconverged model", "[boosting]") {
  SynthSpec spec;
  spec.generator = Generator::tree_realizable;
  spec.n = 600;
  spec.d = 3;
  spec.seed = 42;
  SynthOutput synth = gen_synthetic(spec);

  BoostConfig config;
  config.alpha = 0.05;
  config.max_rounds = 1;
  BoostedPredictor model = fit_boosted(synth.dataset, config);
  REQUIRE(model.rounds == 1);
  REQUIRE_FALSE(model.converged);

  std::vector<double> out = model.predict(synth.dataset.features);
  REQUIRE(out.size() == spec.n);
  for (double v : out) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  Partition cells = level_set_partition(model, synth.dataset);
  REQUIRE(cells.n() == spec.n);
}

TEST_CASE("level-set partition enumerates nonempty bins in order", "[boosting]") {
  // replay lands h on {0, 0.05, 0.95} via a handmade stage tree
  BoostedPredictor model;
  model.init_value = 0.05;
  model.n_features = 1;
  model.bin_edges = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  RegressionTree tree;
  tree.nodes.resize(5);
  tree.nodes[0] = {0, 0.25, 1, 2, 0.0};
  tree.nodes[1] = {-1, 0.0, -1, -1, 0.0};   // x0 <= 0.25
  tree.nodes[2] = {0, 0.75, 3, 4, 0.0};
  tree.nodes[3] = {-1, 0.0, -1, -1, 0.05};  // 0.25 < x0 <= 0.75
  tree.nodes[4] = {-1, 0.0, -1, -1, 0.95};  // x0 > 0.75
  model.stages.push_back({level_set_bin(0.05), tree});

  std::size_t n = 9;
  Dataset ds;
  ds.features = Matrix(n, 1);
  double xs[9] = {0.1, 0.5, 0.9, 0.1, 0.5, 0.9, 0.1, 0.5, 0.9};
  for (std::size_t i = 0; i < n; ++i) ds.features.at(i, 0) = xs[i];
  ds.outcome.assign(n, 0.5);
  ds.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.row_ids[i] = std::to_string(i);
  ds.feature_names = {"x0"};

  std::vector<double> h = model.predict(ds.features);
  for (std::size_t i = 0; i < n; ++i) {
    double expect = xs[i] < 0.25 ? 0.0 : (xs[i] < 0.75 ? 0.05 : 0.95);
    REQUIRE(h[i] == expect);
  }

  Partition cells = level_set_partition(model, ds);
  REQUIRE(cells.cell_count == 3);
  // bin order: {0} first, then (0,.1], then (.9,1]
  for (std::size_t i = 0; i < n; ++i) {
    int expect = xs[i] < 0.25 ? 0 : (xs[i] < 0.75 ? 1 : 2);
    REQUIRE(cells.assignment[i] == expect);
  }
  REQUIRE(std::accumulate(cells.cell_sizes.begin(), cells.cell_sizes.end(),
                          std::size_t{0}) == n);

  // collapsing every row to one value collapses the partition to one cell
  BoostedPredictor flat;
  flat.init_value = 0.05;
  flat.n_features = 1;
  Partition single = level_set_partition(flat, ds);
  REQUIRE(single.cell_count == 1);
}

TEST_CASE("prediction replays training and extends off-sample", "[boosting]") {
  SynthSpec spec;
  spec.generator = Generator::tree_realizable;
  spec.n = 500;
  spec.d = 3;
  spec.seed = 43;
  SynthOutput synth = gen_synthetic(spec);
  const Dataset& ds = synth.dataset;

  BoostConfig config;
  config.alpha = 0.05;
  BoostedPredictor model = fit_boosted(ds, config);

  SECTION("training rows reproduce final values bitwise") {
    std::vector<double> replay = model.predict(ds.features);
    REQUIRE(replay.size() == ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i)
      REQUIRE(replay[i] == model.final_values[i]);
  }

  SECTION("permuting rows permutes predictions") {
    std::vector<std::size_t> perm(ds.n());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(99);
    rng.shuffle(perm);
    Matrix shuffled = submatrix(ds.features, perm);
    std::vector<double> out = model.predict(shuffled);
    for (std::size_t r = 0; r < perm.size(); ++r)
      REQUIRE(out[r] == model.final_values[perm[r]]);
  }

  SECTION("fresh rows stay inside the unit interval") {
    Rng rng(100);
    Matrix fresh = random_features(rng, 10000, spec.d);
    std::vector<double> out = model.predict(fresh);
    for (double v : out) {
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
    }
  }

  SECTION("feature count mismatch is rejected") {
    Matrix wrong(4, spec.d + 1);
    REQUIRE(thrown_code([&] { model.predict(wrong); }) ==
            errc::dimension_mismatch);
  }
}

TEST_CASE("tree and model survive a JSON round trip", "[boosting]") {
  Rng rng(55);
  Matrix X = random_features(rng, 120, 3);
  std::vector<double> y(120);
  for (auto& v : y) v = rng.uniform(0.0, 1.0);

  SECTION("single tree") {
    RegressionTree tree = fit_tree(X, y, unit_weights(120), 4);
    RegressionTree back = tree_from_json(tree_to_json(tree));
    REQUIRE(back.nodes.size() == tree.nodes.size());
    for (std::size_t i = 0; i < X.rows; ++i)
      REQUIRE(back.predict_row(X.row(i)) == tree.predict_row(X.row(i)));
    REQUIRE(thrown_code([] {
              tree_from_json(nlohmann::json{{"nodes", nlohmann::json::array()}});
            }) == errc::parse_error);
  }

  SECTION("boosted predictor") {
    SynthSpec spec;
    spec.generator = Generator::tree_realizable;
    spec.n = 300;
    spec.d = 3;
    spec.seed = 56;
    SynthOutput synth = gen_synthetic(spec);
    BoostConfig config;
    config.alpha = 0.05;
    BoostedPredictor model = fit_boosted(synth.dataset, config);

    BoostedPredictor back = boosted_from_json(boosted_to_json(model));
    REQUIRE(back.rounds == model.rounds);
    REQUIRE(back.converged == model.converged);
    REQUIRE(back.init_value == model.init_value);
    REQUIRE(back.n_features == model.n_features);
    std::vector<double> a = model.predict(X);
    std::vector<double> b = back.predict(X);
    for (std::size_t i = 0; i < X.rows; ++i) REQUIRE(a[i] == b[i]);
  }
}
