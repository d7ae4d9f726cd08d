#pragma once

// Partition construction without boosting.
//
// cluster_finite_class: complete-linkage agglomerative clustering of the
// prediction vectors in the Chebyshev metric. Complete linkage is the one
// classical linkage that controls cluster diameter, and diameter/4 is exactly
// the indistinguishability level the range-based certificate grants, so the
// two work as a pair. Ties in the merge order break toward the
// lexicographically lowest pair of cluster labels (a cluster's label is its
// smallest row index), which keeps brute-force comparison tests exact.
//
// epsilon_net_partition: greedy farthest-point net for Lipschitz classes. An
// optimal net is NP-hard and unnecessary; greedy already guarantees every
// point sits within the radius of its center.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "indist/covariance.hpp"
#include "indist/dataset.hpp"
#include "indist/errors.hpp"

namespace indist {

struct ClusterSpec {
  enum class Target { cell_count, diameter_budget };
  Target target = Target::cell_count;
  int k = 2;  // CLI default mirrors the two-subset experiments
  double diameter = 0.0;
  std::uint64_t seed = 0;  // reserved; the pinned tie-break needs no randomness
};

struct LipschitzSpec {
  enum class Metric { euclidean, chebyshev };
  double L = 1.0;
  double radius = 0.0;  // 4*alpha / L when derived from a target level
  Metric metric = Metric::euclidean;

  static LipschitzSpec from_alpha(double L, double alpha,
                                  Metric metric = Metric::euclidean) {
    if (!(L > 0.0)) fail(errc::bad_param, "Lipschitz constant must be > 0");
    LipschitzSpec s;
    s.L = L;
    s.radius = 4.0 * alpha / L;
    s.metric = metric;
    return s;
  }
};

namespace detail {

inline double chebyshev(const double* a, const double* b, std::size_t d) {
  double best = 0.0;
  for (std::size_t j = 0; j < d; ++j)
    best = std::max(best, std::abs(a[j] - b[j]));
  return best;
}

inline double euclidean(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double diff = a[j] - b[j];
    s += diff * diff;
  }
  return std::sqrt(s);
}

// groups of rows with exactly identical prediction vectors, in order of first
// occurrence (so a group's index order equals its smallest-row-index order)
inline std::vector<std::vector<std::size_t>> exact_row_groups(const Matrix& rows) {
  std::unordered_map<std::string, std::size_t> seen;
  std::vector<std::vector<std::size_t>> groups;
  std::string key;
  for (std::size_t i = 0; i < rows.rows; ++i) {
    key.assign(reinterpret_cast<const char*>(rows.row(i)),
               rows.cols * sizeof(double));
    auto it = seen.find(key);
    if (it == seen.end()) {
      seen.emplace(std::move(key), groups.size());
      groups.push_back({i});
    } else {
      groups[it->second].push_back(i);
    }
  }
  return groups;
}

}  // namespace detail

// Complete-linkage agglomerative clustering over rows of preds, Chebyshev
// metric. Merging identical rows first is a no-op for complete linkage (their
// distances to everything coincide), so groups of duplicates enter as single
// weighted points; Fig.-2-style data where hundreds of rows share one
// prediction vector cluster in one step instead of hundreds.
inline Partition cluster_finite_class(const PredictionMatrix& pm,
                                      const ClusterSpec& spec) {
  std::size_t n = pm.n();
  if (n == 0) fail(errc::empty_input, "cluster_finite_class: no rows");
  if (pm.m() == 0) fail(errc::empty_input, "cluster_finite_class: no models");
  if (spec.target == ClusterSpec::Target::cell_count && spec.k < 1)
    fail(errc::bad_param, "cell count must be >= 1");
  if (spec.target == ClusterSpec::Target::diameter_budget && spec.diameter < 0.0)
    fail(errc::bad_param, "diameter budget must be >= 0");

  auto groups = detail::exact_row_groups(pm.preds);
  std::size_t g = groups.size();
  if (spec.target == ClusterSpec::Target::cell_count &&
      static_cast<std::size_t>(spec.k) > g)
    fail(errc::infeasible_k, "K=" + std::to_string(spec.k) + " but only " +
                                 std::to_string(g) + " distinct prediction rows");

  // complete-linkage distance matrix over groups; D[i][j] valid for active i,j
  std::vector<std::vector<double>> dist(g, std::vector<double>(g, 0.0));
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = i + 1; j < g; ++j) {
      double v = detail::chebyshev(pm.preds.row(groups[i][0]),
                                   pm.preds.row(groups[j][0]), pm.m());
      dist[i][j] = dist[j][i] = v;
    }

  std::vector<char> active(g, 1);
  // nearest[i] = (distance, partner) with the smallest-label partner among ties
  std::vector<double> near_dist(g, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> near_to(g, g);
  auto rescan = [&](std::size_t i) {
    near_dist[i] = std::numeric_limits<double>::infinity();
    near_to[i] = g;
    for (std::size_t j = 0; j < g; ++j) {
      if (j == i || !active[j]) continue;
      if (dist[i][j] < near_dist[i]) {
        near_dist[i] = dist[i][j];
        near_to[i] = j;
      }
    }
  };
  for (std::size_t i = 0; i < g; ++i) rescan(i);

  std::size_t n_active = g;
  while (n_active > 1) {
    // lexicographically first pair among those at the global minimum distance
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g; ++i)
      if (active[i] && near_dist[i] < dmin) dmin = near_dist[i];
    if (!std::isfinite(dmin)) break;
    std::size_t a = g, b = g;
    for (std::size_t i = 0; i < g; ++i) {
      if (active[i] && near_dist[i] == dmin) {
        a = std::min(i, near_to[i]);
        b = std::max(i, near_to[i]);
        break;
      }
    }

    if (spec.target == ClusterSpec::Target::cell_count) {
      if (n_active == static_cast<std::size_t>(spec.k)) break;
    } else if (dmin > spec.diameter) {
      break;
    }

    // merge b into a (a has the smaller label)
    groups[a].insert(groups[a].end(), groups[b].begin(), groups[b].end());
    active[b] = 0;
    --n_active;
    for (std::size_t c = 0; c < g; ++c) {
      if (!active[c] || c == a) continue;
      dist[a][c] = dist[c][a] = std::max(dist[a][c], dist[b][c]);
    }
    rescan(a);
    for (std::size_t c = 0; c < g; ++c) {
      if (!active[c] || c == a) continue;
      if (near_to[c] == a || near_to[c] == b) {
        rescan(c);
      } else if (dist[c][a] == near_dist[c] && a < near_to[c]) {
        near_to[c] = a;  // keep the smallest-label partner among ties
      }
    }
  }

  // active groups become cells, ordered by smallest member row index
  std::vector<std::size_t> cell_order;
  for (std::size_t i = 0; i < g; ++i)
    if (active[i]) cell_order.push_back(i);
  std::sort(cell_order.begin(), cell_order.end(),
            [&](std::size_t x, std::size_t y) { return groups[x][0] < groups[y][0]; });
  std::vector<int> assignment(n, -1);
  for (std::size_t c = 0; c < cell_order.size(); ++c)
    for (std::size_t row : groups[cell_order[c]])
      assignment[row] = static_cast<int>(c);
  return make_partition(std::move(assignment),
                        static_cast<int>(cell_order.size()), Provenance::cluster);
}

// Chebyshev diameter of one cell: max over models of the within-cell range,
// which equals the max pairwise l-infinity distance.
inline double cell_diameter(const PredictionMatrix& pm, const Partition& partition,
                            int k) {
  if (k < 0 || k >= partition.cell_count)
    fail(errc::unknown_cell, "cell index " + std::to_string(k));
  double diameter = 0.0;
  bool any = false;
  for (std::size_t j = 0; j < pm.m(); ++j) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < pm.n(); ++i) {
      if (partition.assignment[i] != k) continue;
      double v = pm.preds.at(i, j);
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (first) fail(errc::empty_cell, "cell " + std::to_string(k) + " is empty");
    any = true;
    diameter = std::max(diameter, hi - lo);
  }
  if (!any) fail(errc::empty_cell, "cell " + std::to_string(k) + " is empty");
  return diameter;
}

struct PartitionCertificate {
  std::vector<double> per_cell_alpha;  // diameter/4 per cell
};

// Range-based certificate: within a cell every model's range is at most the
// cell diameter, so Popoviciu gives Var <= diameter^2/4 and Cauchy-Schwarz
// against a [0,1] outcome gives |Cov| <= diameter/4.
inline PartitionCertificate certify_partition(const PredictionMatrix& pm,
                                              const Partition& partition) {
  PartitionCertificate cert;
  cert.per_cell_alpha.resize(partition.cell_count);
  for (int k = 0; k < partition.cell_count; ++k)
    cert.per_cell_alpha[k] = cell_diameter(pm, partition, k) / 4.0;
  return cert;
}

// Greedy farthest-point net: repeatedly promote the point farthest from the
// chosen centers (lowest index on ties) until everything lies within radius;
// assign points to their nearest center. centers_out receives the row index
// of each cell's center.
inline Partition epsilon_net_partition(const Matrix& points, const LipschitzSpec& spec,
                                       std::vector<std::size_t>* centers_out = nullptr) {
  if (points.rows == 0) fail(errc::empty_input, "epsilon_net_partition: no points");
  if (!(spec.radius > 0.0)) fail(errc::bad_param, "net radius must be > 0");
  auto metric = spec.metric == LipschitzSpec::Metric::chebyshev
                    ? detail::chebyshev
                    : detail::euclidean;
  std::size_t n = points.rows;
  std::vector<double> best_dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> nearest_center(n, -1);
  std::vector<std::size_t> centers;
  while (true) {
    std::size_t far = 0;
    double far_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (best_dist[i] > far_dist) {
        far_dist = best_dist[i];
        far = i;
      }
    }
    if (!centers.empty() && far_dist <= spec.radius) break;
    int c = static_cast<int>(centers.size());
    centers.push_back(far);
    for (std::size_t i = 0; i < n; ++i) {
      double v = metric(points.row(i), points.row(far), points.cols);
      if (v < best_dist[i]) {
        best_dist[i] = v;
        nearest_center[i] = c;
      }
    }
  }
  if (centers_out) *centers_out = centers;
  return make_partition(std::move(nearest_center),
                        static_cast<int>(centers.size()), Provenance::net);
}

// Per-cell centroids in prediction space, used for nearest-cell fallback when
// a test row lands outside every training cell.
inline Matrix cell_centroids(const PredictionMatrix& pm, const Partition& partition) {
  Matrix centroids(partition.cell_count, pm.m(), 0.0);
  std::vector<std::size_t> counts(partition.cell_count, 0);
  for (std::size_t i = 0; i < pm.n(); ++i) {
    int c = partition.assignment[i];
    ++counts[c];
    for (std::size_t j = 0; j < pm.m(); ++j)
      centroids.at(c, j) += pm.preds.at(i, j);
  }
  for (int c = 0; c < partition.cell_count; ++c) {
    if (counts[c] == 0)
      fail(errc::empty_cell, "cell " + std::to_string(c) + " is empty");
    for (std::size_t j = 0; j < pm.m(); ++j)
      centroids.at(c, j) /= static_cast<double>(counts[c]);
  }
  return centroids;
}

inline int nearest_cell_chebyshev(const Matrix& centroids, const double* row) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    double v = detail::chebyshev(centroids.row(c), row, centroids.cols);
    if (v < best_dist) {
      best_dist = v;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace indist
