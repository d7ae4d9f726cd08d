#pragma once

// Slow, independent reference implementations the tests compare against.
// Everything here favors obviousness over speed: long double two-pass sums,
// exhaustive enumeration, grid refinement. Nothing includes library headers
// beyond the bare data containers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "indist/dataset.hpp"

namespace oracle {

inline long double mean(const std::vector<double>& v,
                        const std::vector<std::size_t>& rows) {
  long double s = 0.0L;
  for (std::size_t i : rows) s += v[i];
  return s / static_cast<long double>(rows.size());
}

// population covariance, 1/n, long double two-pass
inline double cov(const std::vector<double>& a, const std::vector<double>& b,
                  const std::vector<std::size_t>& rows) {
  long double ma = mean(a, rows), mb = mean(b, rows);
  long double s = 0.0L;
  for (std::size_t i : rows) s += (a[i] - ma) * (b[i] - mb);
  return static_cast<double>(s / static_cast<long double>(rows.size()));
}

inline double var(const std::vector<double>& v, const std::vector<std::size_t>& rows) {
  return cov(v, v, rows);
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

inline double mse(const std::vector<double>& pred, const std::vector<double>& y,
                  const std::vector<std::size_t>& rows) {
  long double s = 0.0L;
  for (std::size_t i : rows) s += (y[i] - pred[i]) * (y[i] - pred[i]);
  return static_cast<double>(s / static_cast<long double>(rows.size()));
}

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion(const std::vector<double>& pred,
                           const std::vector<double>& truth) {
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] == 1.0 && pred[i] == 1.0) ++c.tp;
    if (truth[i] == 0.0 && pred[i] == 1.0) ++c.fp;
    if (truth[i] == 1.0 && pred[i] == 0.0) ++c.fn;
    if (truth[i] == 0.0 && pred[i] == 0.0) ++c.tn;
  }
  return c;
}

// Exhaustive best-split scan: every midpoint between consecutive distinct
// sorted values of every feature, SSE reduction computed by direct loops.
struct SplitScan {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double reduction = 0.0;
};

inline SplitScan best_split_scan(const indist::Matrix& X, const std::vector<double>& y,
                                 const std::vector<double>& w,
                                 const std::vector<std::size_t>& rows) {
  SplitScan best;
  auto sse = [&](const std::vector<std::size_t>& part) {
    long double W = 0.0L, S = 0.0L;
    for (std::size_t i : part) {
      W += w[i];
      S += w[i] * y[i];
    }
    if (W <= 0.0L) return 0.0L;
    long double m = S / W;
    long double acc = 0.0L;
    for (std::size_t i : part) acc += w[i] * (y[i] - m) * (y[i] - m);
    return acc;
  };
  long double base = sse(rows);
  for (std::size_t f = 0; f < X.cols; ++f) {
    std::vector<double> vals;
    for (std::size_t i : rows) vals.push_back(X.at(i, f));
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t v = 0; v + 1 < vals.size(); ++v) {
      double mid = vals[v] + (vals[v + 1] - vals[v]) / 2.0;
      if (!(vals[v] <= mid && mid < vals[v + 1])) mid = vals[v];
      std::vector<std::size_t> left, right;
      for (std::size_t i : rows)
        (X.at(i, f) <= mid ? left : right).push_back(i);
      if (left.empty() || right.empty()) continue;
      double red = static_cast<double>(base - sse(left) - sse(right));
      if (red > best.reduction) {
        best.found = true;
        best.feature = static_cast<int>(f);
        best.threshold = mid;
        best.reduction = red;
      }
    }
  }
  return best;
}

// Canonical set-partition enumeration: cell labels appear in first-use order,
// at most k of them. Calls fn(assignment) for each partition of {0..n-1}.
inline void for_each_partition(std::size_t n, int k,
                               const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> assignment(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int used) {
    if (i == n) {
      fn(assignment);
      return;
    }
    for (int c = 0; c < used; ++c) {
      assignment[i] = c;
      rec(i + 1, used);
    }
    if (used < k) {
      assignment[i] = used;
      rec(i + 1, used + 1);
    }
  };
  rec(1, 1);  // row 0 is always cell 0
}

inline double chebyshev(const double* a, const double* b, std::size_t d) {
  double m = 0.0;
  for (std::size_t j = 0; j < d; ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

inline double diameter(const indist::Matrix& points,
                       const std::vector<std::size_t>& rows) {
  double m = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      m = std::max(m, chebyshev(points.row(rows[i]), points.row(rows[j]), points.cols));
  return m;
}

inline double max_cell_diameter(const indist::Matrix& points,
                                const std::vector<int>& assignment, int k) {
  double worst = 0.0;
  for (int c = 0; c < k; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == c) rows.push_back(i);
    if (!rows.empty()) worst = std::max(worst, diameter(points, rows));
  }
  return worst;
}

// Exhaustive minimax diameter over every partition into at most k cells.
inline double min_max_diameter(const indist::Matrix& points, int k) {
  double best = std::numeric_limits<double>::infinity();
  for_each_partition(points.rows, k, [&](const std::vector<int>& assignment) {
    best = std::min(best, max_cell_diameter(points, assignment, k));
  });
  return best;
}

// Least squares by grid refinement: minimize mean (y - g - b x)^2 over a
// shrinking 41x41 grid. Knows nothing about normal equations.
struct GridFit {
  double gamma = 0.0, beta = 0.0, mse = 0.0;
};

inline GridFit grid_least_squares(const std::vector<double>& x,
                                  const std::vector<double>& y) {
  auto objective = [&](double g, double b) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) {
      long double r = y[i] - g - b * x[i];
      s += r * r;
    }
    return static_cast<double>(s / static_cast<long double>(x.size()));
  };
  double cg = 0.0, cb = 0.0, half = 2.0;
  for (int round = 0; round < 12; ++round) {
    double best = std::numeric_limits<double>::infinity();
    double bg = cg, bb = cb;
    for (int i = -20; i <= 20; ++i)
      for (int j = -20; j <= 20; ++j) {
        double g = cg + half * static_cast<double>(i) / 20.0;
        double b = cb + half * static_cast<double>(j) / 20.0;
        double o = objective(g, b);
        if (o < best) {
          best = o;
          bg = g;
          bb = b;
        }
      }
    cg = bg;
    cb = bb;
    half /= 10.0;
  }
  GridFit fit;
  fit.gamma = cg;
  fit.beta = cb;
  fit.mse = objective(cg, cb);
  return fit;
}

// Exact Rademacher average: enumerate all 2^n sign vectors (n <= 20).
inline double rademacher_exact(const indist::Matrix& losses) {
  std::size_t n = losses.cols;
  long double total = 0.0L;
  for (std::size_t bits = 0; bits < (std::size_t{1} << n); ++bits) {
    long double sup = 0.0L;
    for (std::size_t f = 0; f < losses.rows; ++f) {
      long double s = 0.0L;
      for (std::size_t i = 0; i < n; ++i)
        s += ((bits >> i) & 1 ? 1.0L : -1.0L) * losses.at(f, i);
      long double a = s < 0 ? -s : s;
      sup = std::max(sup, a / static_cast<long double>(n));
    }
    total += sup;
  }
  return static_cast<double>(total / static_cast<long double>(std::size_t{1} << n));
}

}  // namespace oracle
