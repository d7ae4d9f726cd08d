#pragma once

// Conditional covariance machinery: the quantity |Cov(f(X), Y | X in S)| that
// defines an indistinguishable subset, the audit that measures it per cell
// and model, the binary-indicator decomposition Cov = P(X=1)(E[Y|X=1]-E[Y]),
// and range-based variance certificates.
//
// All covariances use the population 1/n normalizer: every certified quantity
// is a plain distributional covariance of the empirical measure, and the
// exact fixtures (1/12, -1/6 on the three-point counterexample) assume it.
// Accumulations are Kahan-compensated; cells can be small and the centered
// products nearly cancel.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "indist/dataset.hpp"
#include "indist/errors.hpp"
#include "indist/parallel.hpp"

namespace indist {

namespace detail {

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;

  void add(double v) {
    double y = v - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

template <typename Select>
double masked_mean(const std::vector<double>& v, Select&& selected,
                   std::size_t& count_out) {
  KahanSum acc;
  std::size_t count = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (selected(i)) {
      acc.add(v[i]);
      ++count;
    }
  }
  count_out = count;
  return count ? acc.value() / static_cast<double>(count) : 0.0;
}

}  // namespace detail

// Empirical covariance of a and b over the masked rows, 1/n_S normalizer.
inline double conditional_cov(const std::vector<double>& a,
                              const std::vector<double>& b,
                              const std::vector<char>& mask) {
  if (a.size() != b.size() || a.size() != mask.size())
    fail(errc::length_mismatch, "conditional_cov: vector lengths differ");
  auto sel = [&](std::size_t i) { return mask[i] != 0; };
  std::size_t n_s = 0;
  double mean_a = detail::masked_mean(a, sel, n_s);
  if (n_s < 2)
    fail(errc::too_few_rows,
         "conditional_cov: mask selects " + std::to_string(n_s) + " rows, need >= 2");
  std::size_t ignored = 0;
  double mean_b = detail::masked_mean(b, sel, ignored);
  detail::KahanSum acc;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i]) acc.add((a[i] - mean_a) * (b[i] - mean_b));
  return acc.value() / static_cast<double>(n_s);
}

inline std::vector<char> full_mask(std::size_t n) {
  return std::vector<char>(n, 1);
}

// Cov(1_A, Y) split into P(A) times the lift of Y on A.
struct BinaryCovParts {
  double p1 = 0.0;      // P(indicator = 1)
  double lift1 = 0.0;   // E[target | indicator = 1] - E[target]
  double product = 0.0; // p1 * lift1 == Cov(indicator, target)
};

inline BinaryCovParts binary_cov_decomposition(const std::vector<double>& indicator,
                                               const std::vector<double>& target) {
  if (indicator.size() != target.size())
    fail(errc::length_mismatch, "binary_cov_decomposition: lengths differ");
  if (indicator.empty())
    fail(errc::degenerate_indicator, "binary_cov_decomposition: empty input");
  std::size_t ones = 0;
  for (double v : indicator) {
    if (v != 0.0 && v != 1.0)
      fail(errc::bad_param, "indicator entry " + format_double(v) + " is not 0/1");
    if (v == 1.0) ++ones;
  }
  if (ones == 0 || ones == indicator.size())
    fail(errc::degenerate_indicator, "indicator is constant");

  std::size_t n = indicator.size();
  auto on = [&](std::size_t i) { return indicator[i] == 1.0; };
  auto all = [](std::size_t) { return true; };
  std::size_t n1 = 0, n_all = 0;
  double mean_on = detail::masked_mean(target, on, n1);
  double mean_all = detail::masked_mean(target, all, n_all);
  BinaryCovParts parts;
  parts.p1 = static_cast<double>(ones) / static_cast<double>(n);
  parts.lift1 = mean_on - mean_all;
  parts.product = parts.p1 * parts.lift1;
  return parts;
}

// Popoviciu certificate: Var <= range^2 / 4 for bounded values. A cell whose
// per-model ranges stay within 4*alpha certifies |Cov| <= alpha against any
// outcome in [0,1].
struct VarianceCertificate {
  double variance = 0.0;
  double range = 0.0;
  double popoviciu_bound = 0.0;
};

inline VarianceCertificate variance_certificate(const std::vector<double>& values,
                                                const std::vector<char>& mask) {
  if (values.size() != mask.size())
    fail(errc::length_mismatch, "variance_certificate: lengths differ");
  auto sel = [&](std::size_t i) { return mask[i] != 0; };
  std::size_t n_s = 0;
  double mean = detail::masked_mean(values, sel, n_s);
  if (n_s == 0) fail(errc::too_few_rows, "variance_certificate: empty mask");
  double lo = 0.0, hi = 0.0;
  bool first = true;
  detail::KahanSum acc;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!mask[i]) continue;
    double v = values[i];
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    acc.add((v - mean) * (v - mean));
  }
  VarianceCertificate cert;
  cert.variance = acc.value() / static_cast<double>(n_s);
  cert.range = hi - lo;
  cert.popoviciu_bound = cert.range * cert.range / 4.0;
  // the bound holds mathematically; keep float noise from inverting it
  cert.variance = std::min(cert.variance, cert.popoviciu_bound);
  return cert;
}

// ---------------------------------------------------------------------------
// partition audit

struct CellAudit {
  int cell = 0;
  std::size_t n = 0;
  bool degenerate = false;  // fewer than 2 rows: no covariance measurable
  std::vector<double> per_model_abs_cov;
  double max_abs_cov = 0.0;
};

struct AuditReport {
  double alpha_hat = 0.0;  // max over non-degenerate cells and models
  std::vector<CellAudit> per_cell;
  std::vector<std::size_t> n_per_cell;
  bool any_degenerate = false;
};

// Smallest alpha for which the partition is empirically alpha-multicalibrated
// with respect to the finite class. Cells with < 2 rows are reported with a
// degenerate flag rather than aborting the whole audit.
inline AuditReport audit_partition(const Dataset& ds, const PredictionMatrix& pm,
                                   const Partition& partition, int threads = 1) {
  if (pm.n() != ds.n() || partition.n() != ds.n())
    fail(errc::row_count_mismatch, "audit_partition: row counts differ");
  auto cells = partition.rows_by_cell();
  std::size_t k = cells.size();
  std::size_t m = pm.m();

  AuditReport report;
  report.per_cell.resize(k);
  report.n_per_cell = partition.cell_sizes;
  for (std::size_t c = 0; c < k; ++c) {
    report.per_cell[c].cell = static_cast<int>(c);
    report.per_cell[c].n = cells[c].size();
    report.per_cell[c].degenerate = cells[c].size() < 2;
    if (!report.per_cell[c].degenerate)
      report.per_cell[c].per_model_abs_cov.assign(m, 0.0);
  }

  // (cell, model) covariances are independent; reduction below is sequential
  parallel_for(k * m, threads, [&](std::size_t t) {
    std::size_t c = t / m, j = t % m;
    const auto& rows = cells[c];
    if (rows.size() < 2) return;
    detail::KahanSum sum_y, sum_f;
    for (std::size_t i : rows) {
      sum_y.add(ds.outcome[i]);
      sum_f.add(pm.preds.at(i, j));
    }
    double ny = static_cast<double>(rows.size());
    double mean_y = sum_y.value() / ny;
    double mean_f = sum_f.value() / ny;
    detail::KahanSum acc;
    for (std::size_t i : rows)
      acc.add((pm.preds.at(i, j) - mean_f) * (ds.outcome[i] - mean_y));
    report.per_cell[c].per_model_abs_cov[j] = std::abs(acc.value() / ny);
  });

  for (auto& cell : report.per_cell) {
    if (cell.degenerate) {
      report.any_degenerate = true;
      continue;
    }
    for (double v : cell.per_model_abs_cov)
      cell.max_abs_cov = std::max(cell.max_abs_cov, v);
    report.alpha_hat = std::max(report.alpha_hat, cell.max_abs_cov);
  }
  return report;
}

}  // namespace indist
