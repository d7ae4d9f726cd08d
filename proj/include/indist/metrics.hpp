#pragma once

// Binary agreement metrics and their uncertainty. MCC with the subset-0
// convention (degenerate marginals score 0, flagged), TPR/TNR that go absent
// rather than NaN, a percentile bootstrap over any row-indexed statistic, and
// a permutation baseline giving the null band for a metric.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "indist/covariance.hpp"
#include "indist/errors.hpp"
#include "indist/parallel.hpp"
#include "indist/rng.hpp"

namespace indist {

enum class Metric { mcc, tpr, tnr, mse, covariance, mean };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::mcc: return "mcc";
    case Metric::tpr: return "tpr";
    case Metric::tnr: return "tnr";
    case Metric::mse: return "mse";
    case Metric::covariance: return "covariance";
    case Metric::mean: return "mean";
  }
  return "mcc";
}

inline Metric metric_from_name(const std::string& name) {
  if (name == "mcc") return Metric::mcc;
  if (name == "tpr") return Metric::tpr;
  if (name == "tnr") return Metric::tnr;
  if (name == "mse") return Metric::mse;
  if (name == "covariance") return Metric::covariance;
  if (name == "mean") return Metric::mean;
  fail(errc::bad_param, "unknown metric '" + name + "'");
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

namespace detail {

inline void check_binary(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (x != 0.0 && x != 1.0)
      fail(errc::bad_param, std::string(what) + " must be 0/1 valued");
}

}  // namespace detail

inline ConfusionCounts confusion_counts(const std::vector<double>& pred,
                                        const std::vector<double>& truth) {
  if (pred.size() != truth.size())
    fail(errc::length_mismatch, "pred and truth lengths differ");
  if (pred.empty()) fail(errc::empty_input, "no rows");
  detail::check_binary(pred, "pred");
  detail::check_binary(truth, "truth");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] == 1.0)
      (pred[i] == 1.0 ? c.tp : c.fn)++;
    else
      (pred[i] == 1.0 ? c.fp : c.tn)++;
  }
  return c;
}

struct MccResult {
  double value = 0.0;
  bool degenerate = false;  // some marginal is empty; value pinned to 0
  ConfusionCounts counts;
};

inline MccResult mcc(const std::vector<double>& pred,
                     const std::vector<double>& truth) {
  MccResult r;
  r.counts = confusion_counts(pred, truth);
  double tp = static_cast<double>(r.counts.tp), fp = static_cast<double>(r.counts.fp);
  double tn = static_cast<double>(r.counts.tn), fn = static_cast<double>(r.counts.fn);
  double m1 = tp + fp, m2 = tp + fn, m3 = tn + fp, m4 = tn + fn;
  if (m1 == 0.0 || m2 == 0.0 || m3 == 0.0 || m4 == 0.0) {
    r.degenerate = true;
    r.value = 0.0;
    return r;
  }
  r.value = (tp * tn - fp * fn) / std::sqrt(m1 * m2 * m3 * m4);
  return r;
}

struct ConfusionRates {
  std::optional<double> tpr;  // absent when no positive truths
  std::optional<double> tnr;  // absent when no negative truths
  ConfusionCounts counts;
};

inline ConfusionRates confusion_rates(const std::vector<double>& pred,
                                      const std::vector<double>& truth) {
  ConfusionRates r;
  r.counts = confusion_counts(pred, truth);
  if (r.counts.tp + r.counts.fn > 0)
    r.tpr = static_cast<double>(r.counts.tp) /
            static_cast<double>(r.counts.tp + r.counts.fn);
  if (r.counts.tn + r.counts.fp > 0)
    r.tnr = static_cast<double>(r.counts.tn) /
            static_cast<double>(r.counts.tn + r.counts.fp);
  return r;
}

// Point value of a metric on full vectors. For `mean` only `truth` is read.
inline double metric_value(Metric metric, const std::vector<double>& pred,
                           const std::vector<double>& truth) {
  switch (metric) {
    case Metric::mcc:
      return mcc(pred, truth).value;
    case Metric::tpr: {
      auto r = confusion_rates(pred, truth);
      if (!r.tpr) fail(errc::degenerate_indicator, "tpr undefined: no positive truths");
      return *r.tpr;
    }
    case Metric::tnr: {
      auto r = confusion_rates(pred, truth);
      if (!r.tnr) fail(errc::degenerate_indicator, "tnr undefined: no negative truths");
      return *r.tnr;
    }
    case Metric::mse: {
      if (pred.size() != truth.size())
        fail(errc::length_mismatch, "pred and truth lengths differ");
      if (pred.empty()) fail(errc::empty_input, "no rows");
      detail::KahanSum acc;
      for (std::size_t i = 0; i < pred.size(); ++i)
        acc.add((pred[i] - truth[i]) * (pred[i] - truth[i]));
      return acc.value() / static_cast<double>(pred.size());
    }
    case Metric::covariance:
      return conditional_cov(pred, truth, full_mask(pred.size()));
    case Metric::mean: {
      if (truth.empty()) fail(errc::empty_input, "no rows");
      detail::KahanSum acc;
      for (double y : truth) acc.add(y);
      return acc.value() / static_cast<double>(truth.size());
    }
  }
  fail(errc::bad_param, "unknown metric");
}

// Linear-interpolation quantile (type 7) on an already sorted vector.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) fail(errc::empty_input, "quantile of nothing");
  if (q <= 0.0) return sorted.front();
  if (q >= 1.0) return sorted.back();
  double h = q * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(h);
  double frac = h - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

struct MetricReport {
  Metric metric = Metric::mcc;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int n_boot = 0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  bool degenerate = false;        // point estimate hit a degenerate marginal
  bool point_outside_ci = false;  // can happen on tiny n; flagged, not an error
};

inline constexpr int kDefaultBootReplicates = 2000;
inline constexpr int kDefaultPermReplicates = 2000;

// Percentile bootstrap of an arbitrary statistic of resampled row indices.
// Replicate r draws from a stream derived from (seed, r), so the result does
// not depend on the thread count.
template <typename Stat>
std::pair<double, double> bootstrap_quantiles(std::size_t n, int n_boot,
                                              std::uint64_t seed, int threads,
                                              Stat&& statistic) {
  if (n < 2) fail(errc::too_few_rows, "bootstrap needs at least 2 rows");
  if (n_boot < 100) fail(errc::bad_param, "n_boot must be >= 100");
  std::vector<double> reps(static_cast<std::size_t>(n_boot));
  parallel_for(static_cast<std::size_t>(n_boot), threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = rng.index(n);
    reps[r] = statistic(idx);
  });
  std::sort(reps.begin(), reps.end());
  return {quantile_sorted(reps, 0.025), quantile_sorted(reps, 0.975)};
}

inline MetricReport bootstrap_ci(Metric metric, const std::vector<double>& pred,
                                 const std::vector<double>& truth, int n_boot,
                                 std::uint64_t seed, int threads = 1) {
  MetricReport report;
  report.metric = metric;
  report.n_boot = n_boot;
  report.seed = seed;
  report.n = truth.size();
  report.point = metric_value(metric, pred, truth);
  if (metric == Metric::mcc) report.degenerate = mcc(pred, truth).degenerate;

  // Degenerate resamples (possible even off a clean point estimate) follow
  // the same value conventions as the point metric, except the rate metrics
  // fall back to the point value instead of throwing mid-replicate.
  auto stat = [&](const std::vector<std::size_t>& idx) {
    std::vector<double> p, t;
    t.reserve(idx.size());
    if (metric != Metric::mean) p.reserve(idx.size());
    for (std::size_t i : idx) {
      if (metric != Metric::mean) p.push_back(pred[i]);
      t.push_back(truth[i]);
    }
    switch (metric) {
      case Metric::mcc:
        return mcc(p, t).value;
      case Metric::tpr: {
        auto r = confusion_rates(p, t);
        return r.tpr ? *r.tpr : report.point;
      }
      case Metric::tnr: {
        auto r = confusion_rates(p, t);
        return r.tnr ? *r.tnr : report.point;
      }
      default:
        return metric_value(metric, p, t);
    }
  };
  auto [lo, hi] = bootstrap_quantiles(truth.size(), n_boot, seed, threads, stat);
  report.ci_low = lo;
  report.ci_high = hi;
  report.point_outside_ci = report.point < lo || report.point > hi;
  return report;
}

// Null distribution of a metric when truth labels are randomly permuted.
// Reports the permutation mean as the point and the middle 95% as the band.
inline MetricReport permutation_baseline(const std::vector<double>& pred,
                                         const std::vector<double>& truth,
                                         int n_perm, std::uint64_t seed,
                                         Metric metric = Metric::mcc,
                                         int threads = 1) {
  if (pred.size() != truth.size())
    fail(errc::length_mismatch, "pred and truth lengths differ");
  if (truth.size() < 2) fail(errc::too_few_rows, "permutation needs at least 2 rows");
  if (n_perm < 1) fail(errc::bad_param, "n_perm must be >= 1");
  std::vector<double> reps(static_cast<std::size_t>(n_perm));
  parallel_for(static_cast<std::size_t>(n_perm), threads, [&](std::size_t r) {
    Rng rng(derive_seed(seed, r));
    std::vector<double> shuffled = truth;
    rng.shuffle(shuffled);
    if (metric == Metric::mcc)
      reps[r] = mcc(pred, shuffled).value;  // degenerate draws count as 0
    else
      reps[r] = metric_value(metric, pred, shuffled);
  });
  MetricReport report;
  report.metric = metric;
  report.n_boot = n_perm;
  report.seed = seed;
  report.n = truth.size();
  detail::KahanSum acc;
  for (double v : reps) acc.add(v);
  report.point = acc.value() / static_cast<double>(n_perm);
  std::sort(reps.begin(), reps.end());
  report.ci_low = quantile_sorted(reps, 0.025);
  report.ci_high = quantile_sorted(reps, 0.975);
  report.point_outside_ci = report.point < report.ci_low || report.point > report.ci_high;
  return report;
}

}  // namespace indist
