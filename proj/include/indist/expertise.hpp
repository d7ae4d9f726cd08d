#pragma once

// Selective incorporation of expert predictions, per cell of a
// multicalibrated partition.
//
// The core loop: collect each cell's (expert prediction, outcome) pairs, fit
// a univariate regressor per cell, and at test time route a row to its cell's
// regressor. The per-cell linear fit enjoys the incorporation bound
//   MSE_reg + 4*Cov_k(Y, Yhat)^2  <=  min_f MSE_f + 2*alpha,
// so the expert can only help, and helps strictly wherever the within-cell
// covariance is nonzero. |Cov_k(Y, Yhat)| > sqrt(alpha/2) certifies signal
// that no binary class member can express (the certificate is meaningful for
// binary classes only). Rich feedback enters through a linear recalibration
// of an arbitrary score, and the finite-sample diagnostics estimate
// Rademacher complexity by Monte Carlo and evaluate the resulting
// generalization bound.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "indist/covariance.hpp"
#include "indist/dataset.hpp"
#include "indist/errors.hpp"
#include "indist/rng.hpp"

namespace indist {

enum class RegressorKind { constant, identity, linear, logistic };

inline const char* regressor_kind_name(RegressorKind k) {
  switch (k) {
    case RegressorKind::constant: return "constant";
    case RegressorKind::identity: return "identity";
    case RegressorKind::linear: return "linear";
    case RegressorKind::logistic: return "logistic";
  }
  return "linear";
}

inline RegressorKind regressor_kind_from_name(const std::string& name) {
  if (name == "constant") return RegressorKind::constant;
  if (name == "identity") return RegressorKind::identity;
  if (name == "linear") return RegressorKind::linear;
  if (name == "logistic") return RegressorKind::logistic;
  fail(errc::bad_param, "unknown regressor kind '" + name + "'");
}

struct SubsetRegressor {
  RegressorKind kind = RegressorKind::linear;
  double gamma = 0.0;
  double beta = 0.0;
  int cell = 0;
  std::size_t n_cell = 0;
  bool degenerate_fallback = false;   // Var(expert)=0 forced the constant fit
  bool nonconverged_fallback = false; // IRLS gave up, linear fit substituted
  bool coef_capped = false;           // separation: |coef| hit the cap

  double apply(double yhat) const {
    switch (kind) {
      case RegressorKind::constant: return gamma;
      case RegressorKind::identity: return yhat;
      case RegressorKind::linear: return gamma + beta * yhat;
      case RegressorKind::logistic:
        return 1.0 / (1.0 + std::exp(-(gamma + beta * yhat)));
    }
    return gamma + beta * yhat;
  }
};

namespace detail {

struct CellPairs {
  std::vector<double> yhat;
  std::vector<double> y;
};

inline std::vector<CellPairs> expert_pairs_by_cell(const Dataset& ds,
                                                   const Partition& partition) {
  if (!ds.expert)
    fail(errc::missing_expert, "dataset has no expert prediction column");
  if (partition.n() != ds.n())
    fail(errc::row_count_mismatch, "partition/dataset row counts differ");
  std::vector<CellPairs> cells(partition.cell_count);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    auto& cell = cells[partition.assignment[i]];
    cell.yhat.push_back((*ds.expert)[i]);
    cell.y.push_back(ds.outcome[i]);
  }
  return cells;
}

struct LsFit {
  double gamma = 0.0;
  double beta = 0.0;
  bool degenerate = false;  // zero-variance regressor: constant fallback
};

// One-variable least squares: beta = Cov/Var, gamma = mean(y) - beta*mean(x).
inline LsFit least_squares(const std::vector<double>& x,
                           const std::vector<double>& y) {
  LsFit fit;
  std::size_t n = x.size();
  KahanSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx.add(x[i]);
    sy.add(y[i]);
  }
  double mx = sx.value() / static_cast<double>(n);
  double my = sy.value() / static_cast<double>(n);
  KahanSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx.add((x[i] - mx) * (x[i] - mx));
    sxy.add((x[i] - mx) * (y[i] - my));
  }
  if (!(sxx.value() > 0.0)) {
    fit.gamma = my;
    fit.beta = 0.0;
    fit.degenerate = true;
    return fit;
  }
  fit.beta = sxy.value() / sxx.value();
  fit.gamma = my - fit.beta * mx;
  return fit;
}

inline double mse_of(const std::vector<double>& pred, const std::vector<double>& y) {
  KahanSum acc;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc.add((y[i] - pred[i]) * (y[i] - pred[i]));
  return y.empty() ? 0.0 : acc.value() / static_cast<double>(y.size());
}

constexpr double kLogisticCoefCap = 25.0;

// Univariate logistic fit of y on x by IRLS (Newton on the Bernoulli
// log-likelihood, fractional y allowed). Separation drives the coefficients
// toward infinity; they are capped at +-25 and flagged instead.
inline bool logistic_irls(const std::vector<double>& x, const std::vector<double>& y,
                          double& gamma, double& beta, bool& capped) {
  gamma = 0.0;
  beta = 0.0;
  capped = false;
  const int max_iter = 100;
  for (int iter = 0; iter < max_iter; ++iter) {
    double h00 = 0, h01 = 0, h11 = 0, g0 = 0, g1 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double z = gamma + beta * x[i];
      double p = 1.0 / (1.0 + std::exp(-z));
      double w = std::max(p * (1.0 - p), 1e-10);
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
      double r = y[i] - p;
      g0 += r;
      g1 += r * x[i];
    }
    double det = h00 * h11 - h01 * h01;
    if (!(std::abs(det) > 1e-300)) return false;
    double dg = (h11 * g0 - h01 * g1) / det;
    double db = (h00 * g1 - h01 * g0) / det;
    if (!std::isfinite(dg) || !std::isfinite(db)) return false;
    gamma += dg;
    beta += db;
    if (std::abs(gamma) > kLogisticCoefCap) {
      gamma = std::clamp(gamma, -kLogisticCoefCap, kLogisticCoefCap);
      capped = true;
    }
    if (std::abs(beta) > kLogisticCoefCap) {
      beta = std::clamp(beta, -kLogisticCoefCap, kLogisticCoefCap);
      capped = true;
    }
    if (std::abs(dg) < 1e-10 && std::abs(db) < 1e-10) return true;
  }
  // hit the iteration cap; a capped fit is the expected separation outcome,
  // anything else is a genuine non-convergence
  return capped;
}

}  // namespace detail

// Algorithm: fit one univariate regressor per cell on that cell's
// (expert, outcome) pairs. Empty cells are an error; zero-variance or
// singleton cells degrade to the constant fit with a flag (the constant
// predictor is the baseline the guarantees compare against anyway).
inline std::vector<SubsetRegressor> fit_subset_regressors(const Dataset& ds,
                                                          const Partition& partition,
                                                          RegressorKind kind) {
  auto cells = detail::expert_pairs_by_cell(ds, partition);
  std::vector<SubsetRegressor> out;
  out.reserve(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    if (cell.y.empty())
      fail(errc::empty_cell, "cell " + std::to_string(c) + " is empty");
    SubsetRegressor reg;
    reg.kind = kind;
    reg.cell = static_cast<int>(c);
    reg.n_cell = cell.y.size();
    switch (kind) {
      case RegressorKind::identity:
        reg.gamma = 0.0;
        reg.beta = 1.0;
        break;
      case RegressorKind::constant: {
        detail::KahanSum s;
        for (double v : cell.y) s.add(v);
        reg.gamma = s.value() / static_cast<double>(cell.y.size());
        reg.beta = 0.0;
        break;
      }
      case RegressorKind::linear: {
        auto fit = detail::least_squares(cell.yhat, cell.y);
        reg.gamma = fit.gamma;
        reg.beta = fit.beta;
        if (fit.degenerate) {
          reg.kind = RegressorKind::constant;
          reg.degenerate_fallback = true;
        }
        break;
      }
      case RegressorKind::logistic: {
        bool capped = false;
        bool ok = cell.y.size() >= 2 &&
                  detail::logistic_irls(cell.yhat, cell.y, reg.gamma, reg.beta,
                                        capped);
        reg.coef_capped = capped;
        if (!ok) {
          auto fit = detail::least_squares(cell.yhat, cell.y);
          reg.kind =
              fit.degenerate ? RegressorKind::constant : RegressorKind::linear;
          reg.gamma = fit.gamma;
          reg.beta = fit.beta;
          reg.nonconverged_fallback = true;
          reg.degenerate_fallback = fit.degenerate;
        }
        break;
      }
    }
    out.push_back(reg);
  }
  return out;
}

inline double predict_with_expertise(const std::vector<SubsetRegressor>& regressors,
                                     int cell, double yhat) {
  for (const auto& reg : regressors)
    if (reg.cell == cell) return reg.apply(yhat);
  fail(errc::unknown_cell, "no regressor for cell " + std::to_string(cell));
}

// ---------------------------------------------------------------------------
// incorporation bound, evaluated per cell

struct CellGap {
  int cell = 0;
  std::size_t n = 0;
  double mse_reg = 0.0;       // per-cell regression on the expert
  double cov = 0.0;           // Cov_k(Y, Yhat)
  double lhs = 0.0;           // mse_reg + 4*cov^2
  double mse_best_model = 0.0;
  double rhs_min = 0.0;       // min_f MSE_f + 2*alpha
  bool holds = false;
};

struct IncorporationGapReport {
  double alpha_used = 0.0;
  std::vector<CellGap> per_cell;
  bool all_hold = true;
};

// lhs <= rhs is the incorporation guarantee; alpha must come from an audit of
// the same partition against the same class for the comparison to be honest.
inline IncorporationGapReport incorporation_gap(
    const Dataset& ds, const PredictionMatrix& pm, const Partition& partition,
    const std::vector<SubsetRegressor>& regressors, double alpha) {
  if (pm.n() != ds.n() || partition.n() != ds.n())
    fail(errc::row_count_mismatch, "incorporation_gap: row counts differ");
  auto cells = detail::expert_pairs_by_cell(ds, partition);
  auto rows_by_cell = partition.rows_by_cell();

  IncorporationGapReport report;
  report.alpha_used = alpha;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    const SubsetRegressor* reg = nullptr;
    for (const auto& r : regressors)
      if (r.cell == static_cast<int>(c)) reg = &r;
    if (!reg) fail(errc::unknown_cell, "no regressor for cell " + std::to_string(c));

    if (cell.y.empty())
      fail(errc::empty_cell, "cell " + std::to_string(c) + " is empty");
    CellGap gap;
    gap.cell = static_cast<int>(c);
    gap.n = cell.y.size();
    std::vector<double> pred(cell.y.size());
    for (std::size_t i = 0; i < cell.y.size(); ++i)
      pred[i] = reg->apply(cell.yhat[i]);
    gap.mse_reg = detail::mse_of(pred, cell.y);
    std::vector<char> all(cell.y.size(), 1);
    gap.cov = cell.y.size() >= 2 ? conditional_cov(cell.yhat, cell.y, all) : 0.0;
    gap.lhs = gap.mse_reg + 4.0 * gap.cov * gap.cov;

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pm.m(); ++j) {
      detail::KahanSum acc;
      for (std::size_t i : rows_by_cell[c]) {
        double d = ds.outcome[i] - pm.preds.at(i, j);
        acc.add(d * d);
      }
      best = std::min(best, acc.value() / static_cast<double>(gap.n));
    }
    gap.mse_best_model = best;
    gap.rhs_min = best + 2.0 * alpha;
    // 1e-9 absorbs float roundoff; the inequality is exact in real arithmetic
    gap.holds = gap.lhs <= gap.rhs_min + 1e-9;
    report.all_hold = report.all_hold && gap.holds;
    report.per_cell.push_back(gap);
  }
  return report;
}

// ---------------------------------------------------------------------------
// expert informativeness certificate

struct ExpertCellTest {
  int cell = 0;
  std::size_t n = 0;
  double cov = 0.0;
  double threshold = 0.0;
  bool informative = false;  // strict exceedance
};

struct ExpertTestReport {
  double alpha_used = 0.0;
  double threshold = 0.0;  // sqrt(alpha/2)
  std::vector<ExpertCellTest> per_cell;
  bool any_informative = false;
  // contrapositive reading of the certificate, carried into serialized reports
  std::string note =
      "within-cell |Cov(Y, expert)| above sqrt(alpha/2) certifies signal no "
      "binary class member carries; certificate applies to binary classes only";
};

inline ExpertTestReport expert_test(const Dataset& ds, const Partition& partition,
                                    double alpha) {
  if (alpha < 0.0) fail(errc::bad_param, "alpha must be >= 0");
  auto cells = detail::expert_pairs_by_cell(ds, partition);
  ExpertTestReport report;
  report.alpha_used = alpha;
  report.threshold = std::sqrt(alpha / 2.0);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ExpertCellTest t;
    t.cell = static_cast<int>(c);
    t.n = cells[c].y.size();
    t.threshold = report.threshold;
    if (t.n >= 2) {
      std::vector<char> all(t.n, 1);
      t.cov = conditional_cov(cells[c].y, cells[c].yhat, all);
      t.informative = std::abs(t.cov) > t.threshold;
    }
    report.any_informative = report.any_informative || t.informative;
    report.per_cell.push_back(t);
  }
  return report;
}

// ---------------------------------------------------------------------------
// rich feedback: linear recalibration of an arbitrary score

struct CalibratedScore {
  std::vector<double> base_scores;
  std::vector<double> calibrated;  // gamma + beta * base, on the masked rows
  double gamma = 0.0;
  double beta = 0.0;
  double eta_hat = 0.0;  // in-sample MSE left on the table after recalibration
  bool degenerate = false;
};

inline CalibratedScore calibrate_feedback(const std::vector<double>& scores,
                                          const std::vector<double>& outcome,
                                          const std::vector<char>& mask) {
  if (scores.size() != outcome.size() || scores.size() != mask.size())
    fail(errc::length_mismatch, "calibrate_feedback: lengths differ");
  std::vector<double> g, y;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    g.push_back(scores[i]);
    y.push_back(outcome[i]);
  }
  if (g.size() < 2) fail(errc::too_few_rows, "calibrate_feedback: need >= 2 rows");

  auto fit = detail::least_squares(g, y);
  CalibratedScore out;
  out.base_scores = g;
  out.gamma = fit.gamma;
  out.beta = fit.beta;
  out.degenerate = fit.degenerate;
  out.calibrated.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    out.calibrated[i] = fit.gamma + fit.beta * g[i];
  // a second linear pass over the calibrated scores cannot improve; whatever
  // tiny improvement float arithmetic finds is the residual gap
  auto refit = detail::least_squares(out.calibrated, y);
  std::vector<double> twice(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    twice[i] = refit.gamma + refit.beta * out.calibrated[i];
  out.eta_hat =
      std::max(0.0, detail::mse_of(out.calibrated, y) - detail::mse_of(twice, y));
  return out;
}

// Per-cell logistic fit with the linear fit as reference; eta_hat is the MSE
// the logistic link gains (or concedes) relative to linear, per cell.
struct NonlinearCellFit {
  SubsetRegressor regressor;
  double mse_logistic = 0.0;
  double mse_linear = 0.0;
  double eta_hat = 0.0;  // mse_logistic - mse_linear
};

struct NonlinearFitReport {
  std::vector<NonlinearCellFit> per_cell;
};

inline NonlinearFitReport nonlinear_subset_fit(const Dataset& ds,
                                               const Partition& partition) {
  auto logistic = fit_subset_regressors(ds, partition, RegressorKind::logistic);
  auto linear = fit_subset_regressors(ds, partition, RegressorKind::linear);
  auto cells = detail::expert_pairs_by_cell(ds, partition);
  NonlinearFitReport report;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    NonlinearCellFit fit;
    fit.regressor = logistic[c];
    std::vector<double> pl(cells[c].y.size()), pn(cells[c].y.size());
    for (std::size_t i = 0; i < cells[c].y.size(); ++i) {
      pl[i] = logistic[c].apply(cells[c].yhat[i]);
      pn[i] = linear[c].apply(cells[c].yhat[i]);
    }
    fit.mse_logistic = detail::mse_of(pl, cells[c].y);
    fit.mse_linear = detail::mse_of(pn, cells[c].y);
    fit.eta_hat = fit.mse_logistic - fit.mse_linear;
    report.per_cell.push_back(std::move(fit));
  }
  return report;
}

// ---------------------------------------------------------------------------
// finite-sample diagnostics

struct RademacherEstimate {
  double estimate = 0.0;
  int mc_reps = 0;
  std::size_t n = 0;
  std::string class_sample;  // free-form description of the sampled functions
};

// losses: one row per sampled function g, one column per sample point z_i.
// Estimates E[ sup_g | (1/n) sum_i eps_i * g(z_i) | ] over Rademacher signs.
inline RademacherEstimate empirical_rademacher(const Matrix& losses, int mc_reps,
                                               std::uint64_t seed,
                                               const std::string& class_sample = "") {
  if (losses.rows == 0 || losses.cols == 0)
    fail(errc::empty_input, "empirical_rademacher: empty loss matrix");
  if (mc_reps < 1) fail(errc::bad_param, "mc_reps must be >= 1");
  std::size_t n = losses.cols;
  std::vector<int> eps(n);
  detail::KahanSum total;
  for (int rep = 0; rep < mc_reps; ++rep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
    for (std::size_t i = 0; i < n; ++i) eps[i] = rng.sign();
    double sup = 0.0;
    for (std::size_t r = 0; r < losses.rows; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += eps[i] * losses.at(r, i);
      sup = std::max(sup, std::abs(s / static_cast<double>(n)));
    }
    total.add(sup);
  }
  RademacherEstimate est;
  est.estimate = total.value() / static_cast<double>(mc_reps);
  est.mc_reps = mc_reps;
  est.n = n;
  est.class_sample = class_sample;
  return est;
}

struct GeneralizationReport {
  double delta = 0.0;
  double epsilon = 0.0;
  double term_rademacher = 0.0;  // 4 * R_n
  double term_delta = 0.0;       // 2 * delta
  double bound_gap = 0.0;        // their sum: excess loss of the ERM fit
  double probability_floor = 0.0;
};

// Confidence floor (1-eps)(1-e^{-n eps delta^2 / 4K})(1-2 e^{-n eps / K});
// factors are clamped at 0 before multiplying since a negative "probability"
// is just a vacuous bound.
inline GeneralizationReport generalization_bound(std::size_t n, int k,
                                                 double epsilon, double delta,
                                                 double rademacher) {
  if (n == 0 || k < 1) fail(errc::bad_param, "need n >= 1 and K >= 1");
  if (!(epsilon > 0.0) || !(epsilon < 1.0))
    fail(errc::bad_param, "epsilon must lie in (0,1)");
  if (delta < 0.0) fail(errc::bad_param, "delta must be >= 0");
  if (rademacher < 0.0) fail(errc::bad_param, "rademacher estimate must be >= 0");
  GeneralizationReport report;
  report.delta = delta;
  report.epsilon = epsilon;
  report.term_rademacher = 4.0 * rademacher;
  report.term_delta = 2.0 * delta;
  report.bound_gap = report.term_rademacher + report.term_delta;
  double nn = static_cast<double>(n);
  double kk = static_cast<double>(k);
  double f1 = 1.0 - epsilon;
  double f2 = 1.0 - std::exp(-nn * epsilon * delta * delta / (4.0 * kk));
  double f3 = 1.0 - 2.0 * std::exp(-nn * epsilon / kk);
  report.probability_floor =
      std::max(0.0, f1) * std::max(0.0, f2) * std::max(0.0, f3);
  return report;
}

}  // namespace indist
