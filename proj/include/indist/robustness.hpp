#pragma once

// Robustness to heterogeneous compliance. A compliance policy is a binary
// function of the features saying whether a user adopts the algorithm's
// recommendation. When the partition is also calibrated against the policy
// class and the product class {f(X)*pi(X)}, the per-cell constant E_k[Y]
// stays within 6*alpha/P_k(pi=1) of every model's squared error on the
// complied subpopulation. This module audits those premises, evaluates the
// bound, and builds the worst-case deferral subset showing why a policy-free
// guarantee fails: a duplicate-feature-row group where a constant beats the
// model.

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
#include "indist/partition_learn.hpp"
#include "indist/rng.hpp"

namespace indist {

struct Stump {
  int feature = 0;
  double threshold = 0.0;
  bool comply_if_ge = true;  // true: mask = (x[feature] >= threshold)

  bool eval(const double* x) const {
    return comply_if_ge ? x[feature] >= threshold : x[feature] < threshold;
  }
};

struct CompliancePolicy {
  enum class Kind { always, stump, tree2, never_on_set };
  Kind kind = Kind::always;
  Stump stump;                   // stump / never_on_set (complement of region)
  Stump root, left_child, right_child;  // depth-2 tree
  bool leaves[4] = {true, true, true, true};  // (root,child) outcome bits

  bool complies(const double* x) const {
    switch (kind) {
      case Kind::always:
        return true;
      case Kind::stump:
        return stump.eval(x);
      case Kind::never_on_set:
        return !stump.eval(x);
      case Kind::tree2: {
        if (root.eval(x)) return leaves[right_child.eval(x) ? 3 : 2];
        return leaves[left_child.eval(x) ? 1 : 0];
      }
    }
    return true;
  }

  std::vector<char> mask(const Matrix& features) const {
    std::vector<char> out(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i)
      out[i] = complies(features.row(i)) ? 1 : 0;
    return out;
  }

  std::string describe() const {
    switch (kind) {
      case Kind::always:
        return "always";
      case Kind::stump:
        return "stump(f" + std::to_string(stump.feature) +
               (stump.comply_if_ge ? " >= " : " < ") + format_double(stump.threshold) +
               ")";
      case Kind::never_on_set:
        return "never_on(f" + std::to_string(stump.feature) +
               (stump.comply_if_ge ? " >= " : " < ") + format_double(stump.threshold) +
               ")";
      case Kind::tree2:
        return "tree2(f" + std::to_string(root.feature) + " @ " +
               format_double(root.threshold) + ")";
    }
    return "always";
  }
};

// Deterministic sample of policies over the observed feature ranges.
inline std::vector<CompliancePolicy> gen_policy_class(CompliancePolicy::Kind kind,
                                                      const Matrix& features,
                                                      int count, std::uint64_t seed) {
  if (count < 1) fail(errc::bad_param, "policy count must be >= 1");
  if (features.cols == 0) fail(errc::empty_input, "no features to build policies on");
  std::vector<double> lo(features.cols), hi(features.cols);
  for (std::size_t j = 0; j < features.cols; ++j) {
    lo[j] = std::numeric_limits<double>::infinity();
    hi[j] = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < features.rows; ++i) {
      lo[j] = std::min(lo[j], features.at(i, j));
      hi[j] = std::max(hi[j], features.at(i, j));
    }
  }
  auto random_stump = [&](Rng& rng) {
    Stump s;
    s.feature = static_cast<int>(rng.index(features.cols));
    s.threshold = rng.uniform(lo[s.feature], hi[s.feature]);
    s.comply_if_ge = rng.bernoulli(0.5);
    return s;
  };
  std::vector<CompliancePolicy> out;
  out.reserve(count);
  for (int p = 0; p < count; ++p) {
    Rng rng(derive_seed(seed, 0x90C1, static_cast<std::uint64_t>(p)));
    CompliancePolicy policy;
    policy.kind = kind;
    switch (kind) {
      case CompliancePolicy::Kind::always:
        break;
      case CompliancePolicy::Kind::stump:
      case CompliancePolicy::Kind::never_on_set:
        policy.stump = random_stump(rng);
        break;
      case CompliancePolicy::Kind::tree2:
        policy.root = random_stump(rng);
        policy.left_child = random_stump(rng);
        policy.right_child = random_stump(rng);
        for (int l = 0; l < 4; ++l) policy.leaves[l] = rng.bernoulli(0.5);
        break;
    }
    out.push_back(policy);
  }
  return out;
}

// ---------------------------------------------------------------------------
// premise audit: calibration against the policies and the product class

struct ProductClassAudit {
  double alpha_pi = 0.0;    // max |Cov_k(Y, pi)|
  double alpha_prod = 0.0;  // max |Cov_k(Y, f*pi)|
  double alpha = 0.0;       // max of the two: the level Eq.-style bounds use
};

inline ProductClassAudit audit_product_class(
    const Dataset& ds, const PredictionMatrix& pm,
    const std::vector<CompliancePolicy>& policies, const Partition& partition) {
  if (pm.n() != ds.n() || partition.n() != ds.n())
    fail(errc::row_count_mismatch, "audit_product_class: row counts differ");
  auto cells = partition.rows_by_cell();
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (cells[c].size() < 2)
      fail(errc::degenerate_cell,
           "cell " + std::to_string(c) + " has fewer than 2 rows");

  ProductClassAudit audit;
  std::vector<double> pi_col(ds.n()), prod_col(ds.n());
  std::vector<char> cell_mask(ds.n());
  for (const auto& policy : policies) {
    auto mask = policy.mask(ds.features);
    for (std::size_t i = 0; i < ds.n(); ++i) pi_col[i] = mask[i] ? 1.0 : 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::fill(cell_mask.begin(), cell_mask.end(), 0);
      for (std::size_t i : cells[c]) cell_mask[i] = 1;
      audit.alpha_pi = std::max(
          audit.alpha_pi, std::abs(conditional_cov(pi_col, ds.outcome, cell_mask)));
      for (std::size_t j = 0; j < pm.m(); ++j) {
        for (std::size_t i : cells[c]) prod_col[i] = pi_col[i] * pm.preds.at(i, j);
        audit.alpha_prod = std::max(
            audit.alpha_prod,
            std::abs(conditional_cov(prod_col, ds.outcome, cell_mask)));
      }
    }
  }
  audit.alpha = std::max(audit.alpha_pi, audit.alpha_prod);
  return audit;
}

// Per-cell means: the prediction that needs no knowledge of who complies.
inline std::vector<double> canonical_predictor(const Dataset& ds,
                                               const Partition& partition) {
  if (partition.n() != ds.n())
    fail(errc::row_count_mismatch, "canonical_predictor: row counts differ");
  std::vector<detail::KahanSum> sums(partition.cell_count);
  std::vector<std::size_t> counts(partition.cell_count, 0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    sums[partition.assignment[i]].add(ds.outcome[i]);
    ++counts[partition.assignment[i]];
  }
  std::vector<double> means(partition.cell_count);
  for (int c = 0; c < partition.cell_count; ++c) {
    if (counts[c] == 0)
      fail(errc::empty_cell, "cell " + std::to_string(c) + " is empty");
    means[c] = sums[c].value() / static_cast<double>(counts[c]);
  }
  return means;
}

struct PolicyCellEval {
  int cell = 0;
  int model = 0;
  std::size_t n_cell = 0;
  std::size_t n_complied = 0;
  double p_comply = 0.0;
  bool vacuous = false;  // nobody complies: bound unevaluable, reported anyway
  double lhs = 0.0;      // E_k[(Y - E_k[Y])^2 | pi=1]
  double rhs = 0.0;      // E_k[(Y - f)^2 | pi=1] + 6*alpha/p_comply
  bool holds = false;
};

inline std::vector<PolicyCellEval> evaluate_under_policy(const Dataset& ds,
                                                         const PredictionMatrix& pm,
                                                         const Partition& partition,
                                                         const CompliancePolicy& policy,
                                                         double alpha) {
  if (pm.n() != ds.n() || partition.n() != ds.n())
    fail(errc::row_count_mismatch, "evaluate_under_policy: row counts differ");
  auto cells = partition.rows_by_cell();
  auto means = canonical_predictor(ds, partition);
  auto mask = policy.mask(ds.features);

  std::vector<PolicyCellEval> rows;
  rows.reserve(cells.size() * pm.m());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::size_t complied = 0;
    for (std::size_t i : cells[c])
      if (mask[i]) ++complied;
    double p = cells[c].empty()
                   ? 0.0
                   : static_cast<double>(complied) / static_cast<double>(cells[c].size());
    for (std::size_t j = 0; j < pm.m(); ++j) {
      PolicyCellEval eval;
      eval.cell = static_cast<int>(c);
      eval.model = static_cast<int>(j);
      eval.n_cell = cells[c].size();
      eval.n_complied = complied;
      eval.p_comply = p;
      if (complied == 0) {
        eval.vacuous = true;
        rows.push_back(eval);
        continue;
      }
      detail::KahanSum lhs_acc, model_acc;
      for (std::size_t i : cells[c]) {
        if (!mask[i]) continue;
        double dc = ds.outcome[i] - means[c];
        double dm = ds.outcome[i] - pm.preds.at(i, j);
        lhs_acc.add(dc * dc);
        model_acc.add(dm * dm);
      }
      double nc = static_cast<double>(complied);
      eval.lhs = lhs_acc.value() / nc;
      eval.rhs = model_acc.value() / nc + 6.0 * alpha / p;
      eval.holds = eval.lhs <= eval.rhs + 1e-9;  // float guard, exact in reals
      rows.push_back(eval);
    }
  }
  return rows;
}

struct RobustnessReport {
  double alpha_used = 0.0;
  double alpha_pi = 0.0;
  double alpha_prod = 0.0;
  struct PolicyBlock {
    std::string policy;
    std::vector<PolicyCellEval> rows;
  };
  std::vector<PolicyBlock> per_policy;
  bool all_hold = true;  // over non-vacuous rows
};

inline RobustnessReport robustness_report(const Dataset& ds,
                                          const PredictionMatrix& pm,
                                          const Partition& partition,
                                          const std::vector<CompliancePolicy>& policies) {
  auto audit = audit_product_class(ds, pm, policies, partition);
  RobustnessReport report;
  report.alpha_used = audit.alpha;
  report.alpha_pi = audit.alpha_pi;
  report.alpha_prod = audit.alpha_prod;
  for (const auto& policy : policies) {
    RobustnessReport::PolicyBlock block;
    block.policy = policy.describe();
    block.rows = evaluate_under_policy(ds, pm, partition, policy, audit.alpha);
    for (const auto& row : block.rows)
      if (!row.vacuous) report.all_hold = report.all_hold && row.holds;
    report.per_policy.push_back(std::move(block));
  }
  return report;
}

// ---------------------------------------------------------------------------
// impossibility construction: the subset where a constant beats the model

struct AdversarialSubset {
  std::vector<char> mask;  // rows of the returned duplicate-feature group
  double constant = 0.0;   // the group mean that wins
  double mse_f = 0.0;
  double mse_const = 0.0;
  std::size_t n_rows = 0;
};

// Scans groups of exactly identical feature rows (E[Y|X] is constant there by
// construction) for one where the given scores lose to the group mean;
// returns the group with the largest strict gap. Continuous features must be
// quantized by the caller first; without duplicate rows there is no group to
// find and the search fails as NoAdversarialSubset.
inline AdversarialSubset adversarial_policy(const Matrix& features,
                                            const std::vector<double>& outcome,
                                            const std::vector<double>& scores) {
  if (features.rows != outcome.size() || outcome.size() != scores.size())
    fail(errc::length_mismatch, "adversarial_policy: input lengths differ");
  auto groups = detail::exact_row_groups(features);

  double best_gap = 0.0;
  int best_group = -1;
  double best_c = 0.0, best_mse_f = 0.0, best_mse_const = 0.0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& rows = groups[gi];
    if (rows.size() < 2) continue;
    detail::KahanSum sum_y;
    for (std::size_t i : rows) sum_y.add(outcome[i]);
    double c = sum_y.value() / static_cast<double>(rows.size());
    detail::KahanSum acc_c, acc_f;
    for (std::size_t i : rows) {
      acc_c.add((outcome[i] - c) * (outcome[i] - c));
      acc_f.add((outcome[i] - scores[i]) * (outcome[i] - scores[i]));
    }
    double mse_const = acc_c.value() / static_cast<double>(rows.size());
    double mse_f = acc_f.value() / static_cast<double>(rows.size());
    double gap = mse_f - mse_const;
    if (gap > best_gap) {  // strict: ties keep the earlier (lower-index) group
      best_gap = gap;
      best_group = static_cast<int>(gi);
      best_c = c;
      best_mse_f = mse_f;
      best_mse_const = mse_const;
    }
  }
  if (best_group < 0)
    fail(errc::no_adversarial_subset,
         "scores match the group means on every duplicate-feature group");

  AdversarialSubset out;
  out.mask.assign(outcome.size(), 0);
  for (std::size_t i : groups[best_group]) out.mask[i] = 1;
  out.constant = best_c;
  out.mse_f = best_mse_f;
  out.mse_const = best_mse_const;
  out.n_rows = groups[best_group].size();
  return out;
}

}  // namespace indist
