#pragma once

// Report structs rendered two ways: JSON (machine-readable, stable key order
// via nlohmann's sorted objects) and fixed-width text tables for terminals
// and the pipeline summary. Both renderings are deterministic functions of
// the struct contents.

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "indist/covariance.hpp"
#include "indist/dataset.hpp"
#include "indist/expertise.hpp"
#include "indist/metrics.hpp"
#include "indist/partition_learn.hpp"
#include "indist/robustness.hpp"

namespace indist {

namespace detail {

inline std::string fmt_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render(const std::string& indent = "  ") const {
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows)
      for (std::size_t c = 0; c < row.size() && c < width.size(); ++c)
        width[c] = std::max(width[c], row[c].size());
    auto line = [&](const std::vector<std::string>& cells) {
      std::string s = indent;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        s += cells[c];
        if (c + 1 < cells.size()) s += std::string(width[c] - cells[c].size() + 2, ' ');
      }
      s += '\n';
      return s;
    };
    std::string out = line(header);
    for (const auto& row : rows) out += line(row);
    return out;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// audit

inline nlohmann::json audit_to_json(const AuditReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.per_cell)
    cells.push_back({{"k", c.cell},
                     {"n", c.n},
                     {"per_model", c.per_model_abs_cov},
                     {"max_abs_cov", c.max_abs_cov},
                     {"degenerate", c.degenerate}});
  return {{"alpha_hat", r.alpha_hat},
          {"any_degenerate", r.any_degenerate},
          {"cells", cells}};
}

inline std::string audit_to_table(const AuditReport& r) {
  detail::TextTable t;
  t.header = {"cell", "n", "max|cov|", "degenerate"};
  for (const auto& c : r.per_cell)
    t.rows.push_back({std::to_string(c.cell), std::to_string(c.n),
                      detail::fmt_num(c.max_abs_cov), c.degenerate ? "yes" : "no"});
  return "audit: alpha_hat = " + detail::fmt_num(r.alpha_hat) + "\n" + t.render();
}

// ---------------------------------------------------------------------------
// expert test

inline nlohmann::json expert_test_to_json(const ExpertTestReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.per_cell)
    cells.push_back({{"k", c.cell},
                     {"n", c.n},
                     {"cov", c.cov},
                     {"threshold", c.threshold},
                     {"informative", c.informative}});
  return {{"alpha_used", r.alpha_used},
          {"threshold", r.threshold},
          {"any_informative", r.any_informative},
          {"note", r.note},
          {"cells", cells}};
}

inline std::string expert_test_to_table(const ExpertTestReport& r) {
  detail::TextTable t;
  t.header = {"cell", "n", "cov(Y,expert)", "informative"};
  for (const auto& c : r.per_cell)
    t.rows.push_back({std::to_string(c.cell), std::to_string(c.n),
                      detail::fmt_num(c.cov), c.informative ? "yes" : "no"});
  return "expert test: threshold sqrt(alpha/2) = " + detail::fmt_num(r.threshold) +
         " (alpha = " + detail::fmt_num(r.alpha_used) + ")\n" + t.render() +
         "  note: " + r.note + "\n";
}

// ---------------------------------------------------------------------------
// incorporation

inline nlohmann::json regressors_to_json(const std::vector<SubsetRegressor>& regs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : regs)
    arr.push_back({{"cell", r.cell},
                   {"kind", regressor_kind_name(r.kind)},
                   {"gamma", r.gamma},
                   {"beta", r.beta},
                   {"n", r.n_cell},
                   {"degenerate_fallback", r.degenerate_fallback},
                   {"nonconverged_fallback", r.nonconverged_fallback},
                   {"coef_capped", r.coef_capped}});
  return arr;
}

inline nlohmann::json incorporation_to_json(const IncorporationGapReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.per_cell)
    cells.push_back({{"k", c.cell},
                     {"n", c.n},
                     {"mse_reg", c.mse_reg},
                     {"cov", c.cov},
                     {"lhs", c.lhs},
                     {"mse_best_model", c.mse_best_model},
                     {"rhs_min", c.rhs_min},
                     {"holds", c.holds}});
  return {{"alpha_used", r.alpha_used}, {"all_hold", r.all_hold}, {"cells", cells}};
}

inline std::string incorporation_to_table(const IncorporationGapReport& r) {
  detail::TextTable t;
  t.header = {"cell", "n", "mse_reg", "cov", "lhs", "best model mse", "rhs", "holds"};
  for (const auto& c : r.per_cell)
    t.rows.push_back({std::to_string(c.cell), std::to_string(c.n),
                      detail::fmt_num(c.mse_reg), detail::fmt_num(c.cov),
                      detail::fmt_num(c.lhs), detail::fmt_num(c.mse_best_model),
                      detail::fmt_num(c.rhs_min), c.holds ? "yes" : "no"});
  return "incorporation bound (alpha = " + detail::fmt_num(r.alpha_used) + "): " +
         (r.all_hold ? "holds in every cell" : "VIOLATED") + "\n" + t.render();
}

// ---------------------------------------------------------------------------
// robustness

inline nlohmann::json robustness_to_json(const RobustnessReport& r) {
  nlohmann::json policies = nlohmann::json::array();
  for (const auto& block : r.per_policy) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : block.rows)
      rows.push_back({{"cell", e.cell},
                      {"model", e.model},
                      {"n_cell", e.n_cell},
                      {"n_complied", e.n_complied},
                      {"p_comply", e.p_comply},
                      {"vacuous", e.vacuous},
                      {"lhs", e.lhs},
                      {"rhs", e.rhs},
                      {"holds", e.holds}});
    policies.push_back({{"policy", block.policy}, {"rows", rows}});
  }
  return {{"alpha_used", r.alpha_used},
          {"alpha_pi", r.alpha_pi},
          {"alpha_prod", r.alpha_prod},
          {"all_hold", r.all_hold},
          {"policies", policies}};
}

inline std::string robustness_to_table(const RobustnessReport& r) {
  std::size_t total = 0, vacuous = 0, held = 0;
  for (const auto& block : r.per_policy)
    for (const auto& e : block.rows) {
      ++total;
      if (e.vacuous)
        ++vacuous;
      else if (e.holds)
        ++held;
    }
  std::string out = "robustness (alpha = " + detail::fmt_num(r.alpha_used) +
                    ", policies = " + std::to_string(r.per_policy.size()) + ")\n";
  out += "  rows: " + std::to_string(total) + "  vacuous: " + std::to_string(vacuous) +
         "  holding: " + std::to_string(held) + "/" + std::to_string(total - vacuous) +
         (r.all_hold ? "  (all hold)" : "  (VIOLATIONS)") + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// metrics

inline nlohmann::json metric_report_to_json(const MetricReport& r) {
  return {{"metric", metric_name(r.metric)},
          {"point", r.point},
          {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},
          {"n_boot", r.n_boot},
          {"seed", r.seed},
          {"n", r.n},
          {"degenerate", r.degenerate},
          {"point_outside_ci", r.point_outside_ci}};
}

inline std::string metric_report_to_line(const MetricReport& r) {
  std::string s = std::string(metric_name(r.metric)) + " = " + detail::fmt_num(r.point) +
                  "  [" + detail::fmt_num(r.ci_low) + ", " + detail::fmt_num(r.ci_high) +
                  "]  (n = " + std::to_string(r.n) +
                  ", replicates = " + std::to_string(r.n_boot) + ")";
  if (r.degenerate) s += "  degenerate";
  if (r.point_outside_ci) s += "  point-outside-ci";
  return s;
}

// ---------------------------------------------------------------------------
// partitions and certificates

inline nlohmann::json partition_summary_to_json(const Partition& p) {
  return {{"cells", p.cell_count},
          {"sizes", p.cell_sizes},
          {"provenance", provenance_name(p.provenance)}};
}

inline nlohmann::json certificate_to_json(const PartitionCertificate& c) {
  double worst = 0.0;
  for (double a : c.per_cell_alpha) worst = std::max(worst, a);
  return {{"per_cell_alpha", c.per_cell_alpha}, {"alpha", worst}};
}

inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace indist
