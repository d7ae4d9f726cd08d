#pragma once

// End-to-end run: acquire data (synthetic or from files), learn a partition,
// audit it, test the expert, fit incorporation regressors, evaluate
// compliance robustness, compute headline metrics, and write the whole thing
// as a bundle of JSON reports plus a plain-text summary. The bundle is a pure
// function of (config, seed): reruns produce identical bytes, and the thread
// count never changes results. Stage failures propagate with the stage name
// prefixed so a bundle-level error names its module.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "indist/boosting.hpp"
#include "indist/covariance.hpp"
#include "indist/dataset.hpp"
#include "indist/errors.hpp"
#include "indist/expertise.hpp"
#include "indist/metrics.hpp"
#include "indist/partition_learn.hpp"
#include "indist/report_io.hpp"
#include "indist/robustness.hpp"
#include "indist/synth.hpp"

namespace indist {

struct PipelineConfig {
  std::uint64_t seed = 0;
  int threads = 1;

  bool use_synth = false;
  SynthSpec synth;
  std::string data_path;
  DatasetSchema schema;
  std::string preds_path;

  std::string partition_method = "cluster";  // cluster | net | boost
  int cluster_k = 2;
  double net_radius = 0.1;
  BoostConfig boost;

  RegressorKind incorporate_kind = RegressorKind::linear;

  CompliancePolicy::Kind policy_kind = CompliancePolicy::Kind::stump;
  int policy_count = 20;

  Metric metric = Metric::mcc;
  int n_boot = kDefaultBootReplicates;
  int n_perm = kDefaultPermReplicates;
  double bin_threshold = 0.5;  // binarization cutoff for mcc/tpr/tnr
};

inline PipelineConfig parse_pipeline_config(const nlohmann::json& j) {
  PipelineConfig cfg;
  cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
  cfg.threads = j.value("threads", 1);
  if (cfg.threads < 1) fail(errc::bad_spec, "threads must be >= 1");

  bool has_synth = j.contains("synth");
  bool has_data = j.contains("data");
  if (has_synth == has_data)
    fail(errc::bad_spec, "config needs exactly one of 'synth' or 'data'");
  if (has_synth) {
    cfg.use_synth = true;
    const auto& s = j.at("synth");
    if (!s.contains("generator")) fail(errc::bad_spec, "synth.generator is required");
    cfg.synth.generator = generator_from_name(s.at("generator").get<std::string>());
    cfg.synth.n = s.value("n", static_cast<std::size_t>(1000));
    cfg.synth.d = s.value("d", static_cast<std::size_t>(2));
    cfg.synth.effect = s.value("effect", 0.1);
    cfg.synth.k_cells = s.value("k_cells", 4);
    cfg.synth.m_models = s.value("m_models", 5);
    cfg.synth.noise = s.value("noise", -1.0);
    cfg.synth.seed = cfg.seed;
  } else {
    const auto& d = j.at("data");
    if (!d.contains("path")) fail(errc::bad_spec, "data.path is required");
    cfg.data_path = d.at("path").get<std::string>();
    cfg.schema.outcome_col = d.value("y_col", std::string("y"));
    if (d.contains("expert_col"))
      cfg.schema.expert_col = d.at("expert_col").get<std::string>();
    if (d.contains("id_col")) cfg.schema.id_col = d.at("id_col").get<std::string>();
    if (d.contains("features"))
      cfg.schema.feature_cols = d.at("features").get<std::vector<std::string>>();
    if (d.contains("feedback_cols"))
      cfg.schema.feedback_cols = d.at("feedback_cols").get<std::vector<std::string>>();
    std::string delim = d.value("delim", std::string(","));
    if (delim.size() != 1) fail(errc::bad_spec, "delim must be one character");
    cfg.schema.delimiter = delim[0];
    if (!j.contains("preds") || !j.at("preds").contains("path"))
      fail(errc::bad_spec, "preds.path is required with file data");
    cfg.preds_path = j.at("preds").at("path").get<std::string>();
  }

  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    cfg.partition_method = p.value("method", std::string("cluster"));
    if (cfg.partition_method != "cluster" && cfg.partition_method != "net" &&
        cfg.partition_method != "boost")
      fail(errc::bad_spec, "partition.method must be cluster, net, or boost");
    cfg.cluster_k = p.value("k", 2);
    cfg.net_radius = p.value("radius", 0.1);
    cfg.boost.alpha = p.value("alpha", 0.05);
    cfg.boost.max_rounds = p.value("max_rounds", 200);
    cfg.boost.min_cell = p.value("min_cell", static_cast<std::size_t>(10));
  }
  cfg.boost.seed = cfg.seed;

  if (j.contains("incorporate"))
    cfg.incorporate_kind =
        regressor_kind_from_name(j.at("incorporate").value("kind", std::string("linear")));

  if (j.contains("robustness")) {
    const auto& r = j.at("robustness");
    std::string kind = r.value("policy_kind", std::string("stump"));
    if (kind == "always")
      cfg.policy_kind = CompliancePolicy::Kind::always;
    else if (kind == "stump")
      cfg.policy_kind = CompliancePolicy::Kind::stump;
    else if (kind == "tree2")
      cfg.policy_kind = CompliancePolicy::Kind::tree2;
    else if (kind == "never_on_set")
      cfg.policy_kind = CompliancePolicy::Kind::never_on_set;
    else
      fail(errc::bad_spec, "unknown policy_kind '" + kind + "'");
    cfg.policy_count = r.value("count", 20);
  }

  if (j.contains("report")) {
    const auto& m = j.at("report");
    cfg.metric = metric_from_name(m.value("metric", std::string("mcc")));
    cfg.n_boot = m.value("n_boot", kDefaultBootReplicates);
    cfg.n_perm = m.value("n_perm", kDefaultPermReplicates);
    cfg.bin_threshold = m.value("threshold", 0.5);
  }
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(errc::parse_error, "config '" + path + "': " + e.what());
  }
  return parse_pipeline_config(j);
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail(errc::io_error, "short write on '" + path.string() + "'");
}

template <typename Fn>
void pipeline_stage(const char* name, Fn&& fn) {
  try {
    fn();
  } catch (const KitError& e) {
    fail(e.code(), std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    fail(errc::io_error, std::string(name) + ": " + e.what());
  }
}

inline std::vector<double> binarized(const std::vector<double>& v, double threshold) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] >= threshold ? 1.0 : 0.0;
  return out;
}

}  // namespace detail

inline void run_pipeline(const PipelineConfig& config, const std::string& out_dir,
                         int threads_override = 0) {
  PipelineConfig cfg = config;
  if (threads_override > 0) cfg.threads = threads_override;
  std::filesystem::path out(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) fail(errc::io_error, "cannot create '" + out_dir + "': " + ec.message());

  std::string summary;

  // data
  Dataset ds;
  PredictionMatrix pm;
  detail::pipeline_stage("data", [&] {
    if (cfg.use_synth) {
      SynthOutput synth = gen_synthetic(cfg.synth);
      ds = std::move(synth.dataset);
      pm = std::move(synth.preds);
      save_dataset((out / "data.csv").string(), ds);
      save_predictions((out / "preds.csv").string(), pm);
      detail::write_text(out / "sidecar.json", json_text(synth.sidecar));
    } else {
      ds = load_dataset(cfg.data_path, cfg.schema);
      pm = load_predictions(cfg.preds_path, ds);
    }
  });
  summary += "rows: " + std::to_string(ds.n()) + "  features: " + std::to_string(ds.d()) +
             "  models: " + std::to_string(pm.m()) +
             "  expert: " + (ds.expert ? "yes" : "no") +
             "  seed: " + std::to_string(cfg.seed) + "\n\n";

  // partition
  Partition partition;
  detail::pipeline_stage("partition", [&] {
    if (cfg.partition_method == "cluster") {
      ClusterSpec spec;
      spec.target = ClusterSpec::Target::cell_count;
      spec.k = cfg.cluster_k;
      partition = cluster_finite_class(pm, spec);
    } else if (cfg.partition_method == "net") {
      LipschitzSpec spec;
      spec.radius = cfg.net_radius;
      partition = epsilon_net_partition(pm.preds, spec);
    } else {
      BoostedPredictor model = fit_boosted(ds, cfg.boost);
      detail::write_text(out / "model.json", json_text(boosted_to_json(model)));
      partition = level_set_partition(model, ds);
    }
    save_partition((out / "partition.txt").string(), partition, ds.row_ids);
  });
  summary += "partition: " + cfg.partition_method + ", " +
             std::to_string(partition.cell_count) + " cells\n\n";

  // audit
  AuditReport audit;
  detail::pipeline_stage("audit", [&] {
    audit = audit_partition(ds, pm, partition, cfg.threads);
    detail::write_text(out / "audit.json", json_text(audit_to_json(audit)));
  });
  summary += audit_to_table(audit) + "\n";

  // expert test
  detail::pipeline_stage("expert-test", [&] {
    if (!ds.expert) {
      detail::write_text(out / "expert_test.json",
                         json_text({{"skipped", true}, {"reason", "no expert column"}}));
      summary += "expert test: skipped (no expert column)\n\n";
      return;
    }
    ExpertTestReport report = expert_test(ds, partition, audit.alpha_hat);
    detail::write_text(out / "expert_test.json", json_text(expert_test_to_json(report)));
    summary += expert_test_to_table(report) + "\n";
  });

  // incorporation
  detail::pipeline_stage("incorporate", [&] {
    if (!ds.expert) {
      detail::write_text(out / "incorporation.json",
                         json_text({{"skipped", true}, {"reason", "no expert column"}}));
      summary += "incorporation: skipped (no expert column)\n\n";
      return;
    }
    auto regressors = fit_subset_regressors(ds, partition, cfg.incorporate_kind);
    auto gap = incorporation_gap(ds, pm, partition, regressors, audit.alpha_hat);
    nlohmann::json body = incorporation_to_json(gap);
    body["regressors"] = regressors_to_json(regressors);
    detail::write_text(out / "incorporation.json", json_text(body));
    summary += incorporation_to_table(gap) + "\n";
  });

  // robustness
  detail::pipeline_stage("robustness", [&] {
    auto policies =
        gen_policy_class(cfg.policy_kind, ds.features, cfg.policy_count, cfg.seed);
    RobustnessReport report = robustness_report(ds, pm, partition, policies);
    detail::write_text(out / "robustness.json", json_text(robustness_to_json(report)));
    summary += robustness_to_table(report) + "\n";
  });

  // metrics: overall expert-vs-outcome with permutation baseline, then
  // per-cell conditionals and per-model points, mirroring the figure layout
  detail::pipeline_stage("report", [&] {
    bool binary_metric = cfg.metric == Metric::mcc || cfg.metric == Metric::tpr ||
                         cfg.metric == Metric::tnr;
    auto prep = [&](const std::vector<double>& v) {
      return binary_metric ? detail::binarized(v, cfg.bin_threshold) : v;
    };
    std::vector<double> truth = prep(ds.outcome);

    nlohmann::json body;
    body["metric"] = metric_name(cfg.metric);
    summary += "metrics (" + std::string(metric_name(cfg.metric)) + ")\n";

    if (ds.expert) {
      std::vector<double> pred = prep(*ds.expert);
      MetricReport overall = bootstrap_ci(cfg.metric, pred, truth, cfg.n_boot,
                                          derive_seed(cfg.seed, 0xB001), cfg.threads);
      MetricReport baseline =
          permutation_baseline(pred, truth, cfg.n_perm, derive_seed(cfg.seed, 0xB002),
                               cfg.metric, cfg.threads);
      body["expert_overall"] = metric_report_to_json(overall);
      body["expert_baseline"] = metric_report_to_json(baseline);
      summary += "  expert overall:  " + metric_report_to_line(overall) + "\n";
      summary += "  permutation baseline: mean = " + detail::fmt_num(baseline.point) +
                 "  band [" + detail::fmt_num(baseline.ci_low) + ", " +
                 detail::fmt_num(baseline.ci_high) + "]\n";

      nlohmann::json cells = nlohmann::json::array();
      auto rows_by_cell = partition.rows_by_cell();
      for (std::size_t c = 0; c < rows_by_cell.size(); ++c) {
        const auto& rows = rows_by_cell[c];
        nlohmann::json entry = {{"k", static_cast<int>(c)}, {"n", rows.size()}};
        if (rows.size() < 2) {
          entry["skipped"] = true;
        } else {
          std::vector<double> p, t;
          p.reserve(rows.size());
          t.reserve(rows.size());
          for (std::size_t i : rows) {
            p.push_back(pred[i]);
            t.push_back(truth[i]);
          }
          double point = cfg.metric == Metric::mcc ? mcc(p, t).value
                                                   : metric_value(cfg.metric, p, t);
          MetricReport cell_base = permutation_baseline(
              p, t, cfg.n_perm, derive_seed(cfg.seed, 0xB003, c), cfg.metric, cfg.threads);
          entry["point"] = point;
          if (cfg.metric == Metric::mcc) entry["degenerate"] = mcc(p, t).degenerate;
          entry["baseline_mean"] = cell_base.point;
          entry["baseline_band"] = {cell_base.ci_low, cell_base.ci_high};
          summary += "  cell " + std::to_string(c) + ": " +
                     std::string(metric_name(cfg.metric)) + " = " + detail::fmt_num(point) +
                     "  baseline mean = " + detail::fmt_num(cell_base.point) + "\n";
        }
        cells.push_back(entry);
      }
      body["expert_per_cell"] = cells;
    } else {
      body["expert_overall"] = {{"skipped", true}, {"reason", "no expert column"}};
      summary += "  expert metrics skipped (no expert column)\n";
    }

    nlohmann::json per_model = nlohmann::json::array();
    for (std::size_t j = 0; j < pm.m(); ++j) {
      std::vector<double> col(ds.n());
      for (std::size_t i = 0; i < ds.n(); ++i) col[i] = pm.preds.at(i, j);
      std::vector<double> pred = prep(col);
      double point = cfg.metric == Metric::mcc ? mcc(pred, truth).value
                                               : metric_value(cfg.metric, pred, truth);
      per_model.push_back({{"model", pm.model_names[j]}, {"point", point}});
      summary += "  model " + pm.model_names[j] + ": " +
                 std::string(metric_name(cfg.metric)) + " = " + detail::fmt_num(point) +
                 "\n";
    }
    body["per_model"] = per_model;
    detail::write_text(out / "metrics.json", json_text(body));
  });

  detail::pipeline_stage("summary", [&] {
    detail::write_text(out / "summary.txt", summary);
  });
}

}  // namespace indist
