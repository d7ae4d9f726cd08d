// indist-kit: command-line front end for the library. Verbs mirror the
// analysis stages: synth, partition (cluster|net|boost), audit, expert-test,
// incorporate, robustness, report, pipeline. Reports print to stdout as JSON
// or a table and are also written into --out. Exit codes: 0 success, 2
// validation error, 3 numeric degeneracy.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "indist/indist.hpp"

namespace fs = std::filesystem;
using namespace indist;

namespace {

struct DataArgs {
  std::string path;
  std::string y_col = "y";
  std::string expert_col;
  std::string id_col;
  std::vector<std::string> features;
  std::vector<std::string> feedback;
  std::string delim = ",";
};

void add_data_flags(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--data", a.path, "delimited text file with a header row")
      ->required();
  cmd->add_option("--y-col", a.y_col, "outcome column name (default y)");
  cmd->add_option("--expert-col", a.expert_col, "expert prediction column");
  cmd->add_option("--id-col", a.id_col, "row id column (default: row numbers)");
  cmd->add_option("--features", a.features, "feature columns (default: unmapped)")
      ->delimiter(',');
  cmd->add_option("--feedback-cols", a.feedback, "rich-feedback columns")
      ->delimiter(',');
  cmd->add_option("--delim", a.delim, "field delimiter (default ,)");
}

char delim_char(const std::string& d) {
  if (d.size() != 1) fail(errc::bad_spec, "delimiter must be one character");
  return d[0];
}

Dataset load_data(const DataArgs& a) {
  DatasetSchema s;
  s.outcome_col = a.y_col;
  if (!a.expert_col.empty()) s.expert_col = a.expert_col;
  if (!a.id_col.empty()) s.id_col = a.id_col;
  s.feature_cols = a.features;
  s.feedback_cols = a.feedback;
  s.delimiter = delim_char(a.delim);
  return load_dataset(a.path, s);
}

struct OutArgs {
  std::string dir = ".";
  std::string format = "json";
};

void add_out_flags(CLI::App* cmd, OutArgs& o) {
  cmd->add_option("--out", o.dir, "output directory (default .)");
  cmd->add_option("--format", o.format, "stdout format: json or table")
      ->check(CLI::IsMember({"json", "table"}));
}

// writes the JSON file into --out and prints the chosen rendering
void emit(const OutArgs& o, const std::string& filename, const nlohmann::json& body,
          const std::string& table) {
  fs::create_directories(o.dir);
  detail::write_text(fs::path(o.dir) / filename, json_text(body));
  if (o.format == "json")
    std::cout << json_text(body);
  else
    std::cout << table;
}

double alpha_from_audit_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open audit report '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::parse_error, path + ": " + e.what());
  }
  if (!j.contains("alpha_hat"))
    fail(errc::parse_error, path + " has no alpha_hat field");
  return j["alpha_hat"].get<double>();
}

std::vector<CompliancePolicy> policies_from_spec(const std::string& spec,
                                                 const Matrix& features,
                                                 std::uint64_t seed) {
  std::string name = spec;
  int count = 1;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    name = spec.substr(0, colon);
    try {
      count = std::stoi(spec.substr(colon + 1));
    } catch (const std::exception&) {
      fail(errc::bad_spec, "policy count in '" + spec + "' is not an integer");
    }
  }
  CompliancePolicy::Kind kind;
  if (name == "always")
    kind = CompliancePolicy::Kind::always;
  else if (name == "stumps" || name == "stump")
    kind = CompliancePolicy::Kind::stump;
  else if (name == "trees" || name == "tree2")
    kind = CompliancePolicy::Kind::tree2;
  else if (name == "never" || name == "never_on_set")
    kind = CompliancePolicy::Kind::never_on_set;
  else
    fail(errc::bad_spec, "unknown policy class '" + name +
                             "' (use always, stumps:N, trees:N, never:N)");
  return gen_policy_class(kind, features, count, seed);
}

nlohmann::json partition_report(const PredictionMatrix& pm, const Partition& p) {
  nlohmann::json body = partition_summary_to_json(p);
  body["certificate"] = certificate_to_json(certify_partition(pm, p));
  return body;
}

std::string partition_table(const PredictionMatrix& pm, const Partition& p) {
  PartitionCertificate cert = certify_partition(pm, p);
  std::string out = "partition: " + std::to_string(p.cell_count) + " cells\n";
  auto cells = p.rows_by_cell();
  double worst = 0.0;
  for (int k = 0; k < p.cell_count; ++k) {
    out += "  cell " + std::to_string(k) + ": n = " +
           std::to_string(cells[k].size()) + ", certified alpha = " +
           detail::fmt_num(cert.per_cell_alpha[k]) + "\n";
    worst = std::max(worst, cert.per_cell_alpha[k]);
  }
  out += "worst-cell alpha = " + detail::fmt_num(worst) + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audit, certify, and exploit indistinguishable subsets"};
  app.require_subcommand(1);

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthSpec synth_spec;
  std::string synth_gen;
  OutArgs synth_out;
  synth->add_option("--generator", synth_gen,
                    "side_info | sufficiency | tree_realizable | adversarial_groups")
      ->required();
  synth->add_option("--n", synth_spec.n, "rows (default 1000)");
  synth->add_option("--d", synth_spec.d, "features (default 2)");
  synth->add_option("--models", synth_spec.m_models, "finite-class size (default 5)");
  synth->add_option("--k-cells", synth_spec.k_cells, "ground-truth cells (default 4)");
  synth->add_option("--effect", synth_spec.effect, "planted effect (default 0.1)");
  synth->add_option("--noise", synth_spec.noise, "noise level (default per generator)");
  synth->add_option("--seed", synth_spec.seed, "root seed (default 0)");
  add_out_flags(synth, synth_out);
  synth->callback([&] {
    synth_spec.generator = generator_from_name(synth_gen);
    SynthOutput out = gen_synthetic(synth_spec);
    fs::create_directories(synth_out.dir);
    fs::path dir(synth_out.dir);
    save_dataset((dir / "data.csv").string(), out.dataset);
    save_predictions((dir / "preds.csv").string(), out.preds);
    detail::write_text(dir / "sidecar.json", json_text(out.sidecar));
    std::cout << "wrote " << out.dataset.n() << " rows, " << out.preds.m()
              << " models to " << dir.string() << "\n";
  });

  // partition ---------------------------------------------------------------
  auto* part = app.add_subcommand("partition", "learn an indistinguishable partition");
  part->require_subcommand(1);

  auto* cluster = part->add_subcommand("cluster", "complete-linkage over predictions");
  DataArgs cluster_data;
  OutArgs cluster_out;
  std::string cluster_preds;
  ClusterSpec cluster_spec;
  add_data_flags(cluster, cluster_data);
  add_out_flags(cluster, cluster_out);
  cluster->add_option("--preds", cluster_preds, "prediction matrix file")->required();
  auto* k_opt = cluster->add_option("--k", cluster_spec.k, "cell count (default 2)");
  auto* diam_opt = cluster->add_option("--diameter", cluster_spec.diameter,
                                       "merge until diameters would exceed this");
  diam_opt->excludes(k_opt);
  cluster->callback([&] {
    Dataset ds = load_data(cluster_data);
    PredictionMatrix pm =
        load_predictions(cluster_preds, ds, delim_char(cluster_data.delim));
    if (diam_opt->count()) cluster_spec.target = ClusterSpec::Target::diameter_budget;
    Partition p = cluster_finite_class(pm, cluster_spec);
    fs::create_directories(cluster_out.dir);
    save_partition((fs::path(cluster_out.dir) / "partition.txt").string(), p,
                   ds.row_ids);
    emit(cluster_out, "partition_summary.json", partition_report(pm, p),
         partition_table(pm, p));
  });

  auto* net = part->add_subcommand("net", "epsilon-net over predictions");
  DataArgs net_data;
  OutArgs net_out;
  std::string net_preds, net_metric = "euclidean";
  double net_radius = 0.0, net_lipschitz = 0.0, net_alpha = 0.0;
  add_data_flags(net, net_data);
  add_out_flags(net, net_out);
  net->add_option("--preds", net_preds, "prediction matrix file")->required();
  auto* radius_opt = net->add_option("--radius", net_radius, "net radius");
  auto* lip_opt = net->add_option("--lipschitz", net_lipschitz,
                                  "class Lipschitz constant (with --alpha)");
  auto* alpha_opt =
      net->add_option("--alpha", net_alpha, "target alpha; radius = 4 alpha / L");
  net->add_option("--metric", net_metric, "euclidean or chebyshev")
      ->check(CLI::IsMember({"euclidean", "chebyshev"}));
  radius_opt->excludes(lip_opt)->excludes(alpha_opt);
  lip_opt->needs(alpha_opt);
  alpha_opt->needs(lip_opt);
  net->callback([&] {
    Dataset ds = load_data(net_data);
    PredictionMatrix pm = load_predictions(net_preds, ds, delim_char(net_data.delim));
    LipschitzSpec::Metric metric = net_metric == "chebyshev"
                                       ? LipschitzSpec::Metric::chebyshev
                                       : LipschitzSpec::Metric::euclidean;
    LipschitzSpec spec;
    if (radius_opt->count()) {
      spec.radius = net_radius;
      spec.metric = metric;
    } else if (lip_opt->count()) {
      spec = LipschitzSpec::from_alpha(net_lipschitz, net_alpha, metric);
    } else {
      fail(errc::bad_spec, "give --radius or --lipschitz with --alpha");
    }
    Partition p = epsilon_net_partition(pm.preds, spec);
    fs::create_directories(net_out.dir);
    save_partition((fs::path(net_out.dir) / "partition.txt").string(), p, ds.row_ids);
    emit(net_out, "partition_summary.json", partition_report(pm, p),
         partition_table(pm, p));
  });

  auto* boost = part->add_subcommand("boost", "boost level sets against trees");
  DataArgs boost_data;
  OutArgs boost_out;
  BoostConfig boost_cfg;
  add_data_flags(boost, boost_data);
  add_out_flags(boost, boost_out);
  boost->add_option("--alpha", boost_cfg.alpha, "target alpha (default 0.05)");
  boost->add_option("--max-rounds", boost_cfg.max_rounds, "round cap (default 200)");
  boost->add_option("--min-cell", boost_cfg.min_cell,
                    "freeze bins smaller than this (default 10)");
  boost->add_option("--seed", boost_cfg.seed, "root seed (default 0)");
  boost->callback([&] {
    Dataset ds = load_data(boost_data);
    BoostedPredictor model = fit_boosted(ds, boost_cfg);
    Partition p = level_set_partition(model, ds);
    fs::create_directories(boost_out.dir);
    fs::path dir(boost_out.dir);
    detail::write_text(dir / "model.json", json_text(boosted_to_json(model)));
    save_partition((dir / "partition.txt").string(), p, ds.row_ids);
    nlohmann::json body = partition_summary_to_json(p);
    body["rounds"] = model.stages.size();
    body["converged"] = model.converged;
    std::string table = "boost: " + std::to_string(model.stages.size()) +
                        " rounds, " + (model.converged ? "converged" : "hit cap") +
                        ", " + std::to_string(p.cell_count) + " cells\n";
    emit(boost_out, "partition_summary.json", body, table);
  });

  // audit ---------------------------------------------------------------
  auto* audit = app.add_subcommand("audit", "measure per-cell covariances");
  DataArgs audit_data;
  OutArgs audit_out;
  std::string audit_preds, audit_partition_file;
  int audit_threads = 1;
  add_data_flags(audit, audit_data);
  add_out_flags(audit, audit_out);
  audit->add_option("--preds", audit_preds, "prediction matrix file")->required();
  audit->add_option("--partition", audit_partition_file, "partition file")->required();
  audit->add_option("--threads", audit_threads, "worker threads (default 1)");
  audit->callback([&] {
    Dataset ds = load_data(audit_data);
    PredictionMatrix pm =
        load_predictions(audit_preds, ds, delim_char(audit_data.delim));
    Partition p = load_partition(audit_partition_file, ds);
    AuditReport report = audit_partition(ds, pm, p, audit_threads);
    emit(audit_out, "audit.json", audit_to_json(report), audit_to_table(report));
  });

  // expert-test -----------------------------------------------------------
  auto* etest = app.add_subcommand("expert-test",
                                   "certify expert signal outside the class");
  DataArgs etest_data;
  OutArgs etest_out;
  std::string etest_partition_file, etest_audit_file;
  double etest_alpha = 0.0;
  add_data_flags(etest, etest_data);
  add_out_flags(etest, etest_out);
  etest->add_option("--partition", etest_partition_file, "partition file")->required();
  auto* etest_alpha_opt =
      etest->add_option("--alpha", etest_alpha, "indistinguishability level");
  auto* etest_audit_opt = etest->add_option(
      "--alpha-from-audit", etest_audit_file, "read alpha_hat from an audit report");
  etest_alpha_opt->excludes(etest_audit_opt);
  etest->callback([&] {
    Dataset ds = load_data(etest_data);
    Partition p = load_partition(etest_partition_file, ds);
    double alpha;
    if (etest_alpha_opt->count())
      alpha = etest_alpha;
    else if (etest_audit_opt->count())
      alpha = alpha_from_audit_file(etest_audit_file);
    else
      fail(errc::bad_spec, "give --alpha or --alpha-from-audit");
    ExpertTestReport report = expert_test(ds, p, alpha);
    emit(etest_out, "expert_test.json", expert_test_to_json(report),
         expert_test_to_table(report));
  });

  // incorporate -------------------------------------------------------------
  auto* inc = app.add_subcommand("incorporate", "fit per-cell expert regressors");
  DataArgs inc_data;
  OutArgs inc_out;
  std::string inc_preds, inc_partition_file, inc_kind = "linear", inc_audit_file;
  double inc_alpha = 0.0;
  add_data_flags(inc, inc_data);
  add_out_flags(inc, inc_out);
  inc->add_option("--preds", inc_preds, "prediction matrix file")->required();
  inc->add_option("--partition", inc_partition_file, "partition file")->required();
  inc->add_option("--kind", inc_kind, "constant | identity | linear | logistic");
  auto* inc_alpha_opt =
      inc->add_option("--alpha", inc_alpha, "indistinguishability level");
  auto* inc_audit_opt = inc->add_option("--alpha-from-audit", inc_audit_file,
                                        "read alpha_hat from an audit report");
  inc_alpha_opt->excludes(inc_audit_opt);
  inc->callback([&] {
    Dataset ds = load_data(inc_data);
    PredictionMatrix pm = load_predictions(inc_preds, ds, delim_char(inc_data.delim));
    Partition p = load_partition(inc_partition_file, ds);
    double alpha;
    if (inc_alpha_opt->count())
      alpha = inc_alpha;
    else if (inc_audit_opt->count())
      alpha = alpha_from_audit_file(inc_audit_file);
    else
      alpha = audit_partition(ds, pm, p).alpha_hat;  // audit inline by default
    auto regressors = fit_subset_regressors(ds, p, regressor_kind_from_name(inc_kind));
    auto gap = incorporation_gap(ds, pm, p, regressors, alpha);
    nlohmann::json body = incorporation_to_json(gap);
    body["regressors"] = regressors_to_json(regressors);
    emit(inc_out, "incorporation.json", body, incorporation_to_table(gap));
  });

  // robustness ----------------------------------------------------------
  auto* rob = app.add_subcommand("robustness", "check bounds under compliance policies");
  DataArgs rob_data;
  OutArgs rob_out;
  std::string rob_preds, rob_partition_file, rob_policies = "stumps:20";
  std::uint64_t rob_seed = 0;
  add_data_flags(rob, rob_data);
  add_out_flags(rob, rob_out);
  rob->add_option("--preds", rob_preds, "prediction matrix file")->required();
  rob->add_option("--partition", rob_partition_file, "partition file")->required();
  rob->add_option("--policies", rob_policies,
                  "policy class, e.g. stumps:50, trees:20, always (default stumps:20)");
  rob->add_option("--seed", rob_seed, "policy sampling seed (default 0)");
  rob->callback([&] {
    Dataset ds = load_data(rob_data);
    PredictionMatrix pm = load_predictions(rob_preds, ds, delim_char(rob_data.delim));
    Partition p = load_partition(rob_partition_file, ds);
    auto policies = policies_from_spec(rob_policies, ds.features, rob_seed);
    RobustnessReport report = robustness_report(ds, pm, p, policies);
    emit(rob_out, "robustness.json", robustness_to_json(report),
         robustness_to_table(report));
  });

  // report --------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "metrics with bootstrap and baselines");
  DataArgs rep_data;
  OutArgs rep_out;
  std::string rep_preds, rep_metric = "mcc";
  int rep_boot = kDefaultBootReplicates, rep_perm = kDefaultPermReplicates;
  int rep_threads = 1;
  double rep_threshold = 0.5;
  std::uint64_t rep_seed = 0;
  add_data_flags(rep, rep_data);
  add_out_flags(rep, rep_out);
  rep->add_option("--preds", rep_preds, "prediction matrix file");
  rep->add_option("--metric", rep_metric, "mcc | tpr | tnr | mse | covariance | mean");
  rep->add_option("--n-boot", rep_boot, "bootstrap replicates (default 2000)");
  rep->add_option("--n-perm", rep_perm, "permutation replicates (default 2000)");
  rep->add_option("--threshold", rep_threshold,
                  "binarization threshold for binary metrics (default 0.5)");
  rep->add_option("--seed", rep_seed, "resampling seed (default 0)");
  rep->add_option("--threads", rep_threads, "worker threads (default 1)");
  rep->callback([&] {
    Dataset ds = load_data(rep_data);
    Metric metric = metric_from_name(rep_metric);
    bool binary = metric == Metric::mcc || metric == Metric::tpr ||
                  metric == Metric::tnr;
    auto prep = [&](const std::vector<double>& v) {
      return binary ? detail::binarized(v, rep_threshold) : v;
    };
    std::vector<double> truth = prep(ds.outcome);
    nlohmann::json body;
    body["metric"] = metric_name(metric);
    std::string table = "metrics (" + std::string(metric_name(metric)) + ")\n";
    if (ds.expert) {
      std::vector<double> pred = prep(*ds.expert);
      MetricReport ci = bootstrap_ci(metric, pred, truth, rep_boot,
                                     derive_seed(rep_seed, 0xB001), rep_threads);
      MetricReport base =
          permutation_baseline(pred, truth, rep_perm, derive_seed(rep_seed, 0xB002),
                               metric, rep_threads);
      body["expert_overall"] = metric_report_to_json(ci);
      body["expert_baseline"] = metric_report_to_json(base);
      table += "  expert:   " + metric_report_to_line(ci) + "\n";
      table += "  baseline: mean = " + detail::fmt_num(base.point) + "  band [" +
               detail::fmt_num(base.ci_low) + ", " + detail::fmt_num(base.ci_high) +
               "]\n";
    }
    if (!rep_preds.empty()) {
      PredictionMatrix pm =
          load_predictions(rep_preds, ds, delim_char(rep_data.delim));
      nlohmann::json models = nlohmann::json::array();
      for (std::size_t j = 0; j < pm.m(); ++j) {
        std::vector<double> col(pm.n());
        for (std::size_t i = 0; i < pm.n(); ++i) col[i] = pm.preds.at(i, j);
        std::vector<double> pred = prep(col);
        MetricReport ci = bootstrap_ci(metric, pred, truth, rep_boot,
                                       derive_seed(rep_seed, 0xC001, j), rep_threads);
        nlohmann::json entry = metric_report_to_json(ci);
        entry["model"] = pm.model_names[j];
        models.push_back(entry);
        table += "  " + pm.model_names[j] + ": " + metric_report_to_line(ci) + "\n";
      }
      body["models"] = models;
    }
    if (!ds.expert && rep_preds.empty())
      fail(errc::bad_spec, "nothing to report: no expert column and no --preds");
    emit(rep_out, "metrics.json", body, table);
  });

  // pipeline --------------------------------------------------------------
  auto* pipe = app.add_subcommand("pipeline", "run every stage from a config file");
  std::string pipe_config, pipe_out = ".";
  int pipe_threads = 0;
  pipe->add_option("--config", pipe_config, "pipeline config (JSON)")->required();
  pipe->add_option("--out", pipe_out, "bundle directory (default .)");
  pipe->add_option("--threads", pipe_threads, "override config thread count");
  pipe->callback([&] {
    PipelineConfig cfg = load_pipeline_config(pipe_config);
    run_pipeline(cfg, pipe_out, pipe_threads);
    std::ifstream summary(fs::path(pipe_out) / "summary.txt");
    std::cout << summary.rdbuf();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags are validation errors
  } catch (const KitError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return errc_is_degeneracy(e.code()) ? 3 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
