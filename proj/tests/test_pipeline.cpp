#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "indist/pipeline.hpp"

using namespace indist;
using nlohmann::json;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "indist_pipeline_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::filesystem::path& p) { return json::parse(read_file(p)); }

json minimal_synth_config() {
  return json{{"seed", 7},
              {"synth",
               {{"generator", "side_info"},
                {"n", 200},
                {"d", 2},
                {"k_cells", 2},
                {"effect", 0.1}}},
              {"partition", {{"method", "cluster"}, {"k", 2}}},
              {"robustness", {{"policy_kind", "stump"}, {"count", 5}}},
              {"report", {{"metric", "mcc"}, {"n_boot", 200}, {"n_perm", 200}}}};
}

const std::vector<std::string> kBundleFiles = {
    "data.csv",       "preds.csv",        "sidecar.json",    "partition.txt",
    "audit.json",     "expert_test.json", "incorporation.json",
    "robustness.json", "metrics.json",    "summary.txt"};

template <typename Fn>
std::optional<errc> thrown_code(Fn&& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const KitError& e) {
    if (message) *message = e.what();
    return e.code();
  }
  return std::nullopt;
}

}  // namespace

TEST_CASE("config parsing fills defaults and validates structure", "[pipeline]") {
  SECTION("minimal synth config gets the documented defaults") {
    auto cfg = parse_pipeline_config(
        json{{"synth", {{"generator", "side_info"}}}});
    REQUIRE(cfg.use_synth);
    REQUIRE(cfg.synth.generator == Generator::side_info);
    REQUIRE(cfg.synth.n == 1000);
    REQUIRE(cfg.synth.d == 2);
    REQUIRE(cfg.seed == 0);
    REQUIRE(cfg.threads == 1);
    REQUIRE(cfg.partition_method == "cluster");
    REQUIRE(cfg.cluster_k == 2);
    REQUIRE(cfg.incorporate_kind == RegressorKind::linear);
    REQUIRE(cfg.policy_kind == CompliancePolicy::Kind::stump);
    REQUIRE(cfg.policy_count == 20);
    REQUIRE(cfg.metric == Metric::mcc);
    REQUIRE(cfg.n_boot == kDefaultBootReplicates);
    REQUIRE(cfg.n_perm == kDefaultPermReplicates);
    REQUIRE(cfg.bin_threshold == 0.5);
  }

  SECTION("every recognized field lands in the config") {
    json j = {{"seed", 42},
              {"threads", 4},
              {"synth",
               {{"generator", "tree_realizable"},
                {"n", 321},
                {"d", 3},
                {"effect", 0.2},
                {"k_cells", 6},
                {"m_models", 2},
                {"noise", 0.01}}},
              {"partition",
               {{"method", "boost"}, {"alpha", 0.07}, {"max_rounds", 33},
                {"min_cell", 4}}},
              {"incorporate", {{"kind", "logistic"}}},
              {"robustness", {{"policy_kind", "tree2"}, {"count", 3}}},
              {"report",
               {{"metric", "tnr"}, {"n_boot", 150}, {"n_perm", 120},
                {"threshold", 0.4}}}};
    auto cfg = parse_pipeline_config(j);
    REQUIRE(cfg.seed == 42);
    REQUIRE(cfg.threads == 4);
    REQUIRE(cfg.synth.generator == Generator::tree_realizable);
    REQUIRE(cfg.synth.n == 321);
    REQUIRE(cfg.synth.m_models == 2);
    REQUIRE(cfg.synth.noise == 0.01);
    REQUIRE(cfg.synth.seed == 42);  // synth inherits the run seed
    REQUIRE(cfg.partition_method == "boost");
    REQUIRE(cfg.boost.alpha == 0.07);
    REQUIRE(cfg.boost.max_rounds == 33);
    REQUIRE(cfg.boost.min_cell == 4);
    REQUIRE(cfg.boost.seed == 42);
    REQUIRE(cfg.incorporate_kind == RegressorKind::logistic);
    REQUIRE(cfg.policy_kind == CompliancePolicy::Kind::tree2);
    REQUIRE(cfg.policy_count == 3);
    REQUIRE(cfg.metric == Metric::tnr);
    REQUIRE(cfg.n_boot == 150);
    REQUIRE(cfg.n_perm == 120);
    REQUIRE(cfg.bin_threshold == 0.4);
  }

  SECTION("file-data config maps the schema") {
    json j = {{"data",
               {{"path", "d.csv"},
                {"y_col", "label"},
                {"expert_col", "doc"},
                {"id_col", "case"},
                {"features", json::array({"a", "b"})},
                {"feedback_cols", json::array({"conf"})},
                {"delim", ";"}}},
              {"preds", {{"path", "p.csv"}}}};
    auto cfg = parse_pipeline_config(j);
    REQUIRE_FALSE(cfg.use_synth);
    REQUIRE(cfg.data_path == "d.csv");
    REQUIRE(cfg.preds_path == "p.csv");
    REQUIRE(cfg.schema.outcome_col == "label");
    REQUIRE(cfg.schema.expert_col == "doc");
    REQUIRE(cfg.schema.id_col == "case");
    REQUIRE(cfg.schema.feature_cols == std::vector<std::string>{"a", "b"});
    REQUIRE(cfg.schema.feedback_cols == std::vector<std::string>{"conf"});
    REQUIRE(cfg.schema.delimiter == ';');
  }

  SECTION("structural validation") {
    auto code = [](json j) {
      return thrown_code([&] { parse_pipeline_config(j); });
    };
    REQUIRE(code(json::object()) == errc::bad_spec);  // neither source
    REQUIRE(code(json{{"synth", {{"generator", "side_info"}}},
                      {"data", {{"path", "d.csv"}}}}) == errc::bad_spec);
    REQUIRE(code(json{{"synth", json::object()}}) == errc::bad_spec);
    REQUIRE(code(json{{"data", json::object()}}) == errc::bad_spec);
    REQUIRE(code(json{{"data", {{"path", "d.csv"}}}}) == errc::bad_spec);  // no preds
    REQUIRE(code(json{{"data", {{"path", "d.csv"}, {"delim", "::"}}},
                      {"preds", {{"path", "p.csv"}}}}) == errc::bad_spec);
    REQUIRE(code(json{{"synth", {{"generator", "side_info"}}},
                      {"threads", 0}}) == errc::bad_spec);
    REQUIRE(code(json{{"synth", {{"generator", "side_info"}}},
                      {"partition", {{"method", "kmeans"}}}}) == errc::bad_spec);
    REQUIRE(code(json{{"synth", {{"generator", "side_info"}}},
                      {"robustness", {{"policy_kind", "coin"}}}}) == errc::bad_spec);
    REQUIRE(code(json{{"synth", {{"generator", "nosuch"}}}}) == errc::bad_spec);
    REQUIRE(code(json{{"synth", {{"generator", "side_info"}}},
                      {"report", {{"metric", "auc"}}}}) == errc::bad_param);
    REQUIRE(code(json{{"synth", {{"generator", "side_info"}}},
                      {"incorporate", {{"kind", "cubic"}}}}) == errc::bad_param);
  }

  SECTION("loading from disk") {
    auto dir = scratch_dir("config_io");
    auto good = dir / "good.json";
    std::ofstream(good) << minimal_synth_config().dump(2);
    auto cfg = load_pipeline_config(good.string());
    REQUIRE(cfg.use_synth);
    REQUIRE(cfg.seed == 7);
    REQUIRE(cfg.policy_count == 5);

    REQUIRE(thrown_code([&] {
              load_pipeline_config((dir / "absent.json").string());
            }) == errc::io_error);
    auto bad = dir / "bad.json";
    std::ofstream(bad) << "{not json";
    REQUIRE(thrown_code([&] { load_pipeline_config(bad.string()); }) ==
            errc::parse_error);
  }
}

TEST_CASE("a synthetic run writes the complete bundle", "[pipeline]") {
  auto dir = scratch_dir("bundle");
  auto cfg = parse_pipeline_config(minimal_synth_config());
  run_pipeline(cfg, dir.string());

  for (const auto& name : kBundleFiles)
    REQUIRE(std::filesystem::exists(dir / name));

  SECTION("the data files load back") {
    DatasetSchema schema;
    schema.outcome_col = "y";
    schema.expert_col = "expert";
    schema.id_col = "row_id";
    Dataset ds = load_dataset((dir / "data.csv").string(), schema);
    REQUIRE(ds.n() == 200);
    REQUIRE(ds.d() == 2);
    REQUIRE(ds.expert.has_value());
    PredictionMatrix pm = load_predictions((dir / "preds.csv").string(), ds);
    REQUIRE(pm.m() == 5);
    Partition part = load_partition((dir / "partition.txt").string(), ds);
    REQUIRE(part.cell_count == 2);
  }

  SECTION("reports carry the expected shapes") {
    json audit = read_json(dir / "audit.json");
    REQUIRE(audit.contains("alpha_hat"));
    REQUIRE(audit.at("cells").size() == 2);
    REQUIRE(audit.at("alpha_hat").get<double>() >= 0.0);

    json expert = read_json(dir / "expert_test.json");
    REQUIRE(expert.contains("threshold"));
    REQUIRE(expert.contains("any_informative"));
    REQUIRE(expert.at("cells").size() == 2);
    REQUIRE(expert.at("alpha_used").get<double>() ==
            audit.at("alpha_hat").get<double>());

    json inc = read_json(dir / "incorporation.json");
    REQUIRE(inc.contains("all_hold"));
    REQUIRE(inc.at("cells").size() == 2);
    REQUIRE(inc.at("regressors").size() == 2);
    REQUIRE(inc.at("all_hold").get<bool>());  // exact on empirical data

    json rob = read_json(dir / "robustness.json");
    REQUIRE(rob.at("policies").size() == 5);
    REQUIRE(rob.contains("alpha_pi"));
    REQUIRE(rob.contains("alpha_prod"));
    REQUIRE(rob.at("all_hold").get<bool>());
    for (const auto& block : rob.at("policies"))
      REQUIRE(block.at("rows").size() == 2 * 5);  // cells x models

    json met = read_json(dir / "metrics.json");
    REQUIRE(met.at("metric") == "mcc");
    REQUIRE(met.at("expert_overall").contains("ci_low"));
    REQUIRE(met.at("expert_baseline").contains("point"));
    REQUIRE(met.at("expert_per_cell").size() == 2);
    REQUIRE(met.at("per_model").size() == 5);

    json side = read_json(dir / "sidecar.json");
    REQUIRE(side.contains("true_cell"));
  }

  SECTION("the summary names every stage") {
    std::string summary = read_file(dir / "summary.txt");
    REQUIRE(summary.find("rows: 200") != std::string::npos);
    REQUIRE(summary.find("partition: cluster, 2 cells") != std::string::npos);
    REQUIRE(summary.find("audit: alpha_hat") != std::string::npos);
    REQUIRE(summary.find("expert test:") != std::string::npos);
    REQUIRE(summary.find("incorporation bound") != std::string::npos);
    REQUIRE(summary.find("robustness (alpha") != std::string::npos);
    REQUIRE(summary.find("metrics (mcc)") != std::string::npos);
  }
}

TEST_CASE("bundles are identical across reruns and thread counts", "[pipeline]") {
  auto cfg = parse_pipeline_config(minimal_synth_config());
  auto a = scratch_dir("det_a");
  auto b = scratch_dir("det_b");
  auto c = scratch_dir("det_c");
  run_pipeline(cfg, a.string());
  run_pipeline(cfg, b.string());
  run_pipeline(cfg, c.string(), 8);  // thread override must not leak into bytes

  for (const auto& name : kBundleFiles) {
    INFO(name);
    std::string base = read_file(a / name);
    REQUIRE(base == read_file(b / name));
    REQUIRE(base == read_file(c / name));
  }
}

TEST_CASE("the boosting method persists its model", "[pipeline]") {
  json j = {{"seed", 11},
            {"synth",
             {{"generator", "sufficiency"}, {"n", 300}, {"d", 2}}},
            {"partition",
             {{"method", "boost"}, {"alpha", 0.05}, {"max_rounds", 60}}},
            {"robustness", {{"policy_kind", "stump"}, {"count", 4}}},
            {"report", {{"metric", "mcc"}, {"n_boot", 150}, {"n_perm", 150}}}};
  auto dir = scratch_dir("boost_run");
  run_pipeline(parse_pipeline_config(j), dir.string());

  REQUIRE(std::filesystem::exists(dir / "model.json"));
  json model = read_json(dir / "model.json");
  BoostedPredictor predictor = boosted_from_json(model);
  REQUIRE(predictor.n_features == 2);

  DatasetSchema schema;
  schema.outcome_col = "y";
  schema.expert_col = "expert";
  schema.id_col = "row_id";
  Dataset ds = load_dataset((dir / "data.csv").string(), schema);
  Partition part = load_partition((dir / "partition.txt").string(), ds);
  // the two-column file stores no provenance, so a reload reads as external
  REQUIRE(part.provenance == Provenance::external);
  auto values = canonical_predictor(ds, part);  // just proves cells are nonempty
  REQUIRE(values.size() == static_cast<std::size_t>(part.cell_count));
  std::vector<double> h = predictor.predict(ds.features);
  REQUIRE(h.size() == ds.n());
  for (double v : h) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("file data without an expert column skips the expert stages",
          "[pipeline]") {
  // build input files from a generator, then drop the expert
  SynthSpec spec;
  spec.generator = Generator::side_info;
  spec.n = 80;
  spec.d = 2;
  spec.k_cells = 2;
  spec.effect = 0.1;
  spec.seed = 31;
  SynthOutput synth = gen_synthetic(spec);
  synth.dataset.expert.reset();

  auto dir = scratch_dir("external");
  save_dataset((dir / "input.csv").string(), synth.dataset);
  save_predictions((dir / "model_preds.csv").string(), synth.preds);

  json j = {{"seed", 5},
            {"data",
             {{"path", (dir / "input.csv").string()},
              {"y_col", "y"},
              {"id_col", "row_id"}}},
            {"preds", {{"path", (dir / "model_preds.csv").string()}}},
            {"partition", {{"method", "cluster"}, {"k", 2}}},
            {"robustness", {{"policy_kind", "stump"}, {"count", 3}}},
            {"report", {{"metric", "covariance"}, {"n_boot", 150}, {"n_perm", 150}}}};
  auto config_path = dir / "config.json";
  std::ofstream(config_path) << j.dump(2);

  auto out = scratch_dir("external_out");
  run_pipeline(load_pipeline_config(config_path.string()), out.string());

  json expert = read_json(out / "expert_test.json");
  REQUIRE(expert.at("skipped").get<bool>());
  json inc = read_json(out / "incorporation.json");
  REQUIRE(inc.at("skipped").get<bool>());
  json met = read_json(out / "metrics.json");
  REQUIRE(met.at("expert_overall").at("skipped").get<bool>());
  REQUIRE(met.at("per_model").size() == 5);  // model metrics still computed
  REQUIRE(read_json(out / "robustness.json").contains("all_hold"));
  REQUIRE_FALSE(std::filesystem::exists(out / "sidecar.json"));

  std::string summary = read_file(out / "summary.txt");
  REQUIRE(summary.find("expert: no") != std::string::npos);
  REQUIRE(summary.find("skipped (no expert column)") != std::string::npos);
}

TEST_CASE("stage failures name the stage", "[pipeline]") {
  SECTION("generator misconfiguration surfaces as a data-stage error") {
    json j = {{"synth",
               {{"generator", "adversarial_groups"}, {"n", 100}, {"effect", 0.6}}}};
    auto dir = scratch_dir("fail_data");
    std::string message;
    auto code = thrown_code(
        [&] { run_pipeline(parse_pipeline_config(j), dir.string()); }, &message);
    REQUIRE(code == errc::bad_spec);
    REQUIRE(message.find("data: ") != std::string::npos);
  }

  SECTION("an infeasible cell count surfaces as a partition-stage error") {
    json j = minimal_synth_config();
    j["partition"]["k"] = 500;  // only 200 rows exist
    auto dir = scratch_dir("fail_partition");
    std::string message;
    auto code = thrown_code(
        [&] { run_pipeline(parse_pipeline_config(j), dir.string()); }, &message);
    REQUIRE(code == errc::infeasible_k);
    REQUIRE(message.find("partition: ") != std::string::npos);
  }
}
