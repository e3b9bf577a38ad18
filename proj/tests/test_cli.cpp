#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gcnn/commands.hpp"
#include "gcnn/config.hpp"
#include "gcnn/errors.hpp"
#include "gcnn/rng.hpp"
#include "gcnn/synthetic.hpp"

using namespace gcnn;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("gcnn_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_synthetic(const std::string& path, std::size_t length, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.length = length;
  spec.seed = seed;
  write_csv(path, grouped_synthetic(spec).dataset);
}

json base_config(const std::string& out) {
  return json{{"data", {{"path", "data.csv"}, {"target", "g1_s1"}, {"window", 8}}},
              {"model",
               {{"grouping", "explicit"}, {"groups", 3}, {"stage_channels", {2}}, {"pool_before", {1}}, {"dense_units", {4, 1}}}},
              {"train", {{"epochs", 3}, {"learning_rate", 0.01}}},
              {"output_dir", out},
              {"seed", 4}};
}

std::string config_error(const json& doc, const std::string& base) {
  try {
    parse_config(doc, base);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config validation names the field") {
  Workspace ws("validate");
  write_synthetic(ws.path("data.csv"), 200, 1);
  const std::string base = ws.dir.string();
  json ok = base_config(ws.path("out"));
  CHECK_NOTHROW(parse_config(ok, base));

  json k1 = ok;
  k1["model"]["groups"] = 1;
  CHECK(config_error(k1, base).rfind("model.groups:", 0) == 0);

  json typo = ok;
  typo["train"]["epocs"] = 3;
  CHECK(config_error(typo, base).rfind("train.epocs:", 0) == 0);

  json lr = ok;
  lr["train"]["learning_rate"] = 0.0;
  CHECK(config_error(lr, base).rfind("train.learning_rate:", 0) == 0);

  json missing = ok;
  missing["data"]["path"] = "nowhere.csv";
  CHECK(config_error(missing, base).rfind("data.path:", 0) == 0);

  json grouping = ok;
  grouping["model"]["grouping"] = "fuzzy";
  CHECK(config_error(grouping, base).rfind("model.grouping:", 0) == 0);

  json rcl = ok;
  rcl["model"]["family"] = "rcnn";
  rcl["model"]["rcl_iterations"] = 0;
  CHECK(config_error(rcl, base).rfind("model.rcl_iterations:", 0) == 0);

  json dense = ok;
  dense["model"]["dense_units"] = {4, 2};
  CHECK(config_error(dense, base).rfind("model.dense_units:", 0) == 0);

  json split = ok;
  split["eval"] = {{"split", "holdout"}};
  CHECK(config_error(split, base).rfind("eval.split:", 0) == 0);
}

TEST_CASE("overrides and hashing") {
  json doc = {{"train", {{"epochs", 3}}}, {"output_dir", "a"}};
  apply_override(doc, "train.epochs=7");
  apply_override(doc, "model.grouping=coeff");
  apply_override(doc, "model.stage_channels=[3,3]");
  CHECK(doc["train"]["epochs"] == 7);
  CHECK(doc["model"]["grouping"] == "coeff");
  CHECK(doc["model"]["stage_channels"] == json({3, 3}));
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "train.epochs.deep=1"), ConfigError);

  json moved = doc;
  moved["output_dir"] = "b";
  CHECK(config_hash(doc) == config_hash(moved));
  json changed = doc;
  changed["train"]["epochs"] = 8;
  CHECK(config_hash(doc) != config_hash(changed));
  CHECK(config_hash(doc).size() == 16);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(DataError("x")) == 3);
  CHECK(exit_code_for(ShapeError("x")) == 3);
  CHECK(exit_code_for(NumericalError("x")) == 4);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("ingest writes a manifest with drops and is deterministic") {
  Workspace ws("ingest");
  SyntheticSpec spec;
  spec.length = 300;
  SyntheticData syn = grouped_synthetic(spec);
  for (std::size_t t = 100; t < 170; ++t) syn.dataset.mask[5][t] = false;  // 70 > 61
  syn.dataset.mask[2][40] = false;
  write_csv(ws.path("data.csv"), syn.dataset);

  const RunConfig cfg = parse_config(base_config(ws.path("out")), ws.dir.string());
  std::ostringstream log;
  CHECK(cmd_ingest(cfg, log) == 0);
  const json manifest = json::parse(slurp(ws.path("out/ingest_manifest.json")));
  CHECK(manifest["config_hash"] == cfg.hash);
  REQUIRE(manifest["drops"].size() == 1);
  CHECK(manifest["drops"][0]["series"] == syn.dataset.names[5]);
  CHECK(manifest["fills"].size() == 1);
  CHECK(log.str().find(syn.dataset.names[5]) != std::string::npos);
  CHECK(slurp(ws.path("out/repaired.csv")).rfind("# config_hash=" + cfg.hash, 0) == 0);

  const std::string first = slurp(ws.path("out/ingest_manifest.json"));
  cmd_ingest(cfg, log);
  CHECK(slurp(ws.path("out/ingest_manifest.json")) == first);

  Workspace clean("ingest_clean");
  write_synthetic(clean.path("data.csv"), 200, 2);
  const RunConfig c2 = parse_config(base_config(clean.path("out")), clean.dir.string());
  cmd_ingest(c2, log);
  CHECK(json::parse(slurp(clean.path("out/ingest_manifest.json")))["drops"].empty());
}

TEST_CASE("cluster recovers the synthetic blocks") {
  Workspace ws("cluster");
  write_synthetic(ws.path("data.csv"), 1000, 3);
  const RunConfig cfg = parse_config(base_config(ws.path("out")), ws.dir.string());
  std::ostringstream log;
  CHECK(cmd_cluster(cfg, log) == 0);
  const std::string first = slurp(ws.path("out/assignment.csv"));
  const json info = json::parse(slurp(ws.path("out/cluster.json")));
  CHECK(info["ncut"].get<double>() < 0.2);

  const std::vector<std::string> names{"g1_s2", "g1_s3", "g1_s4", "g2_s1", "g2_s2", "g2_s3", "g2_s4",
                                       "g3_s1", "g3_s2", "g3_s3", "g3_s4"};
  std::ifstream in(ws.path("out/assignment.csv"));
  const GroupAssignment a = read_assignment(in, names);
  CHECK(same_partition(a, GroupAssignment{{0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2}, 3}));
  cmd_cluster(cfg, log);
  CHECK(slurp(ws.path("out/assignment.csv")) == first);

  json none = base_config(ws.path("out"));
  none["model"]["grouping"] = "none";
  CHECK_THROWS_AS(cmd_cluster(parse_config(none, ws.dir.string()), log), ConfigError);
}

TEST_CASE("train and eval round trip") {
  Workspace ws("train");
  write_synthetic(ws.path("data.csv"), 400, 4);
  json doc = base_config(ws.path("out"));
  doc["model"]["grouping"] = "coeff";
  const RunConfig cfg = parse_config(doc, ws.dir.string());
  std::ostringstream log;
  CHECK(cmd_train(cfg, log) == 0);
  CHECK(log.str().find("param-count total=") != std::string::npos);
  CHECK(fs::exists(ws.path("out/coeff_matrix.csv")));
  CHECK(slurp(ws.path("out/checkpoint.json")).find(cfg.hash) != std::string::npos);

  // Best validation score is reproduced by evaluating on the validation slice.
  std::ifstream hist(ws.path("out/history.csv"));
  std::string line;
  double best = 1e300;
  while (std::getline(hist, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'e') continue;
    std::stringstream row(line);
    std::string epoch, tr, val;
    std::getline(row, epoch, ',');
    std::getline(row, tr, ',');
    std::getline(row, val, ',');
    best = std::min(best, std::stod(val));
  }
  json vdoc = doc;
  vdoc["eval"] = {{"split", "validation"}};
  cmd_eval(parse_config(vdoc, ws.dir.string()), log);
  const json val_report = json::parse(slurp(ws.path("out/eval_report.json")));
  CHECK(std::abs(val_report["srmse"].get<double>() - best) < 1e-12);

  cmd_eval(cfg, log);
  const json report = json::parse(slurp(ws.path("out/eval_report.json")));
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  CHECK(report["samples"] == p.split.test.size());
  std::ifstream preds(ws.path("out/predictions.csv"));
  std::size_t rows = 0;
  while (std::getline(preds, line))
    if (!line.empty() && line[0] != '#') ++rows;
  CHECK(rows == p.split.test.size() + 1);

  // Geometry mismatch: a checkpoint for a different window.
  json other = doc;
  other["data"]["window"] = 6;
  other["eval"] = {{"checkpoint", ws.path("out/checkpoint.json")}};
  CHECK_THROWS_AS(cmd_eval(parse_config(other, ws.dir.string()), log), ShapeError);
}

TEST_CASE("mean-predictor checkpoint scores exactly one") {
  Workspace ws("meanpred");
  write_synthetic(ws.path("data.csv"), 300, 5);
  json doc = base_config(ws.path("out"));
  doc["model"]["grouping"] = "none";
  const RunConfig cfg = parse_config(doc, ws.dir.string());
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  Model m = build_model(resolve_spec(cfg.model.spec, p.windows), std::nullopt, 1);
  double mean = 0.0;
  for (double t : p.split.test.targets) mean += t;
  mean /= static_cast<double>(p.split.test.size());
  for (NamedParam& np : m.parameters()) {
    if (np.name == "dense2.weight") *np.value = Tensor(np.value->shape());
    if (np.name == "dense2.bias") (*np.value)[0] = mean;
  }
  fs::create_directories(ws.path("out"));
  save_checkpoint(ws.path("out/checkpoint.json"), m);
  std::ostringstream log;
  cmd_eval(cfg, log);
  CHECK(json::parse(slurp(ws.path("out/eval_report.json")))["srmse"].get<double>() == 1.0);
}

TEST_CASE("compare on linear data: least squares beats ridge, reruns identical") {
  Workspace ws("compare");
  Rng rng(6);
  TimeSeriesDataset d;
  d.names = {"a", "b", "c", "y"};
  d.values.assign(4, {});
  double a = 0, b = 0, c = 0;
  for (std::size_t t = 0; t < 300; ++t) {
    a = 0.7 * a + rng.normal();
    b = 0.5 * b + rng.normal();
    c = 0.2 * c + rng.normal();
    d.times.push_back(static_cast<double>(t));
    d.stamps.push_back(std::to_string(t));
    d.values[0].push_back(a);
    d.values[1].push_back(b);
    d.values[2].push_back(c);
    d.values[3].push_back(0.5 * a + 0.3 * b - 0.2 * c);
  }
  d.mask.assign(4, std::vector<bool>(300, true));
  write_csv(ws.path("data.csv"), d);

  json doc = {{"data", {{"path", "data.csv"}, {"target", "y"}, {"window", 4}}},
              {"compare", {{"repeats", 3}, {"targets", {"y"}}, {"ridge_lambda", 50.0}, {"models", json::array()}}},
              {"output_dir", ws.path("out")},
              {"seed", 2}};
  const RunConfig cfg = parse_config(doc, ws.dir.string());
  std::ostringstream log;
  CHECK(cmd_compare(cfg, log) == 0);
  const std::string first = slurp(ws.path("out/compare.csv"));
  std::istringstream table(first);
  std::string line;
  double lin = -1, ridge = -1;
  while (std::getline(table, line)) {
    if (line.rfind("linear,", 0) == 0) lin = std::stod(line.substr(7));
    if (line.rfind("ridge,", 0) == 0) ridge = std::stod(line.substr(6));
  }
  CHECK(lin >= 0.0);
  CHECK(lin < 1e-6);
  CHECK(lin <= ridge);
  cmd_compare(cfg, log);
  CHECK(slurp(ws.path("out/compare.csv")) == first);
  CHECK(first.find("±") != std::string::npos);
}

TEST_CASE("compare repeats with random targets and networks") {
  Workspace ws("compare_nets");
  write_synthetic(ws.path("data.csv"), 300, 7);
  json doc = base_config(ws.path("out"));
  doc["compare"] = {{"repeats", 2},
                    {"models", {{{"name", "cnn"}, {"model", {{"grouping", "none"}}}}, {{"name", "gcnn"}, {"model", json::object()}}}}};
  const RunConfig cfg = parse_config(doc, ws.dir.string());
  std::ostringstream log;
  cmd_compare(cfg, log);
  const std::string runs = slurp(ws.path("out/compare_runs.csv"));
  std::size_t lines = 0;
  for (char ch : runs) lines += ch == '\n';
  CHECK(lines == 2 + 2 * 4);  // hash + header + 2 repeats x (linear, ridge, cnn, gcnn)
}

TEST_CASE("param-count compares grouped and vanilla") {
  Workspace ws("params");
  write_synthetic(ws.path("data.csv"), 200, 8);
  const RunConfig cfg = parse_config(base_config(ws.path("out")), ws.dir.string());
  std::ostringstream log;
  cmd_param_count(cfg, log);
  const json j = json::parse(slurp(ws.path("out/param_count.json")));
  CHECK(j["grouped_lt_vanilla"] == true);
  CHECK(j["params"].get<std::size_t>() < j["vanilla_params"].get<std::size_t>());
  CHECK(log.str().find("vanilla plan") != std::string::npos);
}

TEST_CASE("water preset echoes its layer plan") {
  Workspace ws("water");
  SyntheticSpec spec;
  spec.groups = 4;
  spec.series_per_group = 22;  // 88 series -> 87 inputs
  spec.length = 1200;
  write_csv(ws.path("data.csv"), grouped_synthetic(spec).dataset);
  json doc = {{"data", {{"path", "data.csv"}, {"target", "g1_s1"}, {"window", 64}}},
              {"model", {{"preset", "water"}, {"grouping", "none"}}},
              {"output_dir", ws.path("out")}};
  std::ostringstream log;
  cmd_param_count(parse_config(doc, ws.dir.string()), log);
  CHECK(log.str().find("input 87x64 | conv 500x64 | pool4 conv 500x16 | pool4 conv 500x4 | pool4 conv 500x1 | dense 100 | dense 1") !=
        std::string::npos);
}
