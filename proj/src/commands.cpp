#include "gcnn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "gcnn/errors.hpp"
#include "gcnn/rng.hpp"
#include "json.hpp"

namespace gcnn {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.output_dir);
  const fs::path p = fs::path(cfg.output_dir) / name;
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

void hash_comment(std::ostream& out, const RunConfig& cfg) { out << "# config_hash=" << cfg.hash << '\n'; }

TimeSeriesDataset without_series(const TimeSeriesDataset& d, const std::string& name) {
  TimeSeriesDataset out = d;
  const auto idx = d.index_of(name);
  if (!idx) return out;
  const auto off = static_cast<std::ptrdiff_t>(*idx);
  out.names.erase(out.names.begin() + off);
  out.values.erase(out.values.begin() + off);
  out.mask.erase(out.mask.begin() + off);
  return out;
}

SplitSpec split_spec(const DataConfig& data, std::uint64_t seed) {
  SplitSpec s;
  s.train_fraction = data.train_fraction;
  s.mode = data.split_mode;
  s.seed = derive_seed(seed, "split");
  s.embargo = data.embargo;
  return s;
}

std::optional<GroupAssignment> assignment_for(const RunConfig& cfg, const ModelSpec& spec, const PreparedData& prepared,
                                              std::ostream& log) {
  if (spec.grouping != GroupingMode::Explicit) return std::nullopt;
  if (!cfg.cluster.assignment.empty()) {
    std::ifstream in(cfg.cluster.assignment);
    if (!in) throw DataError("cannot open assignment file " + cfg.cluster.assignment);
    GroupAssignment a = read_assignment(in, prepared.windows.channel_names);
    if (a.k != spec.groups) {
      throw DataError("assignment file has " + std::to_string(a.k) + " groups, model.groups is " + std::to_string(spec.groups));
    }
    return a;
  }
  const ClusterOutcome c = cluster_inputs(prepared, spec.groups, derive_seed(cfg.seed, "cluster"));
  log << "clustered inputs into " << spec.groups << " groups, ncut=" << fixed(c.ncut, 6) << '\n';
  return c.assignment;
}

void write_coeff_matrix(std::ostream& out, const RunConfig& cfg, const Tensor& u, const std::vector<std::string>& names) {
  hash_comment(out, cfg);
  out << "series_name";
  for (std::size_t k = 0; k < u.dim(1); ++k) out << ",u_" << (k + 1);
  out << '\n';
  for (std::size_t i = 0; i < u.dim(0); ++i) {
    out << names[i];
    for (std::size_t k = 0; k < u.dim(1); ++k) out << ',' << fmt(u.at(i, k));
    out << '\n';
  }
}

const WindowedRegressionSet& pick_split(const RunConfig& cfg, const PreparedData& p, WindowedRegressionSet& scratch) {
  if (cfg.eval.split == "test") return p.split.test;
  const std::size_t n = p.split.train.size();
  std::size_t n_fit = n;
  if (cfg.train.validation_fraction > 0.0) {
    n_fit = n - static_cast<std::size_t>(std::ceil(static_cast<double>(n) * cfg.train.validation_fraction - 1e-9));
  }
  if (cfg.eval.split == "validation") {
    if (n_fit == n) throw ConfigError("eval.split: validation needs train.validation_fraction > 0");
    scratch = p.split.train.slice(n_fit, n);
  } else {
    scratch = p.split.train.slice(0, n_fit);
  }
  return scratch;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1) + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PreparedData prepare_data(const DataConfig& data, const std::string& target, std::uint64_t seed) {
  PreparedData p;
  const TimeSeriesDataset raw = load_csv(data.resolved_path);
  if (!raw.index_of(target)) throw DataError("data.target: series '" + target + "' not found in " + data.path);
  p.repair = repair_gaps(raw, data.max_gap);
  if (!p.repair.data.index_of(target)) {
    throw DataError("target series '" + target + "' was dropped during gap repair");
  }
  const SplitSpec spec = split_spec(data, seed);
  // Window indices depend only on the presence mask, which repair leaves full,
  // so the split can be located before standardization.
  const Split probe = split(make_windows(p.repair.data, target, data.window), spec);
  p.train_end_step = *std::max_element(probe.train.target_steps.begin(), probe.train.target_steps.end()) + 1;
  p.standardized = standardize(p.repair.data, 0, p.train_end_step);
  if (!p.standardized.data.index_of(target)) throw DataError("target series '" + target + "' is constant on the training range");
  if (p.standardized.data.series_count() < 2) throw DataError("fewer than two series survive ingestion");
  p.windows = make_windows(p.standardized.data, target, data.window);
  p.windows.stats = p.standardized.stats;
  p.split = split(p.windows, spec);
  return p;
}

SimilarityGraph training_similarity(const PreparedData& prepared) {
  const TimeSeriesDataset inputs = without_series(prepared.standardized.data, prepared.windows.target_name);
  return similarity_from_series(inputs, 0, prepared.train_end_step);
}

ClusterOutcome cluster_inputs(const PreparedData& prepared, std::size_t k, std::uint64_t seed) {
  const SimilarityGraph g = training_similarity(prepared);
  if (k < 2 || k > g.size()) {
    throw ConfigError("model.groups: need 2 <= K <= " + std::to_string(g.size()) + " input series, got " + std::to_string(k));
  }
  ClusterOutcome out;
  out.assignment = spectral_cluster(g, k, seed);
  out.ncut = ncut_value(g, out.assignment);
  out.cut = cut_value(g, out.assignment);
  out.embedding = spectral_embedding(g, k);
  return out;
}

ModelSpec resolve_spec(const ModelSpec& spec, const WindowedRegressionSet& windows) {
  ModelSpec s = spec;
  s.input_channels = windows.channels();
  s.window = windows.window;
  s.validate();
  return s;
}

ParamCountReport param_count_report(const ModelSpec& spec) {
  ParamCountReport r;
  r.grouped = spec.grouped();
  std::optional<GroupAssignment> a;
  // Kernel counts do not depend on how members are spread over the groups.
  if (spec.grouping == GroupingMode::Explicit) a = GroupAssignment::balanced(spec.input_channels, spec.groups);
  const Model m = build_model(spec, a, 0);
  r.layer_plan = spec.layer_plan();
  r.params = count_params(m);
  r.conv_kernel_params = count_conv_kernel_params(m);
  const ModelSpec v = spec.vanilla_counterpart();
  const Model vm = build_model(v, std::nullopt, 0);
  r.vanilla_layer_plan = v.layer_plan();
  r.vanilla_params = count_params(vm);
  r.vanilla_conv_kernel_params = count_conv_kernel_params(vm);
  return r;
}

std::string param_count_line(const ParamCountReport& r) {
  std::ostringstream s;
  s << "param-count total=" << r.params << " conv_kernels=" << r.conv_kernel_params;
  if (r.grouped) {
    s << " vanilla_total=" << r.vanilla_params << " vanilla_conv_kernels=" << r.vanilla_conv_kernel_params
      << " grouped_lt_vanilla=" << (r.params < r.vanilla_params ? "true" : "false");
  }
  return s.str();
}

std::vector<CompareSummary> summarize(const std::vector<CompareRow>& rows) {
  std::vector<CompareSummary> out;
  for (const CompareRow& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CompareSummary& s) { return s.model == row.model; });
    if (it == out.end()) {
      out.push_back({row.model, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    ++it->runs;
  }
  for (CompareSummary& s : out) {
    double sum = 0.0;
    for (const CompareRow& row : rows)
      if (row.model == s.model) sum += row.srmse;
    s.mean = sum / static_cast<double>(s.runs);
    double sq = 0.0;
    for (const CompareRow& row : rows)
      if (row.model == s.model) sq += (row.srmse - s.mean) * (row.srmse - s.mean);
    s.stdev = s.runs > 1 ? std::sqrt(sq / static_cast<double>(s.runs - 1)) : 0.0;
  }
  return out;
}

int cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  {
    std::ofstream out = open_out(cfg, "repaired.csv");
    write_csv(out, p.repair.data, "config_hash=" + cfg.hash);
  }
  {
    std::ofstream out = open_out(cfg, "standardized.csv");
    write_csv(out, p.standardized.data, "config_hash=" + cfg.hash);
  }
  if (cfg.data.export_windows) {
    std::ofstream tr = open_out(cfg, "train_windows.csv");
    write_windows_csv(tr, p.split.train, "config_hash=" + cfg.hash);
    std::ofstream te = open_out(cfg, "test_windows.csv");
    write_windows_csv(te, p.split.test, "config_hash=" + cfg.hash);
  }

  ojson m;
  m["config_hash"] = cfg.hash;
  m["source"] = cfg.data.path;
  m["series"] = p.repair.data.series_count() + p.repair.report.drops.size();
  m["length"] = p.repair.data.length();
  m["max_gap"] = cfg.data.max_gap;
  ojson fills = ojson::array();
  for (const GapFill& f : p.repair.report.fills) fills.push_back({{"series", f.series}, {"start", f.start}, {"length", f.length}});
  m["fills"] = fills;
  ojson drops = ojson::array();
  for (const SeriesDrop& d : p.repair.report.drops) drops.push_back({{"series", d.series}, {"stage", "repair"}, {"reason", d.reason}});
  for (const SeriesDrop& d : p.standardized.drops) drops.push_back({{"series", d.series}, {"stage", "standardize"}, {"reason", d.reason}});
  m["drops"] = drops;
  m["target"] = p.windows.target_name;
  m["window"] = p.windows.window;
  m["channels"] = p.windows.channel_names;
  ojson sp;
  sp["mode"] = cfg.data.split_mode == SplitMode::Chronological ? "chronological" : "shuffled";
  sp["train_fraction"] = cfg.data.train_fraction;
  sp["samples"] = p.windows.size();
  sp["train_samples"] = p.split.train.size();
  sp["test_samples"] = p.split.test.size();
  sp["statistics_steps"] = {0, p.train_end_step};
  sp["train_first_target"] = p.split.train.target_stamps.front();
  sp["train_last_target"] = p.split.train.target_stamps.back();
  sp["test_first_target"] = p.split.test.target_stamps.front();
  sp["test_last_target"] = p.split.test.target_stamps.back();
  m["split"] = sp;
  ojson stats = ojson::array();
  for (const SeriesStats& s : p.standardized.stats) stats.push_back({{"name", s.name}, {"mean", s.mean}, {"std", s.std}});
  m["stats"] = stats;
  {
    std::ofstream out = open_out(cfg, "ingest_manifest.json");
    out << m.dump(2) << '\n';
  }
  log << "ingested " << p.repair.data.series_count() << " series x " << p.repair.data.length() << " steps; "
      << p.repair.report.fills.size() << " gaps filled, " << drops.size() << " series dropped\n";
  for (const auto& d : drops) log << "  dropped " << d["series"].get<std::string>() << ": " << d["reason"].get<std::string>() << '\n';
  log << "windows: " << p.split.train.size() << " train / " << p.split.test.size() << " test samples\n";
  return 0;
}

int cmd_cluster(const RunConfig& cfg, std::ostream& log) {
  if (cfg.model.spec.grouping != GroupingMode::Explicit) {
    throw ConfigError("model.grouping: cluster needs explicit grouping");
  }
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  const ClusterOutcome c = cluster_inputs(p, cfg.model.spec.groups, derive_seed(cfg.seed, "cluster"));
  const auto& names = p.windows.channel_names;
  {
    std::ofstream out = open_out(cfg, "assignment.csv");
    hash_comment(out, cfg);
    write_assignment(out, names, c.assignment);
  }
  {
    std::ofstream out = open_out(cfg, "embedding.csv");
    hash_comment(out, cfg);
    write_embedding(out, names, c.embedding);
  }
  ojson j;
  j["config_hash"] = cfg.hash;
  j["k"] = c.assignment.k;
  j["ncut"] = c.ncut;
  j["cut"] = c.cut;
  j["eigenvalues"] = c.embedding.eigenvalues;
  ojson sizes = ojson::array();
  for (const auto& members : c.assignment.members()) sizes.push_back(members.size());
  j["group_sizes"] = sizes;
  {
    std::ofstream out = open_out(cfg, "cluster.json");
    out << j.dump(2) << '\n';
  }
  log << "K=" << c.assignment.k << " ncut=" << fixed(c.ncut, 6) << " group sizes";
  for (const auto& s : sizes) log << ' ' << s.get<std::size_t>();
  log << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  const ModelSpec spec = resolve_spec(cfg.model.spec, p.windows);
  const auto assignment = assignment_for(cfg, spec, p, log);
  log << "layer plan: " << spec.layer_plan() << '\n';
  const Model model = build_model(spec, assignment, derive_seed(cfg.seed, "init"));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "train");
  const TrainResult r = train(model, p.split.train, tc);

  {
    std::ofstream out = open_out(cfg, "checkpoint.json");
    save_checkpoint(out, r.best, cfg.hash);
  }
  {
    std::ofstream out = open_out(cfg, "history.csv");
    write_history_csv(out, r.history, cfg.hash);
  }
  const ParamCountReport pc = param_count_report(spec);
  const std::string line = param_count_line(pc);
  {
    std::ofstream out = open_out(cfg, "param_count.txt");
    hash_comment(out, cfg);
    out << line << '\n';
  }
  if (auto u = r.best.coefficient_matrix()) {
    std::ofstream out = open_out(cfg, "coeff_matrix.csv");
    write_coeff_matrix(out, cfg, *u, p.windows.channel_names);
  }
  log << line << '\n';
  log << "best epoch " << r.best_epoch << " of " << r.history.size() << ", " << to_string(tc.selection) << "="
      << fixed(r.best_score, 6) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const std::string path =
      cfg.eval.checkpoint.empty() ? (fs::path(cfg.output_dir) / "checkpoint.json").string() : cfg.eval.checkpoint;
  const Model model = load_checkpoint(path);
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  WindowedRegressionSet scratch;
  const WindowedRegressionSet& set = pick_split(cfg, p, scratch);
  if (model.spec().input_channels != set.channels() || model.spec().window != set.window) {
    throw ShapeError("checkpoint expects " + std::to_string(model.spec().input_channels) + "x" +
                     std::to_string(model.spec().window) + " windows, data gives " + std::to_string(set.channels()) + "x" +
                     std::to_string(set.window));
  }
  const EvalReport r = evaluate(model, set);
  {
    std::ofstream out = open_out(cfg, "eval_report.json");
    write_report(out, r, cfg.hash, cfg.eval.split);
  }
  {
    std::ofstream out = open_out(cfg, "predictions.csv");
    write_predictions_csv(out, r, cfg.hash);
  }
  log << cfg.eval.split << " samples " << set.size() << ", srmse=" << (r.srmse ? fixed(*r.srmse, 6) : "undefined")
      << " rmse=" << fixed(r.rmse, 6) << '\n';
  return 0;
}

int cmd_compare(const RunConfig& cfg, std::ostream& log) {
  const std::vector<CompareModel>& members = cfg.compare.models;
  if (members.empty() && !cfg.compare.baselines) throw ConfigError("compare: no models and baselines disabled");

  // Candidate targets: every series that survives ingestion.
  std::vector<std::string> candidates = cfg.compare.targets;
  if (candidates.empty()) {
    const TimeSeriesDataset raw = load_csv(cfg.data.resolved_path);
    candidates = repair_gaps(raw, cfg.data.max_gap).data.names;
  }
  Rng picker(derive_seed(cfg.seed, "targets"));

  std::ofstream runs = open_out(cfg, "compare_runs.csv");
  hash_comment(runs, cfg);
  runs << "repeat,target,model,srmse,rmse,se\n";
  std::vector<CompareRow> rows;
  auto record = [&](CompareRow row) {
    runs << row.repeat << ',' << row.target << ',' << row.model << ',' << fmt(row.srmse) << ',' << fmt(row.rmse) << ','
         << fmt(row.se) << '\n';
    runs.flush();
    log << "  repeat " << row.repeat << " " << row.model << " srmse=" << fixed(row.srmse, 4) << '\n';
    rows.push_back(std::move(row));
  };
  auto need_srmse = [](const EvalReport& r, const std::string& what) {
    if (!r.srmse) throw DataError(what + ": test targets are constant, SRMSE undefined");
    return *r.srmse;
  };

  for (std::size_t rep = 0; rep < cfg.compare.repeats; ++rep) {
    const std::string target = cfg.compare.targets.empty() ? candidates[picker.below(candidates.size())]
                                                           : candidates[rep % candidates.size()];
    const std::uint64_t rep_seed = derive_seed(cfg.seed, "repeat", rep);
    log << "repeat " << rep << ": target " << target << '\n';
    const PreparedData p = prepare_data(cfg.data, target, rep_seed);
    if (cfg.compare.baselines) {
      const EvalReport lin = linear_baseline(p.split.train, p.split.test, 0.0);
      record({rep, target, "linear", need_srmse(lin, "linear"), lin.rmse, lin.se});
      const EvalReport ridge = linear_baseline(p.split.train, p.split.test, cfg.compare.ridge_lambda);
      record({rep, target, "ridge", need_srmse(ridge, "ridge"), ridge.rmse, ridge.se});
    }
    for (const CompareModel& member : members) {
      nlohmann::json merged = cfg.effective.contains("model") ? cfg.effective.at("model") : nlohmann::json::object();
      merged.merge_patch(member.overrides);
      const ModelSpec spec = resolve_spec(parse_model_section(merged, "compare." + member.name).spec, p.windows);
      RunConfig run = cfg;
      run.cluster.assignment.clear();
      run.seed = rep_seed;
      std::ostringstream quiet;
      const auto assignment = assignment_for(run, spec, p, quiet);
      const Model model = build_model(spec, assignment, derive_seed(rep_seed, "init"));
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(rep_seed, "train");
      const TrainResult r = train(model, p.split.train, tc);
      const EvalReport ev = evaluate(r.best, p.split.test);
      record({rep, target, member.name, need_srmse(ev, member.name), ev.rmse, ev.se});
    }
  }

  std::ofstream out = open_out(cfg, "compare.csv");
  hash_comment(out, cfg);
  out << "model,srmse_mean,srmse_std,runs,summary\n";
  for (const CompareSummary& s : summarize(rows)) {
    out << s.model << ',' << fmt(s.mean) << ',' << fmt(s.stdev) << ',' << s.runs << ',' << fixed(s.mean, 3) << " ± "
        << fixed(s.stdev, 3) << '\n';
    log << s.model << ": " << fixed(s.mean, 3) << " ± " << fixed(s.stdev, 3) << '\n';
  }
  return 0;
}

int cmd_param_count(const RunConfig& cfg, std::ostream& log) {
  const PreparedData p = prepare_data(cfg.data, cfg.data.target, cfg.seed);
  const ModelSpec spec = resolve_spec(cfg.model.spec, p.windows);
  const ParamCountReport r = param_count_report(spec);
  ojson j;
  j["config_hash"] = cfg.hash;
  j["layer_plan"] = r.layer_plan;
  j["params"] = r.params;
  j["conv_kernel_params"] = r.conv_kernel_params;
  if (r.grouped) {
    j["vanilla_layer_plan"] = r.vanilla_layer_plan;
    j["vanilla_params"] = r.vanilla_params;
    j["vanilla_conv_kernel_params"] = r.vanilla_conv_kernel_params;
    j["grouped_lt_vanilla"] = r.params < r.vanilla_params;
  }
  {
    std::ofstream out = open_out(cfg, "param_count.json");
    out << j.dump(2) << '\n';
  }
  log << "layer plan: " << r.layer_plan << '\n';
  if (r.grouped) log << "vanilla plan: " << r.vanilla_layer_plan << '\n';
  log << param_count_line(r) << '\n';
  return 0;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 3;
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::out_of_range*>(&e)) return 3;
  return 1;
}

}  // namespace gcnn
