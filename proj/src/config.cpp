#include "gcnn/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "gcnn/errors.hpp"

namespace gcnn {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); }

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) bad(where.empty() ? "config" : where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (std::string_view k : known) ok |= (k == it.key());
    if (!ok) bad(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
  }
}

std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

std::size_t get_size(const json& obj, const std::string& where, const std::string& key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) bad(join(where, key), "expected a nonnegative integer");
  return v.get<std::size_t>();
}

double get_double(const json& obj, const std::string& where, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number() || !std::isfinite(v.get<double>())) bad(join(where, key), "expected a finite number");
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& where, const std::string& key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) bad(join(where, key), "expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& where, const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) bad(join(where, key), "expected true or false");
  return v.get<bool>();
}

std::vector<std::size_t> get_sizes(const json& obj, const std::string& where, const std::string& key,
                                   const std::vector<std::size_t>& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) bad(join(where, key), "expected an array of integers");
  std::vector<std::size_t> out;
  for (const json& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 0) bad(join(where, key), "expected an array of nonnegative integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

template <class F>
auto parse_enum(const json& obj, const std::string& where, const std::string& key, F parse, decltype(parse("")) fallback) {
  if (!obj.contains(key)) return fallback;
  const std::string text = get_string(obj, where, key, "");
  try {
    return parse(text);
  } catch (const std::exception&) {
    bad(join(where, key), "unrecognised value '" + text + "'");
  }
}

DataConfig parse_data(const json& d, const std::string& base_dir) {
  reject_unknown(d, "data", {"path", "target", "window", "max_gap", "train_fraction", "split", "embargo", "export_windows"});
  DataConfig c;
  c.path = get_string(d, "data", "path", "");
  if (c.path.empty()) bad("data.path", "required");
  namespace fs = std::filesystem;
  fs::path p(c.path);
  if (p.is_relative()) p = fs::path(base_dir) / p;
  c.resolved_path = p.lexically_normal().string();
  if (!fs::is_regular_file(p)) bad("data.path", "file not found: " + c.resolved_path);
  c.target = get_string(d, "data", "target", "");
  if (c.target.empty()) bad("data.target", "required");
  c.window = get_size(d, "data", "window", c.window);
  if (c.window < 1) bad("data.window", "must be >= 1");
  c.max_gap = get_size(d, "data", "max_gap", c.max_gap);
  c.train_fraction = get_double(d, "data", "train_fraction", c.train_fraction);
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0)) bad("data.train_fraction", "must lie in (0, 1)");
  const std::string mode = get_string(d, "data", "split", "chronological");
  if (mode == "chronological") {
    c.split_mode = SplitMode::Chronological;
  } else if (mode == "shuffled") {
    c.split_mode = SplitMode::Shuffled;
  } else {
    bad("data.split", "expected chronological or shuffled");
  }
  if (d.contains("embargo") && !d.at("embargo").is_null()) c.embargo = get_size(d, "data", "embargo", 0);
  c.export_windows = get_bool(d, "data", "export_windows", false);
  return c;
}

TrainConfig parse_train(const json& t) {
  reject_unknown(t, "train", {"epochs", "batch_size", "learning_rate", "momentum", "clip_norm", "validation_fraction", "selection"});
  TrainConfig c;
  c.epochs = get_size(t, "train", "epochs", c.epochs);
  c.batch_size = get_size(t, "train", "batch_size", c.batch_size);
  c.learning_rate = get_double(t, "train", "learning_rate", c.learning_rate);
  c.momentum = get_double(t, "train", "momentum", c.momentum);
  c.clip_norm = get_double(t, "train", "clip_norm", c.clip_norm);
  c.validation_fraction = get_double(t, "train", "validation_fraction", c.validation_fraction);
  if (t.contains("selection")) c.selection = parse_selection_metric(get_string(t, "train", "selection", ""));
  if (!(c.learning_rate > 0.0)) bad("train.learning_rate", "must be > 0");
  c.validate();
  return c;
}

}  // namespace

ModelConfig parse_model_section(const json& m, const std::string& where) {
  reject_unknown(m, where,
                 {"preset", "name", "family", "grouping", "groups", "rcl_iterations", "rcl_stages", "kernel_width",
                  "coeff_kernel_width", "padding", "stage_channels", "pool_before", "dense_units", "hidden_activation",
                  "output_activation"});
  ModelConfig c;
  c.preset = get_string(m, where, "preset", "");
  const ModelFamily family = parse_enum(m, where, "family", parse_family, ModelFamily::Cnn);
  const GroupingMode grouping = parse_enum(m, where, "grouping", parse_grouping, GroupingMode::None);
  ModelSpec& s = c.spec;
  if (c.preset.empty()) {
    s.family = family;
    s.grouping = grouping;
    s.stage_channels = {16, 16};
    s.pool_before = {1, 4};
    s.dense_units = {16, 1};
  } else {
    try {
      s = preset_spec(c.preset, family, grouping);
    } catch (const std::exception& e) {
      bad(join(where, "preset"), e.what());
    }
  }
  s.name = get_string(m, where, "name", c.preset.empty() ? "custom" : s.name);
  s.groups = get_size(m, where, "groups", s.groups);
  s.rcl_iterations = get_size(m, where, "rcl_iterations", s.rcl_iterations);
  s.rcl_stages = get_size(m, where, "rcl_stages", s.rcl_stages);
  s.kernel_width = get_size(m, where, "kernel_width", s.kernel_width);
  s.coeff_kernel_width = get_size(m, where, "coeff_kernel_width", s.coeff_kernel_width);
  s.padding = parse_enum(m, where, "padding", parse_padding, s.padding);
  s.stage_channels = get_sizes(m, where, "stage_channels", s.stage_channels);
  s.pool_before = get_sizes(m, where, "pool_before", s.pool_before);
  s.dense_units = get_sizes(m, where, "dense_units", s.dense_units);
  s.hidden_activation = parse_enum(m, where, "hidden_activation", parse_activation, s.hidden_activation);
  s.output_activation = parse_enum(m, where, "output_activation", parse_activation, s.output_activation);

  if (s.grouping == GroupingMode::None) s.groups = 1;
  if (s.grouping == GroupingMode::Explicit && s.groups < 2) bad(join(where, "groups"), "explicit grouping needs K >= 2");
  if (s.grouping == GroupingMode::Coeff && s.groups < 1) bad(join(where, "groups"), "coefficient grouping needs K >= 1");
  if (s.family == ModelFamily::Rcnn && s.rcl_iterations < 1) bad(join(where, "rcl_iterations"), "rcnn needs l >= 1");
  if (s.stage_channels.empty()) bad(join(where, "stage_channels"), "at least one conv stage is required");
  if (s.pool_before.size() != s.stage_channels.size()) bad(join(where, "pool_before"), "needs one entry per conv stage");
  if (s.dense_units.empty() || s.dense_units.back() != 1) bad(join(where, "dense_units"), "must end with the output width 1");
  for (std::size_t v : s.stage_channels)
    if (v == 0) bad(join(where, "stage_channels"), "entries must be positive");
  for (std::size_t v : s.dense_units)
    if (v == 0) bad(join(where, "dense_units"), "entries must be positive");
  if (s.kernel_width == 0) bad(join(where, "kernel_width"), "must be >= 1");
  return c;
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("--override: expected key=value, got '" + std::string(assignment) + "'");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--override: empty path component in '" + key + "'");
    if (!node->is_object()) throw ConfigError("--override: '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string config_hash(const json& doc) {
  json copy = doc;
  if (copy.is_object()) copy.erase("output_dir");
  const std::string text = copy.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(const json& doc, const std::string& base_dir) {
  reject_unknown(doc, "", {"data", "model", "train", "cluster", "eval", "compare", "output_dir", "seed"});
  RunConfig c;
  if (!doc.contains("data")) bad("data", "required section");
  c.data = parse_data(doc.at("data"), base_dir);
  c.model = parse_model_section(doc.contains("model") ? doc.at("model") : json::object(), "model");
  c.train = parse_train(doc.contains("train") ? doc.at("train") : json::object());
  c.seed = get_size(doc, "", "seed", 0);
  c.output_dir = get_string(doc, "", "output_dir", c.output_dir);
  if (c.output_dir.empty()) bad("output_dir", "must not be empty");
  c.train.seed = c.seed;

  if (doc.contains("cluster")) {
    const json& cl = doc.at("cluster");
    reject_unknown(cl, "cluster", {"assignment"});
    c.cluster.assignment = get_string(cl, "cluster", "assignment", "");
  }
  if (doc.contains("eval")) {
    const json& ev = doc.at("eval");
    reject_unknown(ev, "eval", {"split", "checkpoint"});
    c.eval.split = get_string(ev, "eval", "split", c.eval.split);
    c.eval.checkpoint = get_string(ev, "eval", "checkpoint", "");
  }
  if (c.eval.split != "test" && c.eval.split != "validation" && c.eval.split != "train") {
    bad("eval.split", "expected test, validation or train");
  }
  if (doc.contains("compare")) {
    const json& cmp = doc.at("compare");
    reject_unknown(cmp, "compare", {"repeats", "targets", "ridge_lambda", "baselines", "models"});
    c.compare.repeats = get_size(cmp, "compare", "repeats", c.compare.repeats);
    if (c.compare.repeats < 1) bad("compare.repeats", "must be >= 1");
    if (cmp.contains("targets")) {
      if (!cmp.at("targets").is_array()) bad("compare.targets", "expected an array of series names");
      for (const json& t : cmp.at("targets")) {
        if (!t.is_string()) bad("compare.targets", "expected an array of series names");
        c.compare.targets.push_back(t.get<std::string>());
      }
    }
    c.compare.ridge_lambda = get_double(cmp, "compare", "ridge_lambda", c.compare.ridge_lambda);
    if (!(c.compare.ridge_lambda > 0.0)) bad("compare.ridge_lambda", "must be > 0");
    c.compare.baselines = get_bool(cmp, "compare", "baselines", true);
    if (cmp.contains("models")) {
      if (!cmp.at("models").is_array()) bad("compare.models", "expected an array");
      std::set<std::string> names;
      std::size_t i = 0;
      for (const json& m : cmp.at("models")) {
        const std::string where = "compare.models[" + std::to_string(i++) + "]";
        if (!m.is_object()) bad(where, "expected an object");
        CompareModel cm;
        cm.name = get_string(m, where, "name", "");
        if (cm.name.empty()) bad(where + ".name", "required");
        if (!names.insert(cm.name).second) bad(where + ".name", "duplicate model name '" + cm.name + "'");
        cm.overrides = m.contains("model") ? m.at("model") : json::object();
        reject_unknown(m, where, {"name", "model"});
        json merged = doc.contains("model") ? doc.at("model") : json::object();
        merged.merge_patch(cm.overrides);
        parse_model_section(merged, where + ".model");
        c.compare.models.push_back(std::move(cm));
      }
    }
  }
  if (!doc.contains("compare") || !doc.at("compare").contains("models")) {
    c.compare.models.push_back({c.model.spec.name, json::object()});
  }
  c.effective = doc;
  c.hash = config_hash(doc);
  return c;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides, std::optional<std::uint64_t> seed,
                      std::optional<std::string> output_dir) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config: '" + path + "' is not valid JSON");
  for (const std::string& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  if (output_dir) doc["output_dir"] = *output_dir;
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_config(doc, base.empty() ? "." : base);
}

}  // namespace gcnn
