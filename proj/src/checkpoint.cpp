#include <fstream>

#include "gcnn/errors.hpp"
#include "gcnn/model.hpp"
#include "json.hpp"

namespace gcnn {

using nlohmann::ordered_json;

namespace {

ordered_json spec_to_json(const ModelSpec& s) {
  ordered_json j;
  j["name"] = s.name;
  j["input_channels"] = s.input_channels;
  j["window"] = s.window;
  j["grouping"] = to_string(s.grouping);
  j["groups"] = s.groups;
  j["family"] = to_string(s.family);
  j["rcl_iterations"] = s.rcl_iterations;
  j["rcl_stages"] = s.rcl_stages;
  j["kernel_width"] = s.kernel_width;
  j["coeff_kernel_width"] = s.coeff_kernel_width;
  j["padding"] = to_string(s.padding);
  j["stage_channels"] = s.stage_channels;
  j["pool_before"] = s.pool_before;
  j["dense_units"] = s.dense_units;
  j["hidden_activation"] = to_string(s.hidden_activation);
  j["output_activation"] = to_string(s.output_activation);
  j["layer_plan"] = s.layer_plan();
  return j;
}

ModelSpec spec_from_json(const ordered_json& j) {
  ModelSpec s;
  s.name = j.at("name").get<std::string>();
  s.input_channels = j.at("input_channels").get<std::size_t>();
  s.window = j.at("window").get<std::size_t>();
  s.grouping = parse_grouping(j.at("grouping").get<std::string>());
  s.groups = j.at("groups").get<std::size_t>();
  s.family = parse_family(j.at("family").get<std::string>());
  s.rcl_iterations = j.at("rcl_iterations").get<std::size_t>();
  s.rcl_stages = j.at("rcl_stages").get<std::size_t>();
  s.kernel_width = j.at("kernel_width").get<std::size_t>();
  s.coeff_kernel_width = j.at("coeff_kernel_width").get<std::size_t>();
  s.padding = parse_padding(j.at("padding").get<std::string>());
  s.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
  s.pool_before = j.at("pool_before").get<std::vector<std::size_t>>();
  s.dense_units = j.at("dense_units").get<std::vector<std::size_t>>();
  s.hidden_activation = parse_activation(j.at("hidden_activation").get<std::string>());
  s.output_activation = parse_activation(j.at("output_activation").get<std::string>());
  return s;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Model& model, const std::string& config_hash) {
  ordered_json j;
  j["format"] = kCheckpointFormat;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["seed"] = model.seed();
  j["spec"] = spec_to_json(model.spec());
  if (model.assignment()) {
    j["assignment"] = {{"k", model.assignment()->k}, {"labels", model.assignment()->labels}};
  } else {
    j["assignment"] = nullptr;
  }
  ordered_json params = ordered_json::array();
  for (const NamedConstParam& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"shape", p.value->shape()}, {"values", p.value->storage()}});
  }
  j["parameters"] = std::move(params);
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing checkpoint");
}

void save_checkpoint(const std::string& path, const Model& model, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  save_checkpoint(out, model, config_hash);
}

Model load_checkpoint(std::istream& in) {
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const std::exception& e) {
    throw DataError(std::string("unreadable checkpoint: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError("unsupported checkpoint format '" + j.at("format").get<std::string>() + "'");
    }
    const ModelSpec spec = spec_from_json(j.at("spec"));
    std::optional<GroupAssignment> assignment;
    if (!j.at("assignment").is_null()) {
      GroupAssignment a;
      a.k = j["assignment"].at("k").get<std::size_t>();
      a.labels = j["assignment"].at("labels").get<std::vector<std::size_t>>();
      assignment = a;
    }
    Model model = build_model(spec, assignment, j.at("seed").get<std::uint64_t>());
    const auto& params = j.at("parameters");
    auto slots = model.parameters();
    if (params.size() != slots.size()) {
      throw DataError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                      std::to_string(slots.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& p = params[i];
      if (p.at("name").get<std::string>() != slots[i].name) {
        throw DataError("checkpoint parameter '" + p.at("name").get<std::string>() + "' where '" + slots[i].name +
                        "' was expected");
      }
      Tensor t(p.at("shape").get<Shape>(), p.at("values").get<std::vector<double>>());
      if (t.shape() != slots[i].value->shape()) {
        throw DataError("checkpoint parameter '" + slots[i].name + "' has shape " + shape_string(t.shape()) +
                        ", model expects " + shape_string(slots[i].value->shape()));
      }
      *slots[i].value = std::move(t);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace gcnn
