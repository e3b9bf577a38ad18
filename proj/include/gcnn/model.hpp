#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gcnn/groups.hpp"
#include "gcnn/layers.hpp"

namespace gcnn {

enum class GroupingMode { None, Explicit, Coeff };
enum class ModelFamily { Cnn, Rcnn };

GroupingMode parse_grouping(std::string_view name);
std::string_view to_string(GroupingMode g);
ModelFamily parse_family(std::string_view name);
std::string_view to_string(ModelFamily f);

/// Layer-stack description. Conv stages are listed in order; in grouped
/// modes `stage_channels` is the per-group channel budget, otherwise the
/// stage's total channel count. `pool_before[s]` > 1 inserts a max-pool with
/// window = stride = that value ahead of stage s.
struct ModelSpec {
  std::string name = "custom";
  std::size_t input_channels = 0;
  std::size_t window = 0;
  GroupingMode grouping = GroupingMode::None;
  std::size_t groups = 1;
  ModelFamily family = ModelFamily::Cnn;
  std::size_t rcl_iterations = 2;
  std::size_t rcl_stages = 3;  // leading conv stages that are RCLs in the rcnn family
  std::size_t kernel_width = 3;
  std::size_t coeff_kernel_width = 3;
  Padding padding = Padding::Same;
  std::vector<std::size_t> stage_channels;
  std::vector<std::size_t> pool_before;
  std::vector<std::size_t> dense_units;  // hidden widths followed by the output width (1)
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::Linear;

  bool grouped() const { return grouping != GroupingMode::None; }
  // Throws ShapeError when stage geometries do not compose.
  void validate() const;
  std::vector<std::size_t> stage_widths() const;
  std::vector<std::size_t> stage_total_channels() const;
  // Human-readable echo, e.g. "input 87x64 | conv 500x64 | pool4 conv 500x16 | ... | dense 100 | dense 1".
  std::string layer_plan() const;
  // Same geometry with every grouped stage widened to groups * per-group channels, ungrouped.
  ModelSpec vanilla_counterpart() const;

  bool operator==(const ModelSpec&) const = default;
};

// The architectures of the groundwater (87 inputs) and drone (147 inputs) experiments.
ModelSpec water_spec(ModelFamily family, GroupingMode grouping);
ModelSpec drone_spec(ModelFamily family, GroupingMode grouping);
ModelSpec preset_spec(std::string_view preset, ModelFamily family, GroupingMode grouping);

using Layer = std::variant<ClusteringCoeffLayer, Conv1DLayer, GroupedConv1DLayer, RecurrentConvLayer,
                           GroupedRecurrentLayer, MaxPoolLayer, FlattenLayer, DenseLayer>;

struct NamedParam {
  std::string name;
  Tensor* value;
};

struct NamedConstParam {
  std::string name;
  const Tensor* value;
};

class Model {
 public:
  Model(ModelSpec spec, std::optional<GroupAssignment> assignment, std::uint64_t seed, std::vector<Layer> layers);

  const ModelSpec& spec() const { return spec_; }
  const std::optional<GroupAssignment>& assignment() const { return assignment_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  // x: [B x N x T] -> [B x 1]
  Var forward(ParamBinder& params, Var x) const;
  // Activations just before the flatten/dense head, [B x C x W].
  Var features(ParamBinder& params, Var x) const;
  Tensor predict(const Tensor& inputs) const;

  // Deterministic order; names are stable across builds of the same spec.
  std::vector<NamedParam> parameters();
  std::vector<NamedConstParam> parameters() const;
  Tensor* find_parameter(std::string_view name);

  // Row-stochastic U of the clustering-coefficient layer, if any.
  std::optional<Tensor> coefficient_matrix() const;

 private:
  ModelSpec spec_;
  std::optional<GroupAssignment> assignment_;
  std::uint64_t seed_;
  std::vector<Layer> layers_;
};

/// Pure function of its arguments. Explicit grouping requires an assignment
/// over `spec.input_channels` with `spec.groups` nonempty groups.
Model build_model(const ModelSpec& spec, const std::optional<GroupAssignment>& assignment, std::uint64_t seed);

// Every trainable scalar: kernels, biases, dense weights, coefficient logits.
std::size_t count_params(const Model& model);
// Convolution kernel weights only (no biases, dense head, or coefficient layer).
std::size_t count_conv_kernel_params(const Model& model);

inline constexpr std::string_view kCheckpointFormat = "gcnn-checkpoint/1";

/// Structured-text checkpoint: format tag, spec echo, seed, assignment, and
/// every parameter as {name, shape, row-major values}. `config_hash` is
/// recorded verbatim when nonempty.
void save_checkpoint(std::ostream& out, const Model& model, const std::string& config_hash = "");
void save_checkpoint(const std::string& path, const Model& model, const std::string& config_hash = "");
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::string& path);

}  // namespace gcnn
