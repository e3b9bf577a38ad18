#include "gcnn/model.hpp"

#include <cmath>
#include <sstream>

#include "gcnn/errors.hpp"
#include "gcnn/rng.hpp"

namespace gcnn {

GroupingMode parse_grouping(std::string_view name) {
  if (name == "none") return GroupingMode::None;
  if (name == "explicit") return GroupingMode::Explicit;
  if (name == "coeff") return GroupingMode::Coeff;
  throw std::invalid_argument("unknown grouping mode '" + std::string(name) + "'");
}

std::string_view to_string(GroupingMode g) {
  switch (g) {
    case GroupingMode::None: return "none";
    case GroupingMode::Explicit: return "explicit";
    case GroupingMode::Coeff: return "coeff";
  }
  return "?";
}

ModelFamily parse_family(std::string_view name) {
  if (name == "cnn") return ModelFamily::Cnn;
  if (name == "rcnn") return ModelFamily::Rcnn;
  throw std::invalid_argument("unknown model family '" + std::string(name) + "'");
}

std::string_view to_string(ModelFamily f) { return f == ModelFamily::Cnn ? "cnn" : "rcnn"; }

void ModelSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ShapeError("model spec: " + msg); };
  if (input_channels == 0) fail("input_channels must be positive");
  if (window == 0) fail("window must be positive");
  if (stage_channels.empty()) fail("at least one conv stage is required");
  if (pool_before.size() != stage_channels.size()) fail("pool_before needs one entry per conv stage");
  if (dense_units.empty() || dense_units.back() != 1) fail("dense_units must end with the single output unit");
  if (kernel_width == 0) fail("kernel_width must be positive");
  if (grouped() && groups == 0) fail("grouped modes need groups >= 1");
  if (grouping == GroupingMode::Coeff && coeff_kernel_width == 0) fail("coeff_kernel_width must be positive");
  if (family == ModelFamily::Rcnn && rcl_iterations == 0) fail("rcl_iterations must be >= 1");
  if (family == ModelFamily::Rcnn && padding != Padding::Same) fail("RCL stages need same padding");
  for (std::size_t c : stage_channels) {
    if (c == 0) fail("stage channel counts must be positive");
  }
  for (std::size_t u : dense_units) {
    if (u == 0) fail("dense widths must be positive");
  }
  std::size_t width = window;
  if (grouping == GroupingMode::Coeff) {
    if (padding == Padding::Valid && coeff_kernel_width > width) fail("coefficient kernel wider than window");
    width = conv_output_width(width, coeff_kernel_width, padding);
  }
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    const std::size_t p = pool_before[s];
    if (p > 1) {
      if (p > width) fail("pool window " + std::to_string(p) + " exceeds width " + std::to_string(width) + " at stage " + std::to_string(s + 1));
      width = pool_output_width(width, p, p);
    }
    if (padding == Padding::Valid && kernel_width > width) fail("kernel wider than input at stage " + std::to_string(s + 1));
    width = conv_output_width(width, kernel_width, padding);
  }
}

std::vector<std::size_t> ModelSpec::stage_widths() const {
  std::vector<std::size_t> out;
  std::size_t width = window;
  if (grouping == GroupingMode::Coeff) width = conv_output_width(width, coeff_kernel_width, padding);
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    if (pool_before[s] > 1) width = pool_output_width(width, pool_before[s], pool_before[s]);
    width = conv_output_width(width, kernel_width, padding);
    out.push_back(width);
  }
  return out;
}

std::vector<std::size_t> ModelSpec::stage_total_channels() const {
  std::vector<std::size_t> out;
  for (std::size_t c : stage_channels) out.push_back(grouped() ? c * groups : c);
  return out;
}

std::string ModelSpec::layer_plan() const {
  std::ostringstream out;
  out << "input " << input_channels << "x" << window;
  if (grouping == GroupingMode::Coeff) {
    out << " | coeff " << groups << "x" << input_channels << "x"
        << conv_output_width(window, coeff_kernel_width, padding);
  }
  const auto widths = stage_widths();
  for (std::size_t s = 0; s < stage_channels.size(); ++s) {
    out << " | ";
    if (pool_before[s] > 1) out << "pool" << pool_before[s] << " ";
    const bool rcl = family == ModelFamily::Rcnn && s < rcl_stages;
    out << (rcl ? "rcl" + std::to_string(rcl_iterations) : std::string("conv")) << " ";
    if (grouped()) {
      out << "(" << stage_channels[s] << "x" << widths[s] << ")" << groups;
    } else {
      out << stage_channels[s] << "x" << widths[s];
    }
  }
  for (std::size_t u : dense_units) out << " | dense " << u;
  return out.str();
}

ModelSpec ModelSpec::vanilla_counterpart() const {
  ModelSpec v = *this;
  v.stage_channels = stage_total_channels();
  v.grouping = GroupingMode::None;
  v.groups = 1;
  v.name = name + "-vanilla";
  return v;
}

namespace {

ModelSpec preset_layout(std::string name, std::size_t inputs, std::size_t total, std::size_t k, std::size_t dense,
                     ModelFamily family, GroupingMode grouping) {
  ModelSpec s;
  s.name = std::move(name) + "-" + std::string(to_string(family)) + "-" + std::string(to_string(grouping));
  s.input_channels = inputs;
  s.window = 64;
  s.family = family;
  s.grouping = grouping;
  s.groups = grouping == GroupingMode::None ? 1 : k;
  const std::size_t per_stage = grouping == GroupingMode::None ? total : total / k;
  s.stage_channels = {per_stage, per_stage, per_stage, per_stage};
  s.pool_before = {1, 4, 4, 4};
  s.dense_units = {dense, 1};
  s.rcl_iterations = 2;
  s.rcl_stages = 3;
  return s;
}

}  // namespace

ModelSpec water_spec(ModelFamily family, GroupingMode grouping) {
  return preset_layout("water", 87, 500, 5, 100, family, grouping);
}

ModelSpec drone_spec(ModelFamily family, GroupingMode grouping) {
  return preset_layout("drone", 147, 750, 15, 200, family, grouping);
}

ModelSpec preset_spec(std::string_view preset, ModelFamily family, GroupingMode grouping) {
  if (preset == "water") return water_spec(family, grouping);
  if (preset == "drone") return drone_spec(family, grouping);
  throw std::invalid_argument("unknown preset '" + std::string(preset) + "'");
}

// ---------------------------------------------------------------------------

Model::Model(ModelSpec spec, std::optional<GroupAssignment> assignment, std::uint64_t seed, std::vector<Layer> layers)
    : spec_(std::move(spec)), assignment_(std::move(assignment)), seed_(seed), layers_(std::move(layers)) {}

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Var apply_layer(const Layer& layer, ParamBinder& params, Var x) {
  return std::visit(Overloaded{
                        [&](const MaxPoolLayer& p) { return maxpool1d(x, p.window, p.stride); },
                        [&](const FlattenLayer&) {
                          const Shape& s = x.value().shape();
                          return reshape(x, {s[0], s[1] * s[2]});
                        },
                        [&](const auto& l) { return l.forward(params, x); },
                    },
                    layer);
}

}  // namespace

Var Model::features(ParamBinder& params, Var x) const {
  for (const Layer& layer : layers_) {
    if (std::holds_alternative<FlattenLayer>(layer)) break;
    x = apply_layer(layer, params, x);
  }
  return x;
}

Var Model::forward(ParamBinder& params, Var x) const {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != spec_.input_channels || xv.dim(2) != spec_.window) {
    throw ShapeError("model expects input [B x " + std::to_string(spec_.input_channels) + " x " +
                     std::to_string(spec_.window) + "], got " + shape_string(xv.shape()));
  }
  for (const Layer& layer : layers_) x = apply_layer(layer, params, x);
  return x;
}

Tensor Model::predict(const Tensor& inputs) const {
  Tape tape;
  ParamBinder params(tape, false);
  return forward(params, tape.constant(inputs)).value();
}

std::vector<NamedConstParam> Model::parameters() const {
  std::vector<NamedConstParam> out;
  std::size_t stage = 0, dense = 0;
  for (const Layer& layer : layers_) {
    std::visit(Overloaded{
                   [&](const ClusteringCoeffLayer& l) {
                     out.push_back({"coeff.logits", &l.logits});
                     for (std::size_t k = 0; k < l.groups(); ++k) {
                       out.push_back({"coeff.group" + std::to_string(k + 1) + ".kernel", &l.kernels[k]});
                       out.push_back({"coeff.group" + std::to_string(k + 1) + ".bias", &l.biases[k]});
                     }
                   },
                   [&](const Conv1DLayer& l) {
                     const std::string p = "layer" + std::to_string(++stage) + ".conv";
                     out.push_back({p + ".kernels", &l.kernels});
                     out.push_back({p + ".bias", &l.bias});
                   },
                   [&](const GroupedConv1DLayer& l) {
                     const std::string p = "layer" + std::to_string(++stage);
                     for (std::size_t k = 0; k < l.groups.size(); ++k) {
                       const std::string g = p + ".group" + std::to_string(k + 1);
                       out.push_back({g + ".kernels", &l.groups[k].kernels});
                       out.push_back({g + ".bias", &l.groups[k].bias});
                     }
                   },
                   [&](const RecurrentConvLayer& l) {
                     const std::string p = "layer" + std::to_string(++stage) + ".rcl";
                     out.push_back({p + ".kernels", &l.inner.kernels});
                     out.push_back({p + ".bias", &l.inner.bias});
                   },
                   [&](const GroupedRecurrentLayer& l) {
                     const std::string p = "layer" + std::to_string(++stage);
                     for (std::size_t k = 0; k < l.groups.size(); ++k) {
                       const std::string g = p + ".group" + std::to_string(k + 1) + ".rcl";
                       out.push_back({g + ".kernels", &l.groups[k].rcl.inner.kernels});
                       out.push_back({g + ".bias", &l.groups[k].rcl.inner.bias});
                     }
                   },
                   [&](const DenseLayer& l) {
                     const std::string p = "dense" + std::to_string(++dense);
                     out.push_back({p + ".weight", &l.weight});
                     out.push_back({p + ".bias", &l.bias});
                   },
                   [](const auto&) {},
               },
               layer);
  }
  return out;
}

std::vector<NamedParam> Model::parameters() {
  std::vector<NamedParam> out;
  for (const NamedConstParam& p : std::as_const(*this).parameters()) {
    out.push_back({p.name, const_cast<Tensor*>(p.value)});
  }
  return out;
}

Tensor* Model::find_parameter(std::string_view name) {
  for (NamedParam& p : parameters()) {
    if (p.name == name) return p.value;
  }
  return nullptr;
}

std::optional<Tensor> Model::coefficient_matrix() const {
  for (const Layer& layer : layers_) {
    if (const auto* c = std::get_if<ClusteringCoeffLayer>(&layer)) return c->coefficients();
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(-bound, bound);
  return t;
}

double fan_in_bound(std::size_t fan_in, Activation act) {
  // Variance 2/fan_in for relu, 1/fan_in otherwise.
  const double gain = act == Activation::Relu ? 6.0 : 3.0;
  return std::sqrt(gain / static_cast<double>(fan_in));
}

Conv1DLayer make_conv(std::size_t cin, std::size_t cout, const ModelSpec& spec, Rng& rng) {
  Conv1DLayer l;
  l.kernels = uniform_tensor({cout, cin, spec.kernel_width}, fan_in_bound(cin * spec.kernel_width, spec.hidden_activation), rng);
  l.bias = Tensor::zeros({cout});
  l.padding = spec.padding;
  l.activation = spec.hidden_activation;
  return l;
}

std::vector<std::vector<std::size_t>> contiguous_blocks(const std::vector<std::size_t>& sizes) {
  std::vector<std::vector<std::size_t>> out;
  std::size_t offset = 0;
  for (std::size_t n : sizes) {
    std::vector<std::size_t> block(n);
    for (std::size_t i = 0; i < n; ++i) block[i] = offset + i;
    out.push_back(std::move(block));
    offset += n;
  }
  return out;
}

}  // namespace

Model build_model(const ModelSpec& spec, const std::optional<GroupAssignment>& assignment, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Layer> layers;
  std::optional<GroupAssignment> kept;

  std::size_t channels = spec.input_channels;
  // Member lists of the groups feeding the next grouped stage.
  std::vector<std::vector<std::size_t>> members;

  if (spec.grouping == GroupingMode::Explicit) {
    if (!assignment) throw ShapeError("explicit grouping requires a group assignment");
    if (assignment->size() != spec.input_channels || assignment->k != spec.groups) {
      throw ShapeError("assignment covers " + std::to_string(assignment->size()) + " series in " +
                       std::to_string(assignment->k) + " groups; spec expects " +
                       std::to_string(spec.input_channels) + " series in " + std::to_string(spec.groups));
    }
    try {
      assignment->validate(true);
    } catch (const std::invalid_argument& e) {
      throw ShapeError(std::string("group assignment: ") + e.what());
    }
    members = assignment->members();
    kept = assignment;
  } else if (spec.grouping == GroupingMode::Coeff) {
    ClusteringCoeffLayer c;
    const std::size_t n = spec.input_channels, k = spec.groups;
    c.logits = uniform_tensor({n, k}, 0.01, rng);
    for (std::size_t g = 0; g < k; ++g) {
      c.kernels.push_back(uniform_tensor({1, 1, spec.coeff_kernel_width},
                                         fan_in_bound(spec.coeff_kernel_width, spec.hidden_activation), rng));
      c.biases.push_back(Tensor::zeros({1}));
    }
    c.padding = spec.padding;
    c.activation = spec.hidden_activation;
    layers.emplace_back(std::move(c));
    members = contiguous_blocks(std::vector<std::size_t>(k, n));
    channels = n * k;
  }

  for (std::size_t s = 0; s < spec.stage_channels.size(); ++s) {
    if (spec.pool_before[s] > 1) layers.emplace_back(MaxPoolLayer{spec.pool_before[s], spec.pool_before[s]});
    const std::size_t out = spec.stage_channels[s];
    const bool recurrent = spec.family == ModelFamily::Rcnn && s < spec.rcl_stages;

    if (!spec.grouped()) {
      if (recurrent) {
        if (channels != out) layers.emplace_back(make_conv(channels, out, spec, rng));
        layers.emplace_back(RecurrentConvLayer{make_conv(out, out, spec, rng), spec.rcl_iterations});
      } else {
        layers.emplace_back(make_conv(channels, out, spec, rng));
      }
      channels = out;
      continue;
    }

    bool needs_projection = !recurrent;
    for (const auto& m : members) needs_projection = needs_projection || m.size() != out;
    if (needs_projection) {
      GroupedConv1DLayer g;
      g.padding = spec.padding;
      g.activation = spec.hidden_activation;
      for (const auto& m : members) {
        Conv1DLayer c = make_conv(m.size(), out, spec, rng);
        g.groups.push_back({m, std::move(c.kernels), std::move(c.bias)});
      }
      g.validate(channels, true);
      layers.emplace_back(std::move(g));
      channels = out * members.size();
      members = contiguous_blocks(std::vector<std::size_t>(members.size(), out));
    }
    if (recurrent) {
      GroupedRecurrentLayer r;
      for (const auto& m : members) r.groups.push_back({m, RecurrentConvLayer{make_conv(out, out, spec, rng), spec.rcl_iterations}});
      layers.emplace_back(std::move(r));
    }
  }

  layers.emplace_back(FlattenLayer{});
  std::size_t in = channels * spec.stage_widths().back();
  for (std::size_t d = 0; d < spec.dense_units.size(); ++d) {
    const bool last = d + 1 == spec.dense_units.size();
    DenseLayer l;
    l.activation = last ? spec.output_activation : spec.hidden_activation;
    l.weight = uniform_tensor({spec.dense_units[d], in}, fan_in_bound(in, l.activation), rng);
    l.bias = Tensor::zeros({spec.dense_units[d]});
    in = spec.dense_units[d];
    layers.emplace_back(std::move(l));
  }
  return Model(spec, std::move(kept), seed, std::move(layers));
}

std::size_t count_params(const Model& model) {
  std::size_t n = 0;
  for (const NamedConstParam& p : model.parameters()) n += p.value->size();
  return n;
}

std::size_t count_conv_kernel_params(const Model& model) {
  std::size_t n = 0;
  for (const Layer& layer : model.layers()) {
    std::visit(Overloaded{
                   [&](const Conv1DLayer& l) { n += l.kernels.size(); },
                   [&](const GroupedConv1DLayer& l) {
                     for (const auto& g : l.groups) n += g.kernels.size();
                   },
                   [&](const RecurrentConvLayer& l) { n += l.inner.kernels.size(); },
                   [&](const GroupedRecurrentLayer& l) {
                     for (const auto& g : l.groups) n += g.rcl.inner.kernels.size();
                   },
                   [](const auto&) {},
               },
               layer);
  }
  return n;
}

}  // namespace gcnn
