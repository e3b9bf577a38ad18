#include "gcnn/layers.hpp"

#include <string>

#include "gcnn/errors.hpp"

namespace gcnn {

Var ParamBinder::bind(const Tensor& param) {
  auto it = bound_.find(&param);
  if (it != bound_.end()) return it->second;
  Var v = tape_->leaf(param, trainable_);
  bound_.emplace(&param, v);
  return v;
}

std::optional<Var> ParamBinder::bound(const Tensor& param) const {
  auto it = bound_.find(&param);
  if (it == bound_.end()) return std::nullopt;
  return it->second;
}

Var Conv1DLayer::forward(ParamBinder& params, Var x) const {
  Var y = conv1d(x, params.bind(kernels), params.bind(bias), padding);
  return gcnn::activation(y, this->activation);
}

std::size_t GroupedConv1DLayer::out_channels() const {
  std::size_t n = 0;
  for (const Group& g : groups) n += g.kernels.dim(0);
  return n;
}

void GroupedConv1DLayer::validate(std::size_t in_channels, bool require_partition) const {
  if (groups.empty()) throw ShapeError("grouped layer has no groups");
  std::vector<int> seen(in_channels, 0);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const Group& g = groups[k];
    if (g.members.empty()) throw ShapeError("group " + std::to_string(k) + " has no member channels");
    if (g.kernels.rank() != 3 || g.kernels.dim(1) != g.members.size()) {
      throw ShapeError("group " + std::to_string(k) + " kernel depth does not match its member count");
    }
    if (g.bias.size() != g.kernels.dim(0)) throw ShapeError("group " + std::to_string(k) + " bias length mismatch");
    for (std::size_t m : g.members) {
      if (m >= in_channels) throw ShapeError("group member channel " + std::to_string(m) + " out of range");
      ++seen[m];
    }
  }
  if (require_partition) {
    for (std::size_t c = 0; c < in_channels; ++c) {
      if (seen[c] != 1) {
        throw ShapeError("input channel " + std::to_string(c) + (seen[c] ? " belongs to several groups" : " belongs to no group"));
      }
    }
  }
}

Var GroupedConv1DLayer::forward(ParamBinder& params, Var x) const {
  std::vector<Var> parts;
  parts.reserve(groups.size());
  for (const Group& g : groups) {
    Var xs = select_channels(x, g.members);
    Var y = conv1d(xs, params.bind(g.kernels), params.bind(g.bias), padding);
    parts.push_back(gcnn::activation(y, this->activation));
  }
  return concat_channels(parts);
}

Var RecurrentConvLayer::forward(ParamBinder& params, Var x) const {
  if (iterations == 0) throw ShapeError("RCL needs at least one iteration");
  if (inner.in_channels() != inner.out_channels()) {
    throw ShapeError("RCL needs equal input and output channels for the skip sum");
  }
  if (x.value().dim(1) != inner.in_channels()) throw ShapeError("RCL input channel mismatch");
  Var z = inner.forward(params, x);
  for (std::size_t m = 1; m < iterations; ++m) z = inner.forward(params, x + z);
  return z;
}

std::size_t GroupedRecurrentLayer::out_channels() const {
  std::size_t n = 0;
  for (const Group& g : groups) n += g.rcl.inner.out_channels();
  return n;
}

Var GroupedRecurrentLayer::forward(ParamBinder& params, Var x) const {
  std::vector<Var> parts;
  parts.reserve(groups.size());
  for (const Group& g : groups) parts.push_back(g.rcl.forward(params, select_channels(x, g.members)));
  return concat_channels(parts);
}

Tensor ClusteringCoeffLayer::coefficients() const {
  Tape tape;
  return softmax_rows(tape.constant(logits)).value();
}

Var ClusteringCoeffLayer::forward(ParamBinder& params, Var x) const {
  if (x.value().rank() != 3 || x.value().dim(1) != variables()) {
    throw ShapeError("clustering-coefficient layer expects " + std::to_string(variables()) +
                     " variables, got input " + shape_string(x.value().shape()));
  }
  Var u = softmax_rows(params.bind(logits));
  std::vector<Var> parts;
  parts.reserve(groups());
  for (std::size_t k = 0; k < groups(); ++k) {
    Var y = channelwise_conv1d(x, params.bind(kernels[k]), padding);
    y = scale_channels(y, column(u, k));
    y = add_bias(y, params.bind(biases[k]));
    parts.push_back(gcnn::activation(y, this->activation));
  }
  return concat_channels(parts);
}

Var DenseLayer::forward(ParamBinder& params, Var x) const {
  Var y = matmul(x, transpose(params.bind(weight)));
  return gcnn::activation(add_bias(y, params.bind(bias)), this->activation);
}

Var toy_grouped_dense_forward(Var x, Var u, Var w1, Var b1, Var w2, Var b2, Activation act) {
  const Tensor& xv = x.value();
  const Tensor& uv = u.value();
  const Tensor& wv = w1.value();
  if (xv.rank() != 2 || uv.rank() != 2 || wv.rank() != 3) throw ShapeError("toy network: bad operand ranks");
  const std::size_t n = xv.dim(0), d = xv.dim(1), k = uv.dim(1);
  if (uv.dim(0) != n || wv.dim(0) != n || wv.dim(1) != k || wv.dim(2) != d || b1.value().size() != k ||
      w2.value().shape() != Shape{k, 1} || b2.value().size() != 1) {
    throw ShapeError("toy network: operand shapes disagree");
  }
  Tape& tape = *x.tape;
  // p_ij = x_i . W1_ij
  Var p = reshape(matmul(w1, reshape(x, {n, d, 1})), {n, k});
  Var ones = tape.constant(Tensor::filled({1, n}, 1.0));
  Var h = gcnn::activation(add_bias(matmul(ones, p * u), b1), act);
  return gcnn::activation(add_bias(matmul(h, w2), b2), act);
}

}  // namespace gcnn
