#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "gcnn/tape.hpp"
#include "gcnn/tensor.hpp"

namespace gcnn {

/// Maps parameter tensors onto tape leaves, one leaf per tensor per tape, so a
/// parameter used several times in one forward pass (RCL unrolling) shares a
/// single gradient accumulator.
class ParamBinder {
 public:
  explicit ParamBinder(Tape& tape, bool trainable = true) : tape_(&tape), trainable_(trainable) {}

  Var bind(const Tensor& param);
  std::optional<Var> bound(const Tensor& param) const;
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  bool trainable_;
  std::map<const Tensor*, Var> bound_;
};

// All signal inputs below are batched [B x C x W].

struct Conv1DLayer {
  Tensor kernels;  // [Cout x Cin x kw]
  Tensor bias;     // [Cout]
  Padding padding = Padding::Same;
  Activation activation = Activation::Relu;

  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t kernel_width() const { return kernels.dim(2); }

  Var forward(ParamBinder& params, Var x) const;
};

/// Each group convolves only its member channels with its own kernels; the
/// group outputs are concatenated in group order.
struct GroupedConv1DLayer {
  struct Group {
    std::vector<std::size_t> members;
    Tensor kernels;  // [Gout x Gin x kw], Gin = members.size()
    Tensor bias;     // [Gout]
  };
  std::vector<Group> groups;
  Padding padding = Padding::Same;
  Activation activation = Activation::Relu;

  std::size_t out_channels() const;
  // Member lists must be in range and match kernel depth; with
  // `require_partition` they must also cover 0..in_channels-1 exactly once.
  void validate(std::size_t in_channels, bool require_partition) const;
  Var forward(ParamBinder& params, Var x) const;
};

/// l applications of one shared convolution: z1 = f(W*x), z_m = f(W*(x + z_{m-1})).
struct RecurrentConvLayer {
  Conv1DLayer inner;
  std::size_t iterations = 2;

  Var forward(ParamBinder& params, Var x) const;
};

struct GroupedRecurrentLayer {
  struct Group {
    std::vector<std::size_t> members;
    RecurrentConvLayer rcl;
  };
  std::vector<Group> groups;

  std::size_t out_channels() const;
  Var forward(ParamBinder& params, Var x) const;
};

/// Soft grouping: channel i of group k is f(u_ik * (w_k * x_i) + b_k) with
/// U = row-softmax(logits). Output is group-major, K * N channels.
struct ClusteringCoeffLayer {
  Tensor logits;                // [N x K]
  std::vector<Tensor> kernels;  // K tensors [1 x 1 x kw]
  std::vector<Tensor> biases;   // K tensors [1]
  Padding padding = Padding::Same;
  Activation activation = Activation::Relu;

  std::size_t variables() const { return logits.dim(0); }
  std::size_t groups() const { return logits.dim(1); }
  Tensor coefficients() const;
  Var forward(ParamBinder& params, Var x) const;
};

struct DenseLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
  Activation activation = Activation::Relu;

  Var forward(ParamBinder& params, Var x) const;  // x: [B x in]
};

struct MaxPoolLayer {
  std::size_t window = 4;
  std::size_t stride = 4;
};

struct FlattenLayer {};

/// Two-layer network over grouped variables:
///   h_j = f(sum_i u_ij x_i . W1_ij + b1_j),  y = f(sum_j h_j W2_j + b2).
/// x: [N x D], u: [N x K], w1: [N x K x D], b1: [K], w2: [K x 1], b2: [1].
/// Returns y as [1 x 1].
Var toy_grouped_dense_forward(Var x, Var u, Var w1, Var b1, Var w2, Var b2, Activation act);

}  // namespace gcnn
