#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gcnn/tensor.hpp"

namespace gcnn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode gradient tape. Entries are appended in evaluation order, so
/// operands always precede the entries that consume them.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool trainable = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends a primitive result. `fn` must accumulate into the gradient
  // buffers of every operand for which needs_grad() holds.
  Var record(Tensor value, std::vector<std::size_t> operands, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  // Gradient after backward(); zeros for entries that received none.
  const Tensor& grad(Var v);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool trainable(std::size_t id) const { return nodes_[id].trainable; }
  const std::vector<std::size_t>& operands(std::size_t id) const { return nodes_[id].operands; }

  // Lazily zero-initialized accumulation buffer.
  Tensor& grad_buffer(std::size_t id);
  // Upstream gradient of an entry during backward().
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool trainable = false;
    bool needs_grad = false;
    std::vector<std::size_t> operands;
    BackwardFn backward;
  };

  // Deque keeps references to earlier values stable while recording.
  std::deque<Node> nodes_;
};

enum class ElementwiseKind { Add, Sub, Mul };
enum class Activation { Relu, Tanh, Linear };
enum class Padding { Same, Valid };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);
Padding parse_padding(std::string_view name);
std::string_view to_string(Padding p);

// Elementwise arithmetic on equal shapes, or against a scalar.
Var elementwise(ElementwiseKind kind, Var a, Var b);
Var elementwise(ElementwiseKind kind, Var a, double b);
inline Var operator+(Var a, Var b) { return elementwise(ElementwiseKind::Add, a, b); }
inline Var operator-(Var a, Var b) { return elementwise(ElementwiseKind::Sub, a, b); }
inline Var operator*(Var a, Var b) { return elementwise(ElementwiseKind::Mul, a, b); }
inline Var operator*(Var a, double b) { return elementwise(ElementwiseKind::Mul, a, b); }
inline Var operator+(Var a, double b) { return elementwise(ElementwiseKind::Add, a, b); }

// [m x k] . [k x n], or batched [B x m x k] . [B x k x n].
Var matmul(Var a, Var b);
Var transpose(Var a);

// Cross-correlation, stride 1. x is [Cin x W] or [B x Cin x W]; kernel is
// [Cout x Cin x kw]; bias is [Cout].
Var conv1d(Var x, Var kernel, std::optional<Var> bias, Padding padding);
// One kernel [kw] applied independently to every channel of x.
Var channelwise_conv1d(Var x, Var kernel, Padding padding);
// Per-channel windowed maximum along the last axis; ties go to the first maximum.
Var maxpool1d(Var x, std::size_t window, std::size_t stride);
Var activation(Var x, Activation kind);

// Adds b[C] along axis 1 of a rank-2 [B x C] or rank-3 [B x C x W] tensor.
// A length-1 bias is broadcast to every channel.
Var add_bias(Var x, Var b);
// Multiplies channel c of a rank-3 [B x C x W] tensor by s[c].
Var scale_channels(Var x, Var s);
Var softmax_rows(Var x);
Var column(Var x, std::size_t k);
Var select_channels(Var x, std::span<const std::size_t> channels);
Var concat_channels(std::span<const Var> parts);
Var reshape(Var x, Shape shape);
Var sum(Var x);
Var mean(Var x);

Tensor apply_activation(const Tensor& x, Activation kind);
// Output width of conv1d for the given geometry.
std::size_t conv_output_width(std::size_t width, std::size_t kernel_width, Padding padding);
std::size_t pool_output_width(std::size_t width, std::size_t window, std::size_t stride);

/// Worst mixed relative error |analytic - numeric| / max(1, |analytic|, |numeric|)
/// between the tape gradient and central differences of `f` over every element
/// of every leaf.
using TapeFunction = std::function<Var(Tape&, std::span<const Var> leaves)>;
double grad_check(const TapeFunction& f, std::span<const Tensor> leaves, double h = 1e-5);

}  // namespace gcnn
