#include "gcnn/tape.hpp"

#include <algorithm>
#include <cmath>

#include "gcnn/errors.hpp"

namespace gcnn {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value, bool trainable) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.trainable = trainable;
  n.needs_grad = trainable;
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> operands, BackwardFn fn) {
  bool needs = false;
  for (std::size_t op : operands) {
    if (op >= nodes_.size()) throw std::logic_error("operand recorded after its consumer");
    needs = needs || nodes_[op].needs_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.operands = std::move(operands);
  n.needs_grad = needs;
  if (needs) n.backward = std::move(fn);
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v.id); }

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss belongs to a different tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(nodes_[loss.id].value.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].trainable) grad_buffer(i);
  }
}

double grad_check(const TapeFunction& f, std::span<const Tensor> leaves, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : leaves) vars.push_back(tape.leaf(t, true));
    Var out = f(tape, vars);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  auto evaluate = [&](const std::vector<Tensor>& point) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : point) vars.push_back(tape.leaf(t, true));
    return f(tape, vars).value().item();
  };

  double worst = 0.0;
  std::vector<Tensor> point(leaves.begin(), leaves.end());
  for (std::size_t l = 0; l < point.size(); ++l) {
    for (std::size_t e = 0; e < point[l].size(); ++e) {
      const double saved = point[l][e];
      point[l][e] = saved + h;
      const double up = evaluate(point);
      point[l][e] = saved - h;
      const double down = evaluate(point);
      point[l][e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[l][e];
      const double scale = std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, std::abs(a - numeric) / scale);
    }
  }
  return worst;
}

}  // namespace gcnn
