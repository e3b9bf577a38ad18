#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gcnn/layers.hpp"
#include "gcnn/rng.hpp"
#include "gcnn/tape.hpp"
#include "gcnn/tensor.hpp"

namespace gcnn::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

// sum(y * r) for a fixed random r, so no output weight cancels another.
inline Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor r = random_tensor(rng, y.shape(), 0.5, 1.5);
  return sum(y * tape.constant(std::move(r)));
}

inline Tensor symmetric_random(Rng& rng, std::size_t n) {
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) a.at(i, j) = a.at(j, i) = rng.uniform(-1.0, 1.0);
  return a;
}

// Random weighted graph on n vertices, connected through a random spanning
// tree, with each remaining pair present with probability `density`.
inline Tensor random_connected_weights(Rng& rng, std::size_t n, double density = 0.5) {
  Tensor w({n, n});
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t a = order[i], b = order[rng.below(i)];
    w.at(a, b) = w.at(b, a) = rng.uniform(0.05, 1.0);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (w.at(i, j) == 0.0 && rng.uniform() < density) w.at(i, j) = w.at(j, i) = rng.uniform(0.05, 1.0);
  return w;
}

// Central differences over parameter tensors that `loss` binds through a
// ParamBinder; tensors are perturbed in place and restored.
inline double param_grad_check(const std::vector<Tensor*>& params, const std::function<Var(ParamBinder&)>& loss,
                               double h = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    ParamBinder binder(tape);
    tape.backward(loss(binder));
    for (Tensor* p : params) analytic.push_back(tape.grad(binder.bind(*p)));
  }
  auto eval = [&] {
    Tape tape;
    ParamBinder binder(tape, false);
    return loss(binder).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = eval();
      p[i] = saved - h;
      const double down = eval();
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}));
    }
  }
  return worst;
}

}  // namespace gcnn::testing
