#include <algorithm>
#include <cmath>
#include <string>

#include "gcnn/errors.hpp"
#include "gcnn/tape.hpp"

namespace gcnn {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Padding parse_padding(std::string_view name) {
  if (name == "same") return Padding::Same;
  if (name == "valid") return Padding::Valid;
  throw std::invalid_argument("unknown padding '" + std::string(name) + "'");
}

std::string_view to_string(Padding p) { return p == Padding::Same ? "same" : "valid"; }

namespace {

Tape& tape_of(Var a) {
  if (!a.tape) throw std::invalid_argument("unbound Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
  return tape_of(a);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

std::size_t left_pad(std::size_t kw, Padding padding) { return padding == Padding::Same ? (kw - 1) / 2 : 0; }

// Batched view of a [C x W] or [B x C x W] tensor.
struct SignalDims {
  std::size_t batch, channels, width;
  bool batched;
};

SignalDims signal_dims(const Tensor& x, const char* op) {
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1), false};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2), true};
  throw ShapeError(std::string(op) + " expects [C x W] or [B x C x W], got " + shape_string(x.shape()));
}

Shape signal_shape(const SignalDims& d, std::size_t channels, std::size_t width) {
  return d.batched ? Shape{d.batch, channels, width} : Shape{channels, width};
}

}  // namespace

std::size_t conv_output_width(std::size_t width, std::size_t kernel_width, Padding padding) {
  if (padding == Padding::Same) return width;
  return width + 1 - kernel_width;
}

std::size_t pool_output_width(std::size_t width, std::size_t window, std::size_t stride) {
  return (width - window) / stride + 1;
}

Var elementwise(ElementwiseKind kind, Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rank() == 0 && av.rank() != 0) {
    // A scalar tensor operand broadcasts.
    const std::size_t ai = a.id, bi = b.id;
    Tensor out(av.shape());
    const double s = bv[0];
    for (std::size_t i = 0; i < av.size(); ++i) {
      out[i] = kind == ElementwiseKind::Add ? av[i] + s : kind == ElementwiseKind::Sub ? av[i] - s : av[i] * s;
    }
    return tape.record(std::move(out), {ai, bi}, [kind, ai, bi](Tape& t, std::size_t self) {
      const Tensor& g = t.upstream(self);
      const Tensor& x = t.value(ai);
      const double s = t.value(bi)[0];
      if (t.needs_grad(ai)) {
        Tensor& ga = t.grad_buffer(ai);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kind == ElementwiseKind::Mul ? g[i] * s : g[i];
      }
      if (t.needs_grad(bi)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          acc += kind == ElementwiseKind::Add ? g[i] : kind == ElementwiseKind::Sub ? -g[i] : g[i] * x[i];
        }
        t.grad_buffer(bi)[0] += acc;
      }
    });
  }
  require(av.shape() == bv.shape(),
          "elementwise shape mismatch: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out(av.shape());
  switch (kind) {
    case ElementwiseKind::Add:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case ElementwiseKind::Sub:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
      break;
    case ElementwiseKind::Mul:
      for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
      break;
  }
  const std::size_t ai = a.id, bi = b.id;
  return tape.record(std::move(out), {ai, bi}, [kind, ai, bi](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad_buffer(ai);
      if (kind == ElementwiseKind::Mul) {
        const Tensor& y = t.value(bi);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      if (kind == ElementwiseKind::Mul) {
        const Tensor& x = t.value(ai);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      } else if (kind == ElementwiseKind::Sub) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

Var elementwise(ElementwiseKind kind, Var a, double b) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = kind == ElementwiseKind::Add ? av[i] + b : kind == ElementwiseKind::Sub ? av[i] - b : av[i] * b;
  }
  const std::size_t ai = a.id;
  return tape.record(std::move(out), {ai}, [kind, ai, b](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += kind == ElementwiseKind::Mul ? g[i] * b : g[i];
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool batched = av.rank() == 3;
  require((av.rank() == 2 && bv.rank() == 2) || (av.rank() == 3 && bv.rank() == 3),
          "matmul expects two rank-2 or two rank-3 tensors");
  const std::size_t batch = batched ? av.dim(0) : 1;
  const std::size_t m = av.dim(av.rank() - 2), k = av.dim(av.rank() - 1);
  const std::size_t k2 = bv.dim(bv.rank() - 2), n = bv.dim(bv.rank() - 1);
  require(k == k2 && (!batched || bv.dim(0) == batch),
          "matmul dimension mismatch: " + shape_string(av.shape()) + " . " + shape_string(bv.shape()));
  Tensor out(batched ? Shape{batch, m, n} : Shape{m, n});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* A = av.data().data() + s * m * k;
    const double* B = bv.data().data() + s * k * n;
    double* C = out.data().data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        for (std::size_t j = 0; j < n; ++j) C[i * n + j] += aip * B[p * n + j];
      }
    }
  }
  const std::size_t ai = a.id, bi = b.id;
  return tape.record(std::move(out), {ai, bi}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* A = av.data().data() + s * m * k;
      const double* B = bv.data().data() + s * k * n;
      const double* G = g.data().data() + s * m * n;
      if (t.needs_grad(ai)) {
        double* GA = t.grad_buffer(ai).data().data() + s * m * k;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            GA[i * k + p] += acc;
          }
      }
      if (t.needs_grad(bi)) {
        double* GB = t.grad_buffer(bi).data().data() + s * k * n;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += aip * G[i * n + j];
          }
      }
    }
  });
}

Var transpose(Var a) {
  Tape& tape = tape_of(a);
  const Tensor& av = a.value();
  require(av.rank() == 2, "transpose expects a matrix");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
  const std::size_t ai = a.id;
  return tape.record(std::move(out), {ai}, [ai, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& ga = t.grad_buffer(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var conv1d(Var x, Var kernel, std::optional<Var> bias, Padding padding) {
  Tape& tape = tape_of(x, kernel);
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const SignalDims d = signal_dims(xv, "conv1d");
  require(kv.rank() == 3, "conv1d kernel must be [Cout x Cin x kw], got " + shape_string(kv.shape()));
  const std::size_t cout = kv.dim(0), cin = kv.dim(1), kw = kv.dim(2);
  require(cin == d.channels, "conv1d kernel expects " + std::to_string(cin) + " input channels, input has " +
                                 std::to_string(d.channels));
  const std::size_t padded = padding == Padding::Same ? d.width + kw - 1 : d.width;
  require(kw <= padded, "conv1d kernel width " + std::to_string(kw) + " exceeds padded input width " +
                            std::to_string(padded));
  if (bias) {
    tape_of(x, *bias);
    require(bias->value().rank() == 1 && bias->value().dim(0) == cout, "conv1d bias must have length Cout");
  }
  const std::size_t wout = conv_output_width(d.width, kw, padding);
  const std::size_t left = left_pad(kw, padding);
  Tensor out(signal_shape(d, cout, wout));

  const double* X = xv.data().data();
  const double* K = kv.data().data();
  double* Y = out.data().data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < cout; ++o) {
      double* yrow = Y + (b * cout + o) * wout;
      if (bias) std::fill(yrow, yrow + wout, bias->value()[o]);
      for (std::size_t c = 0; c < cin; ++c) {
        const double* xrow = X + (b * cin + c) * d.width;
        for (std::size_t j = 0; j < kw; ++j) {
          const double kval = K[(o * cin + c) * kw + j];
          // input index = t + j - left
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(left);
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
          const std::ptrdiff_t t1 =
              std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wout), static_cast<std::ptrdiff_t>(d.width) - shift);
          for (std::ptrdiff_t t = t0; t < t1; ++t) yrow[t] += kval * xrow[t + shift];
        }
      }
    }
  }

  std::vector<std::size_t> operands{x.id, kernel.id};
  if (bias) operands.push_back(bias->id);
  const std::size_t xi = x.id, ki = kernel.id;
  const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return tape.record(std::move(out), std::move(operands), [=](Tape& t, std::size_t self) {
    const double* G = t.upstream(self).data().data();
    const double* X = t.value(xi).data().data();
    const double* K = t.value(ki).data().data();
    double* GX = t.needs_grad(xi) ? t.grad_buffer(xi).data().data() : nullptr;
    double* GK = t.needs_grad(ki) ? t.grad_buffer(ki).data().data() : nullptr;
    double* GB = bi && t.needs_grad(*bi) ? t.grad_buffer(*bi).data().data() : nullptr;
    for (std::size_t b = 0; b < d.batch; ++b) {
      for (std::size_t o = 0; o < cout; ++o) {
        const double* grow = G + (b * cout + o) * wout;
        if (GB) {
          double acc = 0.0;
          for (std::size_t tt = 0; tt < wout; ++tt) acc += grow[tt];
          GB[o] += acc;
        }
        for (std::size_t c = 0; c < cin; ++c) {
          const double* xrow = X + (b * cin + c) * d.width;
          double* gxrow = GX ? GX + (b * cin + c) * d.width : nullptr;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(left);
            const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
            const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wout),
                                                               static_cast<std::ptrdiff_t>(d.width) - shift);
            const std::size_t kidx = (o * cin + c) * kw + j;
            if (GK) {
              double acc = 0.0;
              for (std::ptrdiff_t tt = t0; tt < t1; ++tt) acc += grow[tt] * xrow[tt + shift];
              GK[kidx] += acc;
            }
            if (gxrow) {
              const double kval = K[kidx];
              for (std::ptrdiff_t tt = t0; tt < t1; ++tt) gxrow[tt + shift] += grow[tt] * kval;
            }
          }
        }
      }
    }
  });
}

Var channelwise_conv1d(Var x, Var kernel, Padding padding) {
  Tape& tape = tape_of(x, kernel);
  const Tensor& xv = x.value();
  const SignalDims d = signal_dims(xv, "channelwise_conv1d");
  const std::size_t kw = kernel.value().size();
  const std::size_t padded = padding == Padding::Same ? d.width + kw - 1 : d.width;
  require(kw <= padded, "channelwise_conv1d kernel wider than padded input");
  const std::size_t wout = conv_output_width(d.width, kw, padding);
  const std::size_t left = left_pad(kw, padding);
  const std::size_t rows = d.batch * d.channels;
  Tensor out(signal_shape(d, d.channels, wout));
  const double* K = kernel.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xrow = xv.data().data() + r * d.width;
    double* yrow = out.data().data() + r * wout;
    for (std::size_t j = 0; j < kw; ++j) {
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(left);
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 =
          std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wout), static_cast<std::ptrdiff_t>(d.width) - shift);
      for (std::ptrdiff_t t = t0; t < t1; ++t) yrow[t] += K[j] * xrow[t + shift];
    }
  }
  const std::size_t xi = x.id, ki = kernel.id;
  return tape.record(std::move(out), {xi, ki}, [=](Tape& t, std::size_t self) {
    const double* G = t.upstream(self).data().data();
    const double* X = t.value(xi).data().data();
    const double* K = t.value(ki).data().data();
    double* GX = t.needs_grad(xi) ? t.grad_buffer(xi).data().data() : nullptr;
    double* GK = t.needs_grad(ki) ? t.grad_buffer(ki).data().data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* grow = G + r * wout;
      const double* xrow = X + r * d.width;
      for (std::size_t j = 0; j < kw; ++j) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(left);
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(wout),
                                                           static_cast<std::ptrdiff_t>(d.width) - shift);
        if (GK) {
          double acc = 0.0;
          for (std::ptrdiff_t tt = t0; tt < t1; ++tt) acc += grow[tt] * xrow[tt + shift];
          GK[j] += acc;
        }
        if (GX) {
          double* gxrow = GX + r * d.width;
          for (std::ptrdiff_t tt = t0; tt < t1; ++tt) gxrow[tt + shift] += grow[tt] * K[j];
        }
      }
    }
  });
}

Var maxpool1d(Var x, std::size_t window, std::size_t stride) {
  Tape& tape = tape_of(x);
  if (window == 0 || stride == 0) throw ShapeError("maxpool1d window and stride must be positive");
  const Tensor& xv = x.value();
  const SignalDims d = signal_dims(xv, "maxpool1d");
  require(window <= d.width, "maxpool1d window " + std::to_string(window) + " exceeds width " +
                                 std::to_string(d.width));
  const std::size_t wout = pool_output_width(d.width, window, stride);
  const std::size_t rows = d.batch * d.channels;
  Tensor out(signal_shape(d, d.channels, wout));
  std::vector<std::size_t> argmax(rows * wout);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xrow = xv.data().data() + r * d.width;
    for (std::size_t p = 0; p < wout; ++p) {
      std::size_t best = p * stride;
      for (std::size_t q = best + 1; q < p * stride + window; ++q) {
        if (xrow[q] > xrow[best]) best = q;
      }
      argmax[r * wout + p] = r * d.width + best;
      out[r * wout + p] = xrow[best];
    }
  }
  const std::size_t xi = x.id;
  return tape.record(std::move(out), {xi}, [xi, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[i];
  });
}

Tensor apply_activation(const Tensor& x, Activation kind) {
  Tensor out = x;
  switch (kind) {
    case Activation::Relu:
      for (double& v : out.storage()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::Tanh:
      for (double& v : out.storage()) v = std::tanh(v);
      break;
    case Activation::Linear:
      break;
  }
  return out;
}

Var activation(Var x, Activation kind) {
  Tape& tape = tape_of(x);
  if (kind == Activation::Linear) return x;
  const std::size_t xi = x.id;
  return tape.record(apply_activation(x.value(), kind), {xi}, [xi, kind](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xi);
    if (kind == Activation::Relu) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] > 0.0 ? g[i] : 0.0;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var add_bias(Var x, Var b) {
  Tape& tape = tape_of(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  require(xv.rank() == 2 || xv.rank() == 3, "add_bias expects [B x C] or [B x C x W]");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1);
  const std::size_t width = xv.rank() == 3 ? xv.dim(2) : 1;
  require(bv.size() == channels || bv.size() == 1,
          "bias length " + std::to_string(bv.size()) + " does not match " + std::to_string(channels) + " channels");
  const bool broadcast = bv.size() == 1 && channels != 1;
  Tensor out = xv;
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = bv[broadcast ? 0 : c];
      double* row = out.data().data() + (s * channels + c) * width;
      for (std::size_t w = 0; w < width; ++w) row[w] += v;
    }
  const std::size_t xi = x.id, bi = b.id;
  return tape.record(std::move(out), {xi, bi}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    if (t.needs_grad(xi)) {
      Tensor& gx = t.grad_buffer(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad_buffer(bi);
      for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t c = 0; c < channels; ++c) {
          const double* row = g.data().data() + (s * channels + c) * width;
          double acc = 0.0;
          for (std::size_t w = 0; w < width; ++w) acc += row[w];
          gb[broadcast ? 0 : c] += acc;
        }
    }
  });
}

Var scale_channels(Var x, Var s) {
  Tape& tape = tape_of(x, s);
  const Tensor& xv = x.value();
  const Tensor& sv = s.value();
  require(xv.rank() == 3, "scale_channels expects [B x C x W]");
  const std::size_t batch = xv.dim(0), channels = xv.dim(1), width = xv.dim(2);
  require(sv.size() == channels, "scale_channels: scale length does not match channel count");
  Tensor out = xv;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = out.data().data() + (b * channels + c) * width;
      for (std::size_t w = 0; w < width; ++w) row[w] *= sv[c];
    }
  const std::size_t xi = x.id, si = s.id;
  return tape.record(std::move(out), {xi, si}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& xv = t.value(xi);
    const Tensor& sv = t.value(si);
    double* GX = t.needs_grad(xi) ? t.grad_buffer(xi).data().data() : nullptr;
    double* GS = t.needs_grad(si) ? t.grad_buffer(si).data().data() : nullptr;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t off = (b * channels + c) * width;
        double acc = 0.0;
        for (std::size_t w = 0; w < width; ++w) {
          if (GX) GX[off + w] += g[off + w] * sv[c];
          acc += g[off + w] * xv[off + w];
        }
        if (GS) GS[c] += acc;
      }
  });
}

Var softmax_rows(Var x) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require(xv.rank() == 2, "softmax_rows expects a matrix");
  const std::size_t n = xv.dim(0), k = xv.dim(1);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = xv.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (out.at(i, j) = std::exp(xv.at(i, j) - mx));
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) /= z;
  }
  const std::size_t xi = x.id;
  return tape.record(std::move(out), {xi}, [xi, n, k](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < k; ++j) gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var column(Var x, std::size_t k) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require(xv.rank() == 2 && k < xv.dim(1), "column index out of range");
  const std::size_t n = xv.dim(0);
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = xv.at(i, k);
  const std::size_t xi = x.id;
  return tape.record(std::move(out), {xi}, [xi, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < n; ++i) gx.at(i, k) += g[i];
  });
}

Var select_channels(Var x, std::span<const std::size_t> channels) {
  Tape& tape = tape_of(x);
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "select_channels expects [B x C x W]");
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), width = xv.dim(2);
  require(!channels.empty(), "select_channels needs at least one channel");
  for (std::size_t c : channels) require(c < cin, "select_channels index " + std::to_string(c) + " out of range");
  std::vector<std::size_t> idx(channels.begin(), channels.end());
  Tensor out(Shape{batch, idx.size(), width});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t m = 0; m < idx.size(); ++m)
      std::copy_n(xv.data().data() + (b * cin + idx[m]) * width, width,
                  out.data().data() + (b * idx.size() + m) * width);
  const std::size_t xi = x.id;
  return tape.record(std::move(out), {xi}, [=, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t m = 0; m < idx.size(); ++m) {
        const double* src = g.data().data() + (b * idx.size() + m) * width;
        double* dst = gx.data().data() + (b * cin + idx[m]) * width;
        for (std::size_t w = 0; w < width; ++w) dst[w] += src[w];
      }
  });
}

Var concat_channels(std::span<const Var> parts) {
  require(!parts.empty(), "concat_channels needs at least one part");
  Tape& tape = tape_of(parts[0]);
  const std::size_t batch = parts[0].value().dim(0), width = parts[0].value().dim(2);
  std::vector<std::size_t> ids, offsets, counts;
  std::size_t total = 0;
  for (Var p : parts) {
    tape_of(parts[0], p);
    const Tensor& v = p.value();
    require(v.rank() == 3 && v.dim(0) == batch && v.dim(2) == width, "concat_channels geometry mismatch");
    ids.push_back(p.id);
    offsets.push_back(total);
    counts.push_back(v.dim(1));
    total += v.dim(1);
  }
  Tensor out(Shape{batch, total, width});
  for (std::size_t n = 0; n < parts.size(); ++n) {
    const Tensor& v = parts[n].value();
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(v.data().data() + b * counts[n] * width, counts[n] * width,
                  out.data().data() + (b * total + offsets[n]) * width);
  }
  return tape.record(std::move(out), ids, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    for (std::size_t n = 0; n < ids.size(); ++n) {
      if (!t.needs_grad(ids[n])) continue;
      Tensor& gp = t.grad_buffer(ids[n]);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = g.data().data() + (b * total + offsets[n]) * width;
        double* dst = gp.data().data() + b * counts[n] * width;
        for (std::size_t i = 0; i < counts[n] * width; ++i) dst[i] += src[i];
      }
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of(x);
  const std::size_t xi = x.id;
  return tape.record(x.value().reshaped(std::move(shape)), {xi}, [xi](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sum(Var x) {
  Tape& tape = tape_of(x);
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t xi = x.id;
  Tensor out(Shape{});
  out[0] = acc;
  return tape.record(std::move(out), {xi}, [xi](Tape& t, std::size_t self) {
    const double g = t.upstream(self)[0];
    for (double& v : t.grad_buffer(xi).storage()) v += g;
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return sum(x) * (1.0 / n);
}

}  // namespace gcnn
