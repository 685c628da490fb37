#pragma once

// Differentiable ops recorded on a Tape.

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/nn/kernels.hpp"
#include "apsusct/nn/tape.hpp"

namespace apsusct::nn {

namespace detail {

template <class T>
std::span<const T> bias_span(Tape<T>& t, Var b) {
  if (!b.valid()) return {};
  return t.value(b).values();
}

template <class T>
void accumulate_bias_grad(const Tensor4<T>& dy, Tensor4<T>& db) {
  const auto& s = dy.shape();
  for (std::size_t c = 0; c < s.c; ++c) {
    T acc = T(0);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* p = dy.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
    }
    db[c] += acc;
  }
}

}  // namespace detail

template <class T>
Var conv2d(Tape<T>& t, Var x, Var w, Var b, const ConvGeometry& g, const std::string& label = "conv") {
  Tensor4<T> out = conv2d(t.value(x), t.value(w), detail::bias_span(t, b), g);
  return t.record(std::move(out), label, {x, w, b}, [x, w, b, g](Tape<T>& tp, const Tensor4<T>& dy) {
    if (tp.needs_grad(x)) detail::correlate_adjoint_input(dy, tp.value(w), g, tp.grad_buffer(x));
    if (tp.needs_grad(w)) detail::correlate_adjoint_weight(tp.value(x), dy, g, tp.grad_buffer(w));
    if (tp.needs_grad(b)) detail::accumulate_bias_grad(dy, tp.grad_buffer(b));
  });
}

template <class T>
Var conv_transpose2d(Tape<T>& t, Var x, Var w, Var b, const ConvGeometry& g,
                     const std::string& label = "conv_transpose") {
  Tensor4<T> out = conv_transpose2d(t.value(x), t.value(w), detail::bias_span(t, b), g);
  return t.record(std::move(out), label, {x, w, b}, [x, w, b, g](Tape<T>& tp, const Tensor4<T>& dy) {
    // The forward map is the input-adjoint of a correlation, so its own adjoints are the
    // correlation itself (for x) and the correlation weight gradient with roles swapped (for w).
    if (tp.needs_grad(x)) detail::correlate_accumulate(dy, tp.value(w), g, tp.grad_buffer(x));
    if (tp.needs_grad(w)) detail::correlate_adjoint_weight(dy, tp.value(x), g, tp.grad_buffer(w));
    if (tp.needs_grad(b)) detail::accumulate_bias_grad(dy, tp.grad_buffer(b));
  });
}

template <class T>
Var leaky_relu(Tape<T>& t, Var x, double slope, const std::string& label = "leaky_relu") {
  const Tensor4<T>& in = t.value(x);
  Tensor4<T> out(in.shape());
  const T a = static_cast<T>(slope);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : a * in[i];
  return t.record(std::move(out), label, {x}, [x, a](Tape<T>& tp, const Tensor4<T>& dy) {
    const Tensor4<T>& in = tp.value(x);
    Tensor4<T>& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] += in[i] > T(0) ? dy[i] : a * dy[i];
  });
}

namespace detail {

// Elementwise op whose derivative is a function of its output.
template <class T, class Fwd, class DerivFromOut>
Var pointwise_by_output(Tape<T>& t, Var x, const std::string& label, Fwd f, DerivFromOut d) {
  const Tensor4<T>& in = t.value(x);
  Tensor4<T> out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  // The closure needs the output; capture its future id (the node pushed next).
  const Var self{t.node_count()};
  return t.record(std::move(out), label, {x}, [x, self, d](Tape<T>& tp, const Tensor4<T>& dy) {
    const Tensor4<T>& y = tp.value(self);
    Tensor4<T>& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * d(y[i]);
  });
}

}  // namespace detail

template <class T>
Var sigmoid(Tape<T>& t, Var x, const std::string& label = "sigmoid") {
  return detail::pointwise_by_output(
      t, x, label, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T y) { return y * (T(1) - y); });
}

template <class T>
Var tanh(Tape<T>& t, Var x, const std::string& label = "tanh") {
  return detail::pointwise_by_output(
      t, x, label, [](T v) { return std::tanh(v); }, [](T y) { return T(1) - y * y; });
}

/// Per-sample, per-channel normalization with learnable scale (gamma) and shift (beta).
template <class T>
Var instance_norm(Tape<T>& t, Var x, Var gamma, Var beta, double eps = 1e-5,
                  const std::string& label = "instance_norm") {
  const Tensor4<T>& in = t.value(x);
  const auto s = in.shape();
  const std::size_t P = s.plane();
  if (P < 2) throw ConfigError(label + ": instance normalization needs at least 2 spatial positions");
  const Tensor4<T>& g = t.value(gamma);
  const Tensor4<T>& bt = t.value(beta);
  if (g.size() != s.c || bt.size() != s.c) throw ConfigError(label + ": gamma/beta length != channels");
  Tensor4<T> out(s);
  auto xhat = std::make_shared<Tensor4<T>>(s);
  auto inv_std = std::make_shared<std::vector<T>>(s.n * s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = in.plane(n, c);
      T mean = T(0);
      for (std::size_t i = 0; i < P; ++i) mean += p[i];
      mean /= static_cast<T>(P);
      T var = T(0);
      for (std::size_t i = 0; i < P; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= static_cast<T>(P);
      const T is = T(1) / std::sqrt(var + static_cast<T>(eps));
      (*inv_std)[n * s.c + c] = is;
      T* xh = xhat->plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < P; ++i) {
        xh[i] = (p[i] - mean) * is;
        o[i] = g[c] * xh[i] + bt[c];
      }
    }
  }
  return t.record(std::move(out), label, {x, gamma, beta},
                  [x, gamma, beta, xhat, inv_std](Tape<T>& tp, const Tensor4<T>& dy) {
                    const auto s = dy.shape();
                    const std::size_t P = s.plane();
                    const Tensor4<T>& g = tp.value(gamma);
                    for (std::size_t c = 0; c < s.c; ++c) {
                      T dg = T(0), db = T(0);
                      for (std::size_t n = 0; n < s.n; ++n) {
                        const T* d = dy.plane(n, c);
                        const T* xh = xhat->plane(n, c);
                        T sum_d = T(0), sum_dxh = T(0);
                        for (std::size_t i = 0; i < P; ++i) {
                          sum_d += d[i];
                          sum_dxh += d[i] * xh[i];
                        }
                        dg += sum_dxh;
                        db += sum_d;
                        if (tp.needs_grad(x)) {
                          T* dx = tp.grad_buffer(x).plane(n, c);
                          const T k = g[c] * (*inv_std)[n * s.c + c] / static_cast<T>(P);
                          for (std::size_t i = 0; i < P; ++i) {
                            dx[i] += k * (static_cast<T>(P) * d[i] - sum_d - xh[i] * sum_dxh);
                          }
                        }
                      }
                      if (tp.needs_grad(gamma)) tp.grad_buffer(gamma)[c] += dg;
                      if (tp.needs_grad(beta)) tp.grad_buffer(beta)[c] += db;
                    }
                  });
}

/// N x C x H x W -> N x C x 1 x 1 spatial mean.
template <class T>
Var global_avg_pool(Tape<T>& t, Var x, const std::string& label = "global_avg_pool") {
  const Tensor4<T>& in = t.value(x);
  const auto s = in.shape();
  Tensor4<T> out({s.n, s.c, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = in.plane(n, c);
      T acc = T(0);
      for (std::size_t i = 0; i < s.plane(); ++i) acc += p[i];
      out.at(n, c, 0, 0) = acc / static_cast<T>(s.plane());
    }
  }
  return t.record(std::move(out), label, {x}, [x](Tape<T>& tp, const Tensor4<T>& dy) {
    Tensor4<T>& dx = tp.grad_buffer(x);
    const auto s = dx.shape();
    const T inv = T(1) / static_cast<T>(s.plane());
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        T* p = dx.plane(n, c);
        const T g = dy.at(n, c, 0, 0) * inv;
        for (std::size_t i = 0; i < s.plane(); ++i) p[i] += g;
      }
    }
  });
}

/// Fully connected map over the flattened C*H*W features; weights (out, in, 1, 1).
template <class T>
Var linear(Tape<T>& t, Var x, Var w, Var b, const std::string& label = "linear") {
  const Tensor4<T>& in = t.value(x);
  const Tensor4<T>& W = t.value(w);
  const std::size_t N = in.shape().n;
  const std::size_t F = in.shape().c * in.shape().plane();
  const std::size_t G = W.shape().n;
  if (W.shape().c * W.shape().plane() != F) {
    throw ConfigError(label + ": weights expect " + std::to_string(W.shape().c) + " features, input has " +
                      std::to_string(F));
  }
  Tensor4<T> out({N, G, 1, 1});
  for (std::size_t n = 0; n < N; ++n) {
    const T* xi = in.data() + n * F;
    for (std::size_t o = 0; o < G; ++o) {
      const T* wr = W.data() + o * F;
      T acc = b.valid() ? t.value(b)[o] : T(0);
      for (std::size_t f = 0; f < F; ++f) acc += wr[f] * xi[f];
      out[n * G + o] = acc;
    }
  }
  return t.record(std::move(out), label, {x, w, b}, [x, w, b, N, F, G](Tape<T>& tp, const Tensor4<T>& dy) {
    const Tensor4<T>& in = tp.value(x);
    const Tensor4<T>& W = tp.value(w);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t o = 0; o < G; ++o) {
        const T g = dy[n * G + o];
        if (tp.needs_grad(x)) {
          T* dx = tp.grad_buffer(x).data() + n * F;
          const T* wr = W.data() + o * F;
          for (std::size_t f = 0; f < F; ++f) dx[f] += g * wr[f];
        }
        if (tp.needs_grad(w)) {
          T* dw = tp.grad_buffer(w).data() + o * F;
          const T* xi = in.data() + n * F;
          for (std::size_t f = 0; f < F; ++f) dw[f] += g * xi[f];
        }
        if (tp.needs_grad(b)) tp.grad_buffer(b)[o] += g;
      }
    }
  });
}

/// x[n, c, :, :] * s[n, c]; s has shape N x C x 1 x 1.
template <class T>
Var channel_scale(Tape<T>& t, Var x, Var s, const std::string& label = "channel_scale") {
  const Tensor4<T>& in = t.value(x);
  const Tensor4<T>& sc = t.value(s);
  const auto sh = in.shape();
  if (!(sc.shape() == Shape4{sh.n, sh.c, 1, 1})) {
    throw ConfigError(label + ": scale shape " + sc.shape().str() + " does not match " + sh.str());
  }
  Tensor4<T> out(sh);
  for (std::size_t n = 0; n < sh.n; ++n) {
    for (std::size_t c = 0; c < sh.c; ++c) {
      const T k = sc.at(n, c, 0, 0);
      const T* p = in.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < sh.plane(); ++i) o[i] = k * p[i];
    }
  }
  return t.record(std::move(out), label, {x, s}, [x, s](Tape<T>& tp, const Tensor4<T>& dy) {
    const Tensor4<T>& in = tp.value(x);
    const Tensor4<T>& sc = tp.value(s);
    const auto sh = in.shape();
    for (std::size_t n = 0; n < sh.n; ++n) {
      for (std::size_t c = 0; c < sh.c; ++c) {
        const T* d = dy.plane(n, c);
        if (tp.needs_grad(x)) {
          T* dx = tp.grad_buffer(x).plane(n, c);
          const T k = sc.at(n, c, 0, 0);
          for (std::size_t i = 0; i < sh.plane(); ++i) dx[i] += k * d[i];
        }
        if (tp.needs_grad(s)) {
          const T* p = in.plane(n, c);
          T acc = T(0);
          for (std::size_t i = 0; i < sh.plane(); ++i) acc += d[i] * p[i];
          tp.grad_buffer(s).at(n, c, 0, 0) += acc;
        }
      }
    }
  });
}

/// a + b; a single-channel b is broadcast over every channel of a.
template <class T>
Var add(Tape<T>& t, Var a, Var b, const std::string& label = "add") {
  const Tensor4<T>& x = t.value(a);
  const Tensor4<T>& y = t.value(b);
  const auto sa = x.shape();
  const auto sb = y.shape();
  const bool broadcast = sb.c == 1 && sa.c != 1 && sb.n == sa.n && sb.h == sa.h && sb.w == sa.w;
  if (!broadcast && !(sa == sb)) throw ConfigError(label + ": shape mismatch " + sa.str() + " vs " + sb.str());
  Tensor4<T> out = x;
  for (std::size_t n = 0; n < sa.n; ++n) {
    for (std::size_t c = 0; c < sa.c; ++c) {
      const T* q = y.plane(n, broadcast ? 0 : c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < sa.plane(); ++i) o[i] += q[i];
    }
  }
  return t.record(std::move(out), label, {a, b}, [a, b, broadcast](Tape<T>& tp, const Tensor4<T>& dy) {
    if (tp.needs_grad(a)) tp.grad_buffer(a) += dy;
    if (tp.needs_grad(b)) {
      Tensor4<T>& db = tp.grad_buffer(b);
      const auto s = dy.shape();
      for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
          const T* d = dy.plane(n, c);
          T* o = db.plane(n, broadcast ? 0 : c);
          for (std::size_t i = 0; i < s.plane(); ++i) o[i] += d[i];
        }
      }
    }
  });
}

/// Scales column i of an (E, I, 1, 1) weight tensor by the constant mask[i].
template <class T>
Var mask_input_channels(Tape<T>& t, Var w, std::vector<T> mask, const std::string& label = "mask") {
  const Tensor4<T>& W = t.value(w);
  const auto s = W.shape();
  if (mask.size() != s.c) throw ConfigError(label + ": mask length != input channels");
  Tensor4<T> out(s);
  for (std::size_t e = 0; e < s.n; ++e)
    for (std::size_t i = 0; i < s.c; ++i)
      for (std::size_t k = 0; k < s.plane(); ++k) {
        const std::size_t idx = (e * s.c + i) * s.plane() + k;
        out[idx] = W[idx] * mask[i];
      }
  return t.record(std::move(out), label, {w}, [w, mask = std::move(mask)](Tape<T>& tp, const Tensor4<T>& dy) {
    Tensor4<T>& dw = tp.grad_buffer(w);
    const auto s = dw.shape();
    for (std::size_t e = 0; e < s.n; ++e)
      for (std::size_t i = 0; i < s.c; ++i)
        for (std::size_t k = 0; k < s.plane(); ++k) {
          const std::size_t idx = (e * s.c + i) * s.plane() + k;
          dw[idx] += dy[idx] * mask[i];
        }
  });
}

/// Mean squared error against a constant target; returns a 1x1x1x1 loss node.
template <class T>
Var mse_loss(Tape<T>& t, Var pred, const Tensor4<T>& target, const std::string& label = "mse_loss") {
  const Tensor4<T>& p = t.value(pred);
  p.require_same_shape(target, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double n = static_cast<double>(p.size());
  auto tgt = std::make_shared<Tensor4<T>>(target);
  return t.record(Tensor4<T>::scalar(static_cast<T>(acc / n)), label, {pred},
                  [pred, tgt, n](Tape<T>& tp, const Tensor4<T>& dy) {
                    const Tensor4<T>& p = tp.value(pred);
                    Tensor4<T>& dp = tp.grad_buffer(pred);
                    const T k = static_cast<T>(2.0 / n) * dy[0];
                    for (std::size_t i = 0; i < p.size(); ++i) dp[i] += k * (p[i] - (*tgt)[i]);
                  });
}

/// sum(x * r) for a constant r; the scalar probe used by gradient checks.
template <class T>
Var weighted_sum(Tape<T>& t, Var x, const Tensor4<T>& r, const std::string& label = "weighted_sum") {
  const Tensor4<T>& v = t.value(x);
  v.require_same_shape(r, "weighted_sum");
  T acc = T(0);
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i] * r[i];
  auto rr = std::make_shared<Tensor4<T>>(r);
  return t.record(Tensor4<T>::scalar(acc), label, {x}, [x, rr](Tape<T>& tp, const Tensor4<T>& dy) {
    Tensor4<T>& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[0] * (*rr)[i];
  });
}

/// Plain mean squared error between two equally shaped tensors.
template <class T>
double mse_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  pred.require_same_shape(target, "mse_loss");
  if (pred.size() == 0) throw ConfigError("mse_loss of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace apsusct::nn
