#pragma once

// Plain (non-differentiable) convolution kernels. The differentiable ops in
// ops.hpp are thin wrappers that pair these forward and adjoint routines.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>

#include "apsusct/errors.hpp"
#include "apsusct/tensor.hpp"

namespace apsusct::nn {

/// Per-axis stride and zero padding. `out_pad_*` only applies to transposed convolution.
struct ConvGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t out_pad_h = 0;
  std::size_t out_pad_w = 0;

  static ConvGeometry uniform(std::size_t stride, std::size_t padding) {
    return {stride, stride, padding, padding, 0, 0};
  }
  bool operator==(const ConvGeometry&) const = default;
};

namespace detail {

// Output positions o in [lo, hi] whose input index o*stride + offset falls in [0, in_len).
inline bool tap_range(std::ptrdiff_t out_len, std::ptrdiff_t in_len, std::ptrdiff_t stride, std::ptrdiff_t offset,
                      std::ptrdiff_t& lo, std::ptrdiff_t& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  const std::ptrdiff_t last = in_len - 1 - offset;
  if (last < 0) return false;
  hi = std::min(last / stride, out_len - 1);
  return lo <= hi;
}

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* axis) {
  if (s == 0) throw ConfigError("convolution stride must be >= 1");
  const std::ptrdiff_t span = static_cast<std::ptrdiff_t>(in + 2 * p) - static_cast<std::ptrdiff_t>(k);
  if (span < 0) {
    throw ConfigError(std::string("convolution kernel larger than padded input along ") + axis);
  }
  if (span % static_cast<std::ptrdiff_t>(s) != 0) {
    throw ConfigError(std::string("non-integer convolution output extent along ") + axis + " (in=" +
                      std::to_string(in) + ", k=" + std::to_string(k) + ", s=" + std::to_string(s) +
                      ", p=" + std::to_string(p) + ")");
  }
  return static_cast<std::size_t>(span) / s + 1;
}

// out[n, oc] += sum_ic w[oc, ic] (*) in[n, ic]; output shape fixed by the caller.
template <class T>
void correlate_accumulate(const Tensor4<T>& in, const Tensor4<T>& w, const ConvGeometry& g, Tensor4<T>& out) {
  const auto& is = in.shape();
  const auto& ws = w.shape();
  const auto& os = out.shape();
  const auto H = static_cast<std::ptrdiff_t>(is.h), W = static_cast<std::ptrdiff_t>(is.w);
  const auto OH = static_cast<std::ptrdiff_t>(os.h), OW = static_cast<std::ptrdiff_t>(os.w);
  const auto sh = static_cast<std::ptrdiff_t>(g.stride_h), sw = static_cast<std::ptrdiff_t>(g.stride_w);
  const auto ph = static_cast<std::ptrdiff_t>(g.pad_h), pw = static_cast<std::ptrdiff_t>(g.pad_w);
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t oc = 0; oc < os.c; ++oc) {
      T* op = out.plane(n, oc);
      for (std::size_t ic = 0; ic < is.c; ++ic) {
        const T* ip = in.plane(n, ic);
        for (std::size_t kh = 0; kh < ws.h; ++kh) {
          std::ptrdiff_t oh_lo, oh_hi;
          if (!tap_range(OH, H, sh, static_cast<std::ptrdiff_t>(kh) - ph, oh_lo, oh_hi)) continue;
          for (std::size_t kw = 0; kw < ws.w; ++kw) {
            std::ptrdiff_t ow_lo, ow_hi;
            if (!tap_range(OW, W, sw, static_cast<std::ptrdiff_t>(kw) - pw, ow_lo, ow_hi)) continue;
            const T wv = w.at(oc, ic, kh, kw);
            if (wv == T(0)) continue;
            const std::ptrdiff_t ioff = static_cast<std::ptrdiff_t>(kw) - pw;
            for (std::ptrdiff_t oh = oh_lo; oh <= oh_hi; ++oh) {
              T* orow = op + oh * OW;
              const T* irow = ip + (oh * sh + static_cast<std::ptrdiff_t>(kh) - ph) * W;
              if (sw == 1) {
                for (std::ptrdiff_t ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wv * irow[ow + ioff];
              } else {
                for (std::ptrdiff_t ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wv * irow[ow * sw + ioff];
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of correlate_accumulate with respect to its input: din += W^T dout.
template <class T>
void correlate_adjoint_input(const Tensor4<T>& dout, const Tensor4<T>& w, const ConvGeometry& g, Tensor4<T>& din) {
  const auto& is = din.shape();
  const auto& ws = w.shape();
  const auto& os = dout.shape();
  const auto H = static_cast<std::ptrdiff_t>(is.h), W = static_cast<std::ptrdiff_t>(is.w);
  const auto OH = static_cast<std::ptrdiff_t>(os.h), OW = static_cast<std::ptrdiff_t>(os.w);
  const auto sh = static_cast<std::ptrdiff_t>(g.stride_h), sw = static_cast<std::ptrdiff_t>(g.stride_w);
  const auto ph = static_cast<std::ptrdiff_t>(g.pad_h), pw = static_cast<std::ptrdiff_t>(g.pad_w);
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t ic = 0; ic < is.c; ++ic) {
      T* ip = din.plane(n, ic);
      for (std::size_t oc = 0; oc < os.c; ++oc) {
        const T* op = dout.plane(n, oc);
        for (std::size_t kh = 0; kh < ws.h; ++kh) {
          std::ptrdiff_t oh_lo, oh_hi;
          if (!tap_range(OH, H, sh, static_cast<std::ptrdiff_t>(kh) - ph, oh_lo, oh_hi)) continue;
          for (std::size_t kw = 0; kw < ws.w; ++kw) {
            std::ptrdiff_t ow_lo, ow_hi;
            if (!tap_range(OW, W, sw, static_cast<std::ptrdiff_t>(kw) - pw, ow_lo, ow_hi)) continue;
            const T wv = w.at(oc, ic, kh, kw);
            if (wv == T(0)) continue;
            const std::ptrdiff_t ioff = static_cast<std::ptrdiff_t>(kw) - pw;
            for (std::ptrdiff_t oh = oh_lo; oh <= oh_hi; ++oh) {
              const T* orow = op + oh * OW;
              T* irow = ip + (oh * sh + static_cast<std::ptrdiff_t>(kh) - ph) * W;
              if (sw == 1) {
                for (std::ptrdiff_t ow = ow_lo; ow <= ow_hi; ++ow) irow[ow + ioff] += wv * orow[ow];
              } else {
                for (std::ptrdiff_t ow = ow_lo; ow <= ow_hi; ++ow) irow[ow * sw + ioff] += wv * orow[ow];
              }
            }
          }
        }
      }
    }
  }
}

// dw[oc, ic] += sum over batch and positions of dout[n, oc] * in[n, ic] (shifted).
template <class T>
void correlate_adjoint_weight(const Tensor4<T>& in, const Tensor4<T>& dout, const ConvGeometry& g, Tensor4<T>& dw) {
  const auto& is = in.shape();
  const auto& ws = dw.shape();
  const auto& os = dout.shape();
  const auto H = static_cast<std::ptrdiff_t>(is.h), W = static_cast<std::ptrdiff_t>(is.w);
  const auto OH = static_cast<std::ptrdiff_t>(os.h), OW = static_cast<std::ptrdiff_t>(os.w);
  const auto sh = static_cast<std::ptrdiff_t>(g.stride_h), sw = static_cast<std::ptrdiff_t>(g.stride_w);
  const auto ph = static_cast<std::ptrdiff_t>(g.pad_h), pw = static_cast<std::ptrdiff_t>(g.pad_w);
  for (std::size_t oc = 0; oc < ws.n; ++oc) {
    for (std::size_t ic = 0; ic < ws.c; ++ic) {
      for (std::size_t kh = 0; kh < ws.h; ++kh) {
        std::ptrdiff_t oh_lo, oh_hi;
        if (!tap_range(OH, H, sh, static_cast<std::ptrdiff_t>(kh) - ph, oh_lo, oh_hi)) continue;
        for (std::size_t kw = 0; kw < ws.w; ++kw) {
          std::ptrdiff_t ow_lo, ow_hi;
          if (!tap_range(OW, W, sw, static_cast<std::ptrdiff_t>(kw) - pw, ow_lo, ow_hi)) continue;
          const std::ptrdiff_t ioff = static_cast<std::ptrdiff_t>(kw) - pw;
          T acc = T(0);
          for (std::size_t n = 0; n < os.n; ++n) {
            const T* op = dout.plane(n, oc);
            const T* ip = in.plane(n, ic);
            for (std::ptrdiff_t oh = oh_lo; oh <= oh_hi; ++oh) {
              const T* orow = op + oh * OW;
              const T* irow = ip + (oh * sh + static_cast<std::ptrdiff_t>(kh) - ph) * W;
              for (std::ptrdiff_t ow = ow_lo; ow <= ow_hi; ++ow) acc += orow[ow] * irow[ow * sw + ioff];
            }
          }
          dw.at(oc, ic, kh, kw) += acc;
        }
      }
    }
  }
}

template <class T>
void add_channel_bias(Tensor4<T>& out, std::span<const T> bias) {
  if (bias.empty()) return;
  const auto& s = out.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      T* p = out.plane(n, c);
      std::fill(p, p + s.plane(), bias[c]);
    }
  }
}

template <class T>
void check_bias(std::span<const T> bias, std::size_t channels, const char* op) {
  if (!bias.empty() && bias.size() != channels) {
    throw ConfigError(std::string(op) + ": bias length " + std::to_string(bias.size()) + " != channel count " +
                      std::to_string(channels));
  }
}

}  // namespace detail

/// Output shape of a cross-correlation; rejects mismatched channels and non-integer extents.
inline Shape4 conv2d_output_shape(const Shape4& in, const Shape4& w, const ConvGeometry& g) {
  if (w.c != in.c) {
    throw ConfigError("conv2d: input has " + std::to_string(in.c) + " channels, weights expect " +
                      std::to_string(w.c));
  }
  return {in.n, w.n, detail::conv_extent(in.h, w.h, g.stride_h, g.pad_h, "height"),
          detail::conv_extent(in.w, w.w, g.stride_w, g.pad_w, "width")};
}

/// Output shape of a transposed convolution: s*(d-1) + k - 2p + output_padding per axis.
inline Shape4 conv_transpose2d_output_shape(const Shape4& in, const Shape4& w, const ConvGeometry& g) {
  if (w.n != in.c) {
    throw ConfigError("conv_transpose2d: input has " + std::to_string(in.c) + " channels, weights expect " +
                      std::to_string(w.n));
  }
  if (g.stride_h == 0 || g.stride_w == 0) throw ConfigError("conv_transpose2d: stride must be >= 1");
  auto extent = [](std::size_t d, std::size_t k, std::size_t s, std::size_t p, std::size_t op) {
    const std::ptrdiff_t e = static_cast<std::ptrdiff_t>(s * (d - 1) + k + op) - static_cast<std::ptrdiff_t>(2 * p);
    if (d == 0 || e < 1) throw ConfigError("conv_transpose2d: output extent < 1");
    return static_cast<std::size_t>(e);
  };
  return {in.n, w.c, extent(in.h, w.h, g.stride_h, g.pad_h, g.out_pad_h),
          extent(in.w, w.w, g.stride_w, g.pad_w, g.out_pad_w)};
}

/// Cross-correlation, weights laid out (out_ch, in_ch, kh, kw).
template <class T>
Tensor4<T> conv2d(const Tensor4<T>& input, const Tensor4<T>& weights, std::span<const T> bias,
                  const ConvGeometry& g) {
  const Shape4 os = conv2d_output_shape(input.shape(), weights.shape(), g);
  detail::check_bias(bias, os.c, "conv2d");
  Tensor4<T> out(os);
  detail::add_channel_bias(out, bias);
  detail::correlate_accumulate(input, weights, g, out);
  return out;
}

template <class T>
Tensor4<T> conv2d(const Tensor4<T>& input, const Tensor4<T>& weights, std::span<const T> bias, std::size_t stride,
                  std::size_t padding) {
  return conv2d(input, weights, bias, ConvGeometry::uniform(stride, padding));
}

/// Transposed convolution, weights laid out (in_ch, out_ch, kh, kw). With zero bias this is the
/// exact adjoint of conv2d using the same weight tensor.
template <class T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& input, const Tensor4<T>& weights, std::span<const T> bias,
                            const ConvGeometry& g) {
  const Shape4 os = conv_transpose2d_output_shape(input.shape(), weights.shape(), g);
  detail::check_bias(bias, os.c, "conv_transpose2d");
  Tensor4<T> out(os);
  detail::add_channel_bias(out, bias);
  detail::correlate_adjoint_input(input, weights, g, out);
  return out;
}

template <class T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& input, const Tensor4<T>& weights, std::span<const T> bias,
                            std::size_t stride, std::size_t padding) {
  return conv_transpose2d(input, weights, bias, ConvGeometry::uniform(stride, padding));
}

}  // namespace apsusct::nn
