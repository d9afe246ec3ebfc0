#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <vector>

#include "posebench/errors.hpp"
#include "posebench/nn/tensor.hpp"
#include "posebench/parallel.hpp"

namespace posebench::nn {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

namespace detail {

// Unrolls conv patches into a [C*KH*KW, OH*OW] matrix so the convolution
// becomes a single GEMM per sample.
template <typename T>
void im2col(const T* x, int C, int H, int W, int KH, int KW, int stride, int pad, int OH,
            int OW, T* col) {
  int r = 0;
  for (int c = 0; c < C; ++c) {
    const T* src = x + static_cast<std::size_t>(c) * H * W;
    for (int kh = 0; kh < KH; ++kh) {
      for (int kw = 0; kw < KW; ++kw, ++r) {
        T* dst = col + static_cast<std::size_t>(r) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + kh;
          T* row = dst + static_cast<std::size_t>(oh) * OW;
          if (ih < 0 || ih >= H) {
            std::fill(row, row + OW, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + kw;
            row[ow] = (iw >= 0 && iw < W) ? srow[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back onto the input image; adjoint of im2col.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int KH, int KW, int stride, int pad,
                int OH, int OW, T* x) {
  int r = 0;
  for (int c = 0; c < C; ++c) {
    T* dst = x + static_cast<std::size_t>(c) * H * W;
    for (int kh = 0; kh < KH; ++kh) {
      for (int kw = 0; kw < KW; ++kw, ++r) {
        const T* src = col + static_cast<std::size_t>(r) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= H) continue;
          T* drow = dst + static_cast<std::size_t>(ih) * W;
          const T* srow = src + static_cast<std::size_t>(oh) * OW;
          for (int ow = 0; ow < OW; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < W) drow[iw] += srow[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2d convolution, NCHW input, [out_channels, in_channels, KH, KW] weights,
// zero padding, no bias (the following normalization layer owns the shift).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride = 2, int pad = 1) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeMismatch("conv2d: expects NCHW input and OIKK weights");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W_in = x.dim(3);
  const int O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != C) throw ShapeMismatch("conv2d: input channel count does not match weights");
  if (stride < 1 || pad < 0) throw ShapeMismatch("conv2d: bad stride or padding");
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W_in + 2 * pad - KW) / stride + 1;
  if (OH <= 0 || OW <= 0) throw ShapeMismatch("conv2d: output would be empty");
  const int CKK = C * KH * KW;
  const int S = OH * OW;

  // Patch matrices are kept for the weight gradient.
  auto cols = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N) * CKK * S);
  Tensor<T> y = Tensor<T>::result({N, O, OH, OW}, {x, w});
  parallel_for(N, [&](std::int64_t n) {
    T* col = cols->data() + static_cast<std::size_t>(n) * CKK * S;
    detail::im2col(x.data() + static_cast<std::size_t>(n) * C * H * W_in, C, H, W_in, KH, KW,
                   stride, pad, OH, OW, col);
    CMapRM<T> wm(w.data(), O, CKK);
    CMapRM<T> cm(col, CKK, S);
    MapRM<T> ym(y.data() + static_cast<std::size_t>(n) * O * S, O, S);
    ym.noalias() = wm * cm;
  });

  if (y.requires_grad()) {
    y.set_pull([cols, N, C, H, W_in, O, KH, KW, stride, pad, OH, OW, CKK,
                S](typename Tensor<T>::Node& self) {
      Tensor<T> xp = self.parents[0];
      Tensor<T> wp = self.parents[1];
      if (wp.requires_grad()) {
        wp.node()->ensure_grad();
        MapRM<T> dw(wp.grad(), O, CKK);
        // Sample-ordered accumulation: the sum is identical for any worker
        // count because it never runs concurrently.
        for (int n = 0; n < N; ++n) {
          CMapRM<T> dy(self.grad.data() + static_cast<std::size_t>(n) * O * S, O, S);
          CMapRM<T> cm(cols->data() + static_cast<std::size_t>(n) * CKK * S, CKK, S);
          dw.noalias() += dy * cm.transpose();
        }
      }
      if (xp.requires_grad()) {
        xp.node()->ensure_grad();
        parallel_for(N, [&](std::int64_t n) {
          std::vector<T> dcol(static_cast<std::size_t>(CKK) * S);
          CMapRM<T> wm(wp.data(), O, CKK);
          CMapRM<T> dy(self.grad.data() + static_cast<std::size_t>(n) * O * S, O, S);
          MapRM<T> dc(dcol.data(), CKK, S);
          dc.noalias() = wm.transpose() * dy;
          detail::col2im_add(dcol.data(), C, H, W_in, KH, KW, stride, pad, OH, OW,
                             xp.grad() + static_cast<std::size_t>(n) * C * H * W_in);
        });
      }
    });
  }
  return y;
}

// Group normalization with per-channel affine parameters.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     int groups, double eps = 1e-5) {
  if (x.rank() != 4) throw ShapeMismatch("group_norm: expects NCHW input");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (groups < 1 || C % groups != 0)
    throw ShapeMismatch("group_norm: channel count must be divisible by group count");
  if (gamma.numel() != C || beta.numel() != C)
    throw ShapeMismatch("group_norm: affine parameters must have one entry per channel");
  const int gsize = C / groups;
  const std::int64_t hw = static_cast<std::int64_t>(H) * W;
  const std::int64_t m = gsize * hw;  // elements per normalization group

  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * groups);
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * groups);
  Tensor<T> y = Tensor<T>::result({N, C, H, W}, {x, gamma, beta});

  for (int n = 0; n < N; ++n) {
    for (int g = 0; g < groups; ++g) {
      const T* xs = x.data() + (static_cast<std::size_t>(n) * C + g * gsize) * hw;
      double s = 0.0, s2 = 0.0;
      for (std::int64_t i = 0; i < m; ++i) {
        const double v = static_cast<double>(xs[i]);
        s += v;
        s2 += v * v;
      }
      const double mu = s / static_cast<double>(m);
      const double var = std::max(0.0, s2 / static_cast<double>(m) - mu * mu);
      const double is = 1.0 / std::sqrt(var + eps);
      (*mean)[static_cast<std::size_t>(n) * groups + g] = mu;
      (*invstd)[static_cast<std::size_t>(n) * groups + g] = is;
      T* ys = y.data() + (static_cast<std::size_t>(n) * C + g * gsize) * hw;
      for (int cc = 0; cc < gsize; ++cc) {
        const int c = g * gsize + cc;
        const double ga = static_cast<double>(gamma.data()[c]);
        const double be = static_cast<double>(beta.data()[c]);
        for (std::int64_t i = 0; i < hw; ++i) {
          const double xhat = (static_cast<double>(xs[cc * hw + i]) - mu) * is;
          ys[cc * hw + i] = static_cast<T>(ga * xhat + be);
        }
      }
    }
  }

  if (y.requires_grad()) {
    y.set_pull([mean, invstd, N, C, H, W, groups, gsize, hw, m](typename Tensor<T>::Node& self) {
      Tensor<T> xp = self.parents[0];
      Tensor<T> gp = self.parents[1];
      Tensor<T> bp = self.parents[2];
      const bool need_dx = xp.requires_grad();
      const bool need_dg = gp.requires_grad();
      const bool need_db = bp.requires_grad();
      if (need_dx) xp.node()->ensure_grad();
      if (need_dg) gp.node()->ensure_grad();
      if (need_db) bp.node()->ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
          const double mu = (*mean)[static_cast<std::size_t>(n) * groups + g];
          const double is = (*invstd)[static_cast<std::size_t>(n) * groups + g];
          const T* xs = xp.data() + (static_cast<std::size_t>(n) * C + g * gsize) * hw;
          const T* dys = self.grad.data() + (static_cast<std::size_t>(n) * C + g * gsize) * hw;
          // First pass: affine gradients and the two reductions the input
          // gradient needs.
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int cc = 0; cc < gsize; ++cc) {
            const int c = g * gsize + cc;
            const double ga = static_cast<double>(gp.data()[c]);
            double dgc = 0.0, dbc = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) {
              const double xhat = (static_cast<double>(xs[cc * hw + i]) - mu) * is;
              const double dy = static_cast<double>(dys[cc * hw + i]);
              dgc += dy * xhat;
              dbc += dy;
              const double dxhat = dy * ga;
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            if (need_dg) gp.grad()[c] += static_cast<T>(dgc);
            if (need_db) bp.grad()[c] += static_cast<T>(dbc);
          }
          if (!need_dx) continue;
          T* dxs = xp.grad() + (static_cast<std::size_t>(n) * C + g * gsize) * hw;
          const double inv_m = 1.0 / static_cast<double>(m);
          for (int cc = 0; cc < gsize; ++cc) {
            const int c = g * gsize + cc;
            const double ga = static_cast<double>(gp.data()[c]);
            for (std::int64_t i = 0; i < hw; ++i) {
              const double xhat = (static_cast<double>(xs[cc * hw + i]) - mu) * is;
              const double dxhat = static_cast<double>(dys[cc * hw + i]) * ga;
              dxs[cc * hw + i] += static_cast<T>(
                  is * (dxhat - inv_m * (sum_dxhat + xhat * sum_dxhat_xhat)));
            }
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::result(x.shape(), {x});
  const std::int64_t n = x.numel();
  for (std::int64_t i = 0; i < n; ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  if (y.requires_grad()) {
    y.set_pull([n](typename Tensor<T>::Node& self) {
      Tensor<T> xp = self.parents[0];
      if (!xp.requires_grad()) return;
      xp.node()->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        if (xp.data()[i] > T(0)) xp.grad()[i] += self.grad[i];
    });
  }
  return y;
}

// y = x * w^T + b with x [N, D_in], w [D_out, D_in], b [D_out].
template <typename T>
Tensor<T> fully_connected(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw ShapeMismatch("fully_connected: expects 2d input, 2d weights, 1d bias");
  const int N = x.dim(0), Din = x.dim(1), Dout = w.dim(0);
  if (w.dim(1) != Din || b.dim(0) != Dout)
    throw ShapeMismatch("fully_connected: dimension mismatch");
  Tensor<T> y = Tensor<T>::result({N, Dout}, {x, w, b});
  CMapRM<T> xm(x.data(), N, Din), wm(w.data(), Dout, Din);
  MapRM<T> ym(y.data(), N, Dout);
  ym.noalias() = xm * wm.transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < Dout; ++o) y.data()[static_cast<std::size_t>(n) * Dout + o] += b.data()[o];

  if (y.requires_grad()) {
    y.set_pull([N, Din, Dout](typename Tensor<T>::Node& self) {
      Tensor<T> xp = self.parents[0];
      Tensor<T> wp = self.parents[1];
      Tensor<T> bp = self.parents[2];
      CMapRM<T> dy(self.grad.data(), N, Dout);
      if (xp.requires_grad()) {
        xp.node()->ensure_grad();
        MapRM<T> dx(xp.grad(), N, Din);
        CMapRM<T> wm(wp.data(), Dout, Din);
        dx.noalias() += dy * wm;
      }
      if (wp.requires_grad()) {
        wp.node()->ensure_grad();
        MapRM<T> dw(wp.grad(), Dout, Din);
        CMapRM<T> xm(xp.data(), N, Din);
        dw.noalias() += dy.transpose() * xm;
      }
      if (bp.requires_grad()) {
        bp.node()->ensure_grad();
        for (int n = 0; n < N; ++n)
          for (int o = 0; o < Dout; ++o)
            bp.grad()[o] += self.grad[static_cast<std::size_t>(n) * Dout + o];
      }
    });
  }
  return y;
}

// Same element order, new shape.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) throw ShapeMismatch("reshape: element count mismatch");
  Tensor<T> y = Tensor<T>::result(std::move(shape), {x});
  std::copy(x.data(), x.data() + x.numel(), y.data());
  if (y.requires_grad()) {
    y.set_pull([](typename Tensor<T>::Node& self) {
      Tensor<T> xp = self.parents[0];
      if (!xp.requires_grad()) return;
      xp.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xp.grad()[i] += self.grad[i];
    });
  }
  return y;
}

// [N, ...] -> [N, prod(...)].
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeMismatch("flatten: needs a batch dimension");
  const int N = x.dim(0);
  return reshape(x, {N, static_cast<int>(x.numel() / N)});
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("add: shape mismatch");
  Tensor<T> y = Tensor<T>::result(a.shape(), {a, b});
  for (std::int64_t i = 0; i < a.numel(); ++i) y.data()[i] = a.data()[i] + b.data()[i];
  if (y.requires_grad()) {
    y.set_pull([](typename Tensor<T>::Node& self) {
      for (int p = 0; p < 2; ++p) {
        Tensor<T> pp = self.parents[p];
        if (!pp.requires_grad()) continue;
        pp.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pp.grad()[i] += self.grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("mul: shape mismatch");
  Tensor<T> y = Tensor<T>::result(a.shape(), {a, b});
  for (std::int64_t i = 0; i < a.numel(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  if (y.requires_grad()) {
    y.set_pull([](typename Tensor<T>::Node& self) {
      Tensor<T> ap = self.parents[0];
      Tensor<T> bp = self.parents[1];
      if (ap.requires_grad()) {
        ap.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          ap.grad()[i] += self.grad[i] * bp.data()[i];
      }
      if (bp.requires_grad()) {
        bp.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          bp.grad()[i] += self.grad[i] * ap.data()[i];
      }
    });
  }
  return y;
}

// Fixed-weight projection to a scalar; the workhorse reduction for gradient
// probes with a non-uniform cotangent.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights) {
  if (static_cast<std::int64_t>(weights.size()) != x.numel())
    throw ShapeMismatch("weighted_sum: weight count mismatch");
  Tensor<T> y = Tensor<T>::result({1}, {x});
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i)
    acc += static_cast<double>(weights[i]) * static_cast<double>(x.data()[i]);
  y.data()[0] = static_cast<T>(acc);
  if (y.requires_grad()) {
    auto wk = std::make_shared<std::vector<T>>(weights);
    y.set_pull([wk](typename Tensor<T>::Node& self) {
      Tensor<T> xp = self.parents[0];
      if (!xp.requires_grad()) return;
      xp.node()->ensure_grad();
      for (std::size_t i = 0; i < wk->size(); ++i) xp.grad()[i] += self.grad[0] * (*wk)[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, double s) {
  Tensor<T> y = Tensor<T>::result(a.shape(), {a});
  for (std::int64_t i = 0; i < a.numel(); ++i) y.data()[i] = static_cast<T>(a.data()[i] * s);
  if (y.requires_grad()) {
    y.set_pull([s](typename Tensor<T>::Node& self) {
      Tensor<T> ap = self.parents[0];
      if (!ap.requires_grad()) return;
      ap.node()->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        ap.grad()[i] += static_cast<T>(self.grad[i] * s);
    });
  }
  return y;
}

// Mean absolute difference over all elements.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("l1_loss: shape mismatch");
  Tensor<T> y = Tensor<T>::result({1}, {a, b});
  const std::int64_t n = a.numel();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i)
    acc += std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
  y.data()[0] = static_cast<T>(acc / static_cast<double>(n));
  if (y.requires_grad()) {
    y.set_pull([n](typename Tensor<T>::Node& self) {
      Tensor<T> ap = self.parents[0];
      Tensor<T> bp = self.parents[1];
      const double g = static_cast<double>(self.grad[0]) / static_cast<double>(n);
      const bool da = ap.requires_grad(), db = bp.requires_grad();
      if (da) ap.node()->ensure_grad();
      if (db) bp.node()->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(ap.data()[i]) - static_cast<double>(bp.data()[i]);
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        if (da) ap.grad()[i] += static_cast<T>(g * s);
        if (db) bp.grad()[i] -= static_cast<T>(g * s);
      }
    });
  }
  return y;
}

// Mean absolute difference over foreground pixels, all channels. mask is
// [N, H, W] over the pixels of [N, C, H, W] inputs.
template <typename T>
Tensor<T> l1_loss_masked(const Tensor<T>& a, const Tensor<T>& b, const std::vector<T>& mask) {
  if (a.shape() != b.shape()) throw ShapeMismatch("l1_loss_masked: shape mismatch");
  if (a.rank() != 4) throw ShapeMismatch("l1_loss_masked: expects NCHW input");
  const int N = a.dim(0), C = a.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(a.dim(2)) * a.dim(3);
  if (static_cast<std::int64_t>(mask.size()) != N * hw)
    throw ShapeMismatch("l1_loss_masked: mask must have one entry per pixel");
  double wsum = 0.0;
  for (const T& m : mask) wsum += static_cast<double>(m);
  if (wsum <= 0.0) throw EmptyMask("l1_loss_masked: mask selects no pixels");
  const double denom = wsum * C;

  Tensor<T> y = Tensor<T>::result({1}, {a, b});
  double acc = 0.0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < hw; ++i) {
        const std::size_t idx = (static_cast<std::size_t>(n) * C + c) * hw + i;
        const double m = static_cast<double>(mask[static_cast<std::size_t>(n) * hw + i]);
        acc += m * std::abs(static_cast<double>(a.data()[idx]) -
                            static_cast<double>(b.data()[idx]));
      }
  y.data()[0] = static_cast<T>(acc / denom);
  if (y.requires_grad()) {
    auto mk = std::make_shared<std::vector<T>>(mask);
    y.set_pull([mk, N, C, hw, denom](typename Tensor<T>::Node& self) {
      Tensor<T> ap = self.parents[0];
      Tensor<T> bp = self.parents[1];
      const double g = static_cast<double>(self.grad[0]) / denom;
      const bool da = ap.requires_grad(), db = bp.requires_grad();
      if (da) ap.node()->ensure_grad();
      if (db) bp.node()->ensure_grad();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          for (std::int64_t i = 0; i < hw; ++i) {
            const std::size_t idx = (static_cast<std::size_t>(n) * C + c) * hw + i;
            const double m = static_cast<double>((*mk)[static_cast<std::size_t>(n) * hw + i]);
            if (m == 0.0) continue;
            const double d =
                static_cast<double>(ap.data()[idx]) - static_cast<double>(bp.data()[idx]);
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (da) ap.grad()[idx] += static_cast<T>(g * m * s);
            if (db) bp.grad()[idx] -= static_cast<T>(g * m * s);
          }
    });
  }
  return y;
}

// Per-pixel softmax cross entropy over channel logits, averaged over pixels
// with non-zero mask weight. logits [N, K, H, W]; labels and mask [N*H*W]
// in row-major pixel order.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                                const std::vector<T>& mask) {
  if (logits.rank() != 4) throw ShapeMismatch("softmax_cross_entropy: expects NKHW logits");
  const int N = logits.dim(0), K = logits.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(logits.dim(2)) * logits.dim(3);
  if (static_cast<std::int64_t>(labels.size()) != N * hw ||
      static_cast<std::int64_t>(mask.size()) != N * hw)
    throw ShapeMismatch("softmax_cross_entropy: labels and mask must have one entry per pixel");
  double wsum = 0.0;
  for (const T& m : mask) wsum += static_cast<double>(m);
  if (wsum <= 0.0) throw EmptyMask("softmax_cross_entropy: mask selects no pixels");

  Tensor<T> y = Tensor<T>::result({1}, {logits});
  double acc = 0.0;
  for (int n = 0; n < N; ++n) {
    const T* base = logits.data() + static_cast<std::size_t>(n) * K * hw;
    for (std::int64_t i = 0; i < hw; ++i) {
      const double m = static_cast<double>(mask[static_cast<std::size_t>(n) * hw + i]);
      if (m == 0.0) continue;
      const int lab = labels[static_cast<std::size_t>(n) * hw + i];
      if (lab < 0 || lab >= K)
        throw DegenerateInput("softmax_cross_entropy: label outside channel range");
      double mx = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k)
        mx = std::max(mx, static_cast<double>(base[k * hw + i]));
      double lse = 0.0;
      for (int k = 0; k < K; ++k) lse += std::exp(static_cast<double>(base[k * hw + i]) - mx);
      lse = mx + std::log(lse);
      acc += m * (lse - static_cast<double>(base[lab * hw + i]));
    }
  }
  y.data()[0] = static_cast<T>(acc / wsum);

  if (y.requires_grad()) {
    auto lb = std::make_shared<std::vector<int>>(labels);
    auto mk = std::make_shared<std::vector<T>>(mask);
    y.set_pull([lb, mk, N, K, hw, wsum](typename Tensor<T>::Node& self) {
      Tensor<T> lp = self.parents[0];
      if (!lp.requires_grad()) return;
      lp.node()->ensure_grad();
      const double g = static_cast<double>(self.grad[0]) / wsum;
      for (int n = 0; n < N; ++n) {
        const T* base = lp.data() + static_cast<std::size_t>(n) * K * hw;
        T* dbase = lp.grad() + static_cast<std::size_t>(n) * K * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double m = static_cast<double>((*mk)[static_cast<std::size_t>(n) * hw + i]);
          if (m == 0.0) continue;
          const int lab = (*lb)[static_cast<std::size_t>(n) * hw + i];
          double mx = -std::numeric_limits<double>::infinity();
          for (int k = 0; k < K; ++k)
            mx = std::max(mx, static_cast<double>(base[k * hw + i]));
          double z = 0.0;
          for (int k = 0; k < K; ++k) z += std::exp(static_cast<double>(base[k * hw + i]) - mx);
          for (int k = 0; k < K; ++k) {
            const double p = std::exp(static_cast<double>(base[k * hw + i]) - mx) / z;
            dbase[k * hw + i] += static_cast<T>(g * m * (p - (k == lab ? 1.0 : 0.0)));
          }
        }
      }
    });
  }
  return y;
}

}  // namespace posebench::nn
