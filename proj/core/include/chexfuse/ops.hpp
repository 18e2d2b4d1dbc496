#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "chexfuse/tensor.hpp"

// Layer primitives. Every op defines a forward map and the matching
// vector-Jacobian products; backward correctness is pinned by the finite
// difference checker in gradcheck.hpp. All loops run in a fixed order so a
// given input produces bit-identical output within a process.

namespace chexfuse {

namespace detail {

/// c[m,p] += a[m,k] * b[k,p], all row-major. The ikj order keeps the inner
/// loop contiguous in both b and c.
template <typename T>
void gemm_accum(const T* a, const T* b, T* c, int m, int k, int p) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * p;
    for (int kk = 0; kk < k; ++kk) {
      const T aik = arow[kk];
      const T* brow = b + static_cast<std::size_t>(kk) * p;
      for (int j = 0; j < p; ++j) crow[j] += aik * brow[j];
    }
  }
}

/// Unfold conv windows: col is [C*kh*kw, Hout*Wout] for one batch item.
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride,
            int pad, int hout, int wout, T* col) {
  const std::size_t patch = static_cast<std::size_t>(hout) * wout;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj, ++row) {
        T* out = col + row * patch;
        for (int oi = 0; oi < hout; ++oi) {
          const int ii = oi * stride - pad + ki;
          for (int oj = 0; oj < wout; ++oj) {
            const int jj = oj * stride - pad + kj;
            const bool inside = ii >= 0 && ii < h && jj >= 0 && jj < w;
            out[static_cast<std::size_t>(oi) * wout + oj] =
                inside ? plane[static_cast<std::size_t>(ii) * w + jj] : T(0);
          }
        }
      }
    }
  }
}

/// Scatter-add of an unfolded gradient back onto the input plane.
template <typename T>
void col2im_accum(const T* col, int c, int h, int w, int kh, int kw,
                  int stride, int pad, int hout, int wout, T* x) {
  const std::size_t patch = static_cast<std::size_t>(hout) * wout;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    T* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj, ++row) {
        const T* in = col + row * patch;
        for (int oi = 0; oi < hout; ++oi) {
          const int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          for (int oj = 0; oj < wout; ++oj) {
            const int jj = oj * stride - pad + kj;
            if (jj < 0 || jj >= w) continue;
            plane[static_cast<std::size_t>(ii) * w + jj] +=
                in[static_cast<std::size_t>(oi) * wout + oj];
          }
        }
      }
    }
  }
}

template <typename T>
void require_rank(const TensorT<T>& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " +
                     std::to_string(rank) + ", got shape " + t.shape_string());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, zero padding, no bias (batch norm follows it in
// the backbone).
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& weight, int stride,
                  int padding) {
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(weight, 4, "conv2d weight");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv2d: input channels " + std::to_string(cin) +
                     " do not match weight channels " +
                     std::to_string(weight.dim(1)));
  }
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  const int hout = (h + 2 * padding - kh) / stride + 1;
  const int wout = (w + 2 * padding - kw) / stride + 1;
  const int k = cin * kh * kw;
  const int patch = hout * wout;

  TensorT<T> y({n, cout, hout, wout});
  std::vector<T> col(static_cast<std::size_t>(k) * patch);
  for (int ni = 0; ni < n; ++ni) {
    detail::im2col(x.data() + x.offset4(ni, 0, 0, 0), cin, h, w, kh, kw,
                   stride, padding, hout, wout, col.data());
    detail::gemm_accum(weight.data(), col.data(),
                       y.data() + y.offset4(ni, 0, 0, 0), cout, k, patch);
  }
  return y;
}

template <typename T>
struct Conv2dGrads {
  TensorT<T> dx;
  TensorT<T> dweight;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& x, const TensorT<T>& weight,
                               int stride, int padding,
                               const TensorT<T>& gout) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int hout = gout.dim(2), wout = gout.dim(3);
  const int k = cin * kh * kw;
  const int patch = hout * wout;

  Conv2dGrads<T> grads{TensorT<T>(x.shape()), TensorT<T>(weight.shape())};
  std::vector<T> col(static_cast<std::size_t>(k) * patch);
  std::vector<T> dcol(static_cast<std::size_t>(k) * patch);
  for (int ni = 0; ni < n; ++ni) {
    const T* g = gout.data() + gout.offset4(ni, 0, 0, 0);
    detail::im2col(x.data() + x.offset4(ni, 0, 0, 0), cin, h, w, kh, kw,
                   stride, padding, hout, wout, col.data());

    // dW[o,k] += sum_j g[o,j] * col[k,j]
    for (int o = 0; o < cout; ++o) {
      const T* grow = g + static_cast<std::size_t>(o) * patch;
      T* dwrow = grads.dweight.data() + static_cast<std::size_t>(o) * k;
      for (int kk = 0; kk < k; ++kk) {
        const T* crow = col.data() + static_cast<std::size_t>(kk) * patch;
        T acc(0);
        for (int j = 0; j < patch; ++j) acc += grow[j] * crow[j];
        dwrow[kk] += acc;
      }
    }

    // dcol = W^T * g, then fold back onto dx.
    std::fill(dcol.begin(), dcol.end(), T(0));
    for (int o = 0; o < cout; ++o) {
      const T* wrow = weight.data() + static_cast<std::size_t>(o) * k;
      const T* grow = g + static_cast<std::size_t>(o) * patch;
      for (int kk = 0; kk < k; ++kk) {
        const T wok = wrow[kk];
        T* drow = dcol.data() + static_cast<std::size_t>(kk) * patch;
        for (int j = 0; j < patch; ++j) drow[j] += wok * grow[j];
      }
    }
    detail::col2im_accum(dcol.data(), cin, h, w, kh, kw, stride, padding, hout,
                         wout, grads.dx.data() + grads.dx.offset4(ni, 0, 0, 0));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// batch_norm: per-channel normalization over N*H*W with biased variance.
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormCache {
  TensorT<T> xhat;
  std::vector<T> invstd;  // per channel
  bool train = false;
};

template <typename T>
struct BatchNormGrads {
  TensorT<T> dx;
  TensorT<T> dgamma;
  TensorT<T> dbeta;
};

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                      const TensorT<T>& beta, TensorT<T>& running_mean,
                      TensorT<T>& running_var, bool train, T momentum,
                      T epsilon, BatchNormCache<T>* cache = nullptr) {
  detail::require_rank(x, 4, "batch_norm input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.numel() != static_cast<std::size_t>(c) ||
      beta.numel() != static_cast<std::size_t>(c)) {
    throw ShapeError("batch_norm: gamma/beta must have one entry per channel");
  }
  if (!(epsilon > T(0))) throw ShapeError("batch_norm: epsilon must be > 0");
  const std::size_t m = static_cast<std::size_t>(n) * h * w;
  if (m == 0) throw ShapeError("batch_norm: empty batch (N*H*W == 0)");

  TensorT<T> y(x.shape());
  if (cache) {
    cache->xhat = TensorT<T>(x.shape());
    cache->invstd.assign(static_cast<std::size_t>(c), T(0));
    cache->train = train;
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T mean, invstd;
    if (train) {
      double sum = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const T* p = x.data() + x.offset4(ni, ci, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = static_cast<T>(sum / static_cast<double>(m));
      double sq = 0.0;
      for (int ni = 0; ni < n; ++ni) {
        const T* p = x.data() + x.offset4(ni, ci, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = static_cast<double>(p[i]) - mean;
          sq += d * d;
        }
      }
      const T var = static_cast<T>(sq / static_cast<double>(m));
      invstd = T(1) / std::sqrt(var + epsilon);
      running_mean[ci] = (T(1) - momentum) * running_mean[ci] + momentum * mean;
      running_var[ci] = (T(1) - momentum) * running_var[ci] + momentum * var;
    } else {
      mean = running_mean[ci];
      invstd = T(1) / std::sqrt(running_var[ci] + epsilon);
    }
    const T g = gamma[ci], b = beta[ci];
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x.data() + x.offset4(ni, ci, 0, 0);
      T* q = y.data() + y.offset4(ni, ci, 0, 0);
      T* xh = cache ? cache->xhat.data() + cache->xhat.offset4(ni, ci, 0, 0)
                    : nullptr;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xhat = (p[i] - mean) * invstd;
        if (xh) xh[i] = xhat;
        q[i] = g * xhat + b;
      }
    }
    if (cache) cache->invstd[ci] = invstd;
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache,
                                      const TensorT<T>& gamma,
                                      const TensorT<T>& gout) {
  const TensorT<T>& xhat = cache.xhat;
  const int n = xhat.dim(0), c = xhat.dim(1), h = xhat.dim(2), w = xhat.dim(3);
  const std::size_t m = static_cast<std::size_t>(n) * h * w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  BatchNormGrads<T> grads{TensorT<T>(xhat.shape()), TensorT<T>({c}),
                          TensorT<T>({c})};
  for (int ci = 0; ci < c; ++ci) {
    double dg = 0.0, db = 0.0;
    for (int ni = 0; ni < n; ++ni) {
      const T* gp = gout.data() + gout.offset4(ni, ci, 0, 0);
      const T* xp = xhat.data() + xhat.offset4(ni, ci, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        dg += static_cast<double>(gp[i]) * xp[i];
        db += gp[i];
      }
    }
    grads.dgamma[ci] = static_cast<T>(dg);
    grads.dbeta[ci] = static_cast<T>(db);

    if (cache.train) {
      // dx = gamma*invstd/m * (m*g - xhat*sum(g*xhat) - sum(g))
      const T scale = gamma[ci] * cache.invstd[ci] / static_cast<T>(m);
      for (int ni = 0; ni < n; ++ni) {
        const T* gp = gout.data() + gout.offset4(ni, ci, 0, 0);
        const T* xp = xhat.data() + xhat.offset4(ni, ci, 0, 0);
        T* dp = grads.dx.data() + grads.dx.offset4(ni, ci, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          dp[i] = scale * (static_cast<T>(m) * gp[i] -
                           xp[i] * static_cast<T>(dg) - static_cast<T>(db));
        }
      }
    } else {
      const T scale = gamma[ci] * cache.invstd[ci];
      for (int ni = 0; ni < n; ++ni) {
        const T* gp = gout.data() + gout.offset4(ni, ci, 0, 0);
        T* dp = grads.dx.data() + grads.dx.offset4(ni, ci, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) dp[i] = scale * gp[i];
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

/// Subgradient at exactly 0 is 0.
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gout) {
  if (!x.same_shape(gout)) throw ShapeError("relu_backward: shape mismatch");
  TensorT<T> dx(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i)
    dx[i] = x[i] > T(0) ? gout[i] : T(0);
  return dx;
}

// ---------------------------------------------------------------------------
// pool: max / avg over non-padded windows.
// ---------------------------------------------------------------------------

enum class PoolKind { kMax, kAvg };

template <typename T>
struct PoolCache {
  std::vector<int> in_shape;
  PoolKind kind = PoolKind::kMax;
  int kh = 0, kw = 0, stride = 1, padding = 0;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
TensorT<T> pool(const TensorT<T>& x, PoolKind kind, int kh, int kw, int stride,
                int padding = 0, PoolCache<T>* cache = nullptr) {
  detail::require_rank(x, 4, "pool input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("pool: window larger than input");
  }
  if (stride < 1) throw ShapeError("pool: stride must be >= 1");
  const int hout = (h + 2 * padding - kh) / stride + 1;
  const int wout = (w + 2 * padding - kw) / stride + 1;

  TensorT<T> y({n, c, hout, wout});
  if (cache) {
    cache->in_shape = x.shape();
    cache->kind = kind;
    cache->kh = kh;
    cache->kw = kw;
    cache->stride = stride;
    cache->padding = padding;
    cache->argmax.assign(kind == PoolKind::kMax ? y.numel() : 0, 0);
  }
  std::size_t out_idx = 0;
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      for (int oi = 0; oi < hout; ++oi) {
        for (int oj = 0; oj < wout; ++oj, ++out_idx) {
          if (kind == PoolKind::kMax) {
            // Ties resolve to the first window element in row-major order;
            // padded positions never win (treated as -inf, i.e. skipped).
            bool seen = false;
            T best = T(0);
            std::size_t best_idx = 0;
            for (int ki = 0; ki < kh; ++ki) {
              const int ii = oi * stride - padding + ki;
              if (ii < 0 || ii >= h) continue;
              for (int kj = 0; kj < kw; ++kj) {
                const int jj = oj * stride - padding + kj;
                if (jj < 0 || jj >= w) continue;
                const T v = x.at4(ni, ci, ii, jj);
                if (!seen || v > best) {
                  seen = true;
                  best = v;
                  best_idx = x.offset4(ni, ci, ii, jj);
                }
              }
            }
            y[out_idx] = best;
            if (cache) cache->argmax[out_idx] = best_idx;
          } else {
            // Mean over the full kernel area; padded positions count as zero.
            double sum = 0.0;
            for (int ki = 0; ki < kh; ++ki) {
              const int ii = oi * stride - padding + ki;
              if (ii < 0 || ii >= h) continue;
              for (int kj = 0; kj < kw; ++kj) {
                const int jj = oj * stride - padding + kj;
                if (jj < 0 || jj >= w) continue;
                sum += x.at4(ni, ci, ii, jj);
              }
            }
            y[out_idx] = static_cast<T>(sum / (kh * kw));
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
TensorT<T> pool_backward(const PoolCache<T>& cache, const TensorT<T>& gout) {
  TensorT<T> dx(cache.in_shape);
  const int h = cache.in_shape[2], w = cache.in_shape[3];
  const int hout = gout.dim(2), wout = gout.dim(3);
  if (cache.kind == PoolKind::kMax) {
    for (std::size_t i = 0; i < gout.numel(); ++i)
      dx[cache.argmax[i]] += gout[i];
    return dx;
  }
  const T inv_area = T(1) / static_cast<T>(cache.kh * cache.kw);
  std::size_t out_idx = 0;
  for (int ni = 0; ni < gout.dim(0); ++ni) {
    for (int ci = 0; ci < gout.dim(1); ++ci) {
      for (int oi = 0; oi < hout; ++oi) {
        for (int oj = 0; oj < wout; ++oj, ++out_idx) {
          const T g = gout[out_idx] * inv_area;
          for (int ki = 0; ki < cache.kh; ++ki) {
            const int ii = oi * cache.stride - cache.padding + ki;
            if (ii < 0 || ii >= h) continue;
            for (int kj = 0; kj < cache.kw; ++kj) {
              const int jj = oj * cache.stride - cache.padding + kj;
              if (jj < 0 || jj >= w) continue;
              dx.at4(ni, ci, ii, jj) += g;
            }
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// global_avg_pool: [N,C,H,W] -> [N,C]; the pooled feature vector p.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
  detail::require_rank(x, 4, "global_avg_pool input");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 1 || w < 1) throw ShapeError("global_avg_pool: empty spatial dims");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  TensorT<T> y({n, c});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      double sum = 0.0;
      const T* p = x.data() + x.offset4(ni, ci, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      y.at2(ni, ci) = static_cast<T>(sum / static_cast<double>(plane));
    }
  }
  return y;
}

template <typename T>
TensorT<T> global_avg_pool_backward(const std::vector<int>& in_shape,
                                    const TensorT<T>& gout) {
  TensorT<T> dx(in_shape);
  const int n = in_shape[0], c = in_shape[1], h = in_shape[2], w = in_shape[3];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const T inv = T(1) / static_cast<T>(plane);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T g = gout.at2(ni, ci) * inv;
      T* p = dx.data() + dx.offset4(ni, ci, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) p[i] = g;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// linear: y = x * W^T + b with W stored [Dout, Din].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& weight,
                  const TensorT<T>& bias) {
  detail::require_rank(x, 2, "linear input");
  detail::require_rank(weight, 2, "linear weight");
  const int n = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din || bias.numel() != static_cast<std::size_t>(dout)) {
    throw ShapeError("linear: weight " + weight.shape_string() + " / bias [" +
                     std::to_string(bias.numel()) +
                     "] do not conform to input " + x.shape_string());
  }
  TensorT<T> y({n, dout});
  for (int ni = 0; ni < n; ++ni) {
    const T* xrow = x.data() + static_cast<std::size_t>(ni) * din;
    for (int o = 0; o < dout; ++o) {
      const T* wrow = weight.data() + static_cast<std::size_t>(o) * din;
      T acc = bias[o];
      for (int i = 0; i < din; ++i) acc += xrow[i] * wrow[i];
      y.at2(ni, o) = acc;
    }
  }
  return y;
}

template <typename T>
struct LinearGrads {
  TensorT<T> dx;
  TensorT<T> dweight;
  TensorT<T> dbias;
};

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& x, const TensorT<T>& weight,
                               const TensorT<T>& gout) {
  const int n = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  LinearGrads<T> grads{TensorT<T>(x.shape()), TensorT<T>(weight.shape()),
                       TensorT<T>({dout})};
  for (int ni = 0; ni < n; ++ni) {
    const T* grow = gout.data() + static_cast<std::size_t>(ni) * dout;
    const T* xrow = x.data() + static_cast<std::size_t>(ni) * din;
    T* dxrow = grads.dx.data() + static_cast<std::size_t>(ni) * din;
    for (int o = 0; o < dout; ++o) {
      const T g = grow[o];
      const T* wrow = weight.data() + static_cast<std::size_t>(o) * din;
      T* dwrow = grads.dweight.data() + static_cast<std::size_t>(o) * din;
      for (int i = 0; i < din; ++i) {
        dxrow[i] += g * wrow[i];
        dwrow[i] += g * xrow[i];
      }
      grads.dbias[o] += g;
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// concat_features: feature-axis concat of [N,Da] and [N,Db].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> concat_features(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_rank(a, 2, "concat_features a");
  detail::require_rank(b, 2, "concat_features b");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_features: batch mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
  }
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  TensorT<T> y({n, da + db});
  for (int ni = 0; ni < n; ++ni) {
    T* row = y.data() + static_cast<std::size_t>(ni) * (da + db);
    const T* arow = a.data() + static_cast<std::size_t>(ni) * da;
    const T* brow = b.data() + static_cast<std::size_t>(ni) * db;
    std::copy(arow, arow + da, row);
    std::copy(brow, brow + db, row + da);
  }
  return y;
}

template <typename T>
struct ConcatGrads {
  TensorT<T> da;
  TensorT<T> db;
};

template <typename T>
ConcatGrads<T> concat_features_backward(int da, int db,
                                        const TensorT<T>& gout) {
  const int n = gout.dim(0);
  if (gout.dim(1) != da + db) {
    throw ShapeError("concat_features_backward: gradient width mismatch");
  }
  ConcatGrads<T> grads{TensorT<T>({n, da}), TensorT<T>({n, db})};
  for (int ni = 0; ni < n; ++ni) {
    const T* row = gout.data() + static_cast<std::size_t>(ni) * (da + db);
    std::copy(row, row + da,
              grads.da.data() + static_cast<std::size_t>(ni) * da);
    std::copy(row + da, row + da + db,
              grads.db.data() + static_cast<std::size_t>(ni) * db);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// elementwise_add: strict shapes, no broadcasting.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> elementwise_add(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("elementwise_add: shape mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
  }
  TensorT<T> y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

// ---------------------------------------------------------------------------
// sigmoid
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  return y;
}

/// Takes the forward output y = sigmoid(x); dy/dx = y*(1-y).
template <typename T>
TensorT<T> sigmoid_backward(const TensorT<T>& y, const TensorT<T>& gout) {
  TensorT<T> dx(y.shape());
  for (std::size_t i = 0; i < y.numel(); ++i)
    dx[i] = gout[i] * y[i] * (T(1) - y[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// bce_loss: mean binary cross entropy with clamping at 1e-7.
// ---------------------------------------------------------------------------

inline constexpr double kBceEps = 1e-7;

template <typename T>
double bce_loss(const TensorT<T>& p, const TensorT<T>& y) {
  if (!p.same_shape(y)) throw ShapeError("bce_loss: shape mismatch");
  const std::size_t count = p.numel();
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double pc = std::min(std::max(static_cast<double>(p[i]), kBceEps),
                               1.0 - kBceEps);
    const double t = y[i];
    sum -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
  }
  return sum / static_cast<double>(count);
}

/// d(mean bce)/dp. Zero where the clamp is active (loss is flat there).
template <typename T>
TensorT<T> bce_loss_backward(const TensorT<T>& p, const TensorT<T>& y) {
  const std::size_t count = p.numel();
  TensorT<T> dp(p.shape());
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pc = p[i];
    if (pc <= kBceEps || pc >= 1.0 - kBceEps) {
      dp[i] = T(0);
      continue;
    }
    const double t = y[i];
    dp[i] = static_cast<T>((-t / pc + (1.0 - t) / (1.0 - pc)) * inv);
  }
  return dp;
}

}  // namespace chexfuse
