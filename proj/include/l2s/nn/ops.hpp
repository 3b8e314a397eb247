#pragma once

#include "l2s/nn/tensor.hpp"
#include "l2s/signal/fft.hpp"

namespace l2s::nn {

namespace opdetail {

// C[m,n] += A[m,k] * B[k,n], row-major, ikj order for contiguous streaming
inline void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n,
                     bool trans_a = false, bool trans_b = false) {
  if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* br = b + size_t(p) * n;
        double* cr = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
  } else if (trans_a && !trans_b) {  // A is [k,m]
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) {
        double av = a[p * m + i];
        if (av == 0.0) continue;
        const double* br = b + size_t(p) * n;
        double* cr = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) cr[j] += av * br[j];
      }
  } else if (!trans_a && trans_b) {  // B is [n,k]
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const double* ar = a + size_t(i) * k;
        const double* br = b + size_t(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
        c[size_t(i) * n + j] += acc;
      }
  } else {  // both transposed
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) {
        double av = a[p * m + i];
        if (av == 0.0) continue;
        for (int j = 0; j < n; ++j) c[size_t(i) * n + j] += av * b[size_t(j) * k + p];
      }
  }
}

}  // namespace opdetail

// ---- elementwise ----

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  require(a->shape == b->shape, "add: shape mismatch");
  auto out = op_result(a->shape, {a, b});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, b] {
      if (a->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
      if (b->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
    };
  }
  return out;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  require(a->shape == b->shape, "sub: shape mismatch");
  auto out = op_result(a->shape, {a, b});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] - b->value[i];
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, b] {
      if (a->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
      if (b->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] -= o->grad[i];
    };
  }
  return out;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
  require(a->shape == b->shape, "mul: shape mismatch");
  auto out = op_result(a->shape, {a, b});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] * b->value[i];
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, b] {
      if (a->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * b->value[i];
      if (b->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i] * a->value[i];
    };
  }
  return out;
}

inline TensorPtr scale(const TensorPtr& a, double c) {
  auto out = op_result(a->shape, {a});
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = a->value[i] * c;
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, c] {
      for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * c;
    };
  }
  return out;
}

// x: [..., D], bias: [D]
inline TensorPtr add_bias(const TensorPtr& x, const TensorPtr& b) {
  int d = x->dim(-1);
  require(b->ndim() == 1 && b->shape[0] == d, "add_bias: bias width mismatch");
  auto out = op_result(x->shape, {x, b});
  size_t rows = x->numel() / size_t(d);
  for (size_t r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j) out->value[r * d + j] = x->value[r * d + j] + b->value[j];
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, b, rows, d] {
      if (x->requires_grad)
        for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
      if (b->requires_grad)
        for (size_t r = 0; r < rows; ++r)
          for (int j = 0; j < d; ++j) b->grad[j] += o->grad[r * size_t(d) + j];
    };
  }
  return out;
}

// x: [B, T, D] (or [T, D]) times 0/1 time mask of length rows(x)
inline TensorPtr mul_time_mask(const TensorPtr& x, std::vector<double> mask) {
  int d = x->dim(-1);
  size_t rows = x->numel() / size_t(d);
  require(mask.size() == rows, "mul_time_mask: mask length mismatch");
  auto out = op_result(x->shape, {x});
  for (size_t r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j) out->value[r * d + j] = x->value[r * d + j] * mask[r];
  if (out->requires_grad) {
    Tensor* o = out.get();
    auto m = std::make_shared<std::vector<double>>(std::move(mask));
    out->backward_fn = [o, x, m, d] {
      size_t rows = o->grad.size() / size_t(d);
      for (size_t r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j) x->grad[r * d + j] += o->grad[r * d + j] * (*m)[r];
    };
  }
  return out;
}

#define L2S_UNARY_OP(NAME, FWD, BWD)                                              \
  inline TensorPtr NAME(const TensorPtr& a) {                                     \
    auto out = op_result(a->shape, {a});                                          \
    for (size_t i = 0; i < out->value.size(); ++i) {                              \
      double v = a->value[i];                                                     \
      (void)v;                                                                    \
      out->value[i] = (FWD);                                                      \
    }                                                                             \
    if (out->requires_grad) {                                                     \
      Tensor* o = out.get();                                                      \
      out->backward_fn = [o, a] {                                                 \
        for (size_t i = 0; i < o->grad.size(); ++i) {                             \
          double v = a->value[i];                                                 \
          double y = o->value[i];                                                 \
          (void)v;                                                                \
          (void)y;                                                                \
          a->grad[i] += o->grad[i] * (BWD);                                       \
        }                                                                         \
      };                                                                          \
    }                                                                             \
    return out;                                                                   \
  }

L2S_UNARY_OP(relu, v > 0.0 ? v : 0.0, v > 0.0 ? 1.0 : 0.0)
L2S_UNARY_OP(leaky_relu, v > 0.0 ? v : 0.1 * v, v > 0.0 ? 1.0 : 0.1)
L2S_UNARY_OP(tanh_op, std::tanh(v), 1.0 - y * y)
L2S_UNARY_OP(sigmoid, 1.0 / (1.0 + std::exp(-v)), y * (1.0 - y))
L2S_UNARY_OP(silu, v / (1.0 + std::exp(-v)),
             (1.0 + std::exp(-v) + v * std::exp(-v)) /
                 ((1.0 + std::exp(-v)) * (1.0 + std::exp(-v))))
L2S_UNARY_OP(abs_op, std::fabs(v), v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0))
L2S_UNARY_OP(square, v* v, 2.0 * v)

#undef L2S_UNARY_OP

inline TensorPtr log_clamped(const TensorPtr& a, double floor_val) {
  auto out = op_result(a->shape, {a});
  for (size_t i = 0; i < out->value.size(); ++i)
    out->value[i] = std::log(std::max(a->value[i], floor_val));
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, floor_val] {
      for (size_t i = 0; i < o->grad.size(); ++i)
        if (a->value[i] > floor_val) a->grad[i] += o->grad[i] / a->value[i];
    };
  }
  return out;
}

// ---- shape ops ----

inline TensorPtr reshape(const TensorPtr& a, std::vector<int> new_shape) {
  require(shape_numel(new_shape) == a->numel(), "reshape: element count mismatch");
  auto out = op_result(std::move(new_shape), {a});
  out->value = a->value;
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a] {
      for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
    };
  }
  return out;
}

inline TensorPtr concat_lastdim(const TensorPtr& a, const TensorPtr& b) {
  require(a->ndim() == b->ndim(), "concat: rank mismatch");
  for (int i = 0; i + 1 < a->ndim(); ++i)
    require(a->shape[i] == b->shape[i], "concat: leading dims mismatch");
  int da = a->dim(-1), db = b->dim(-1);
  auto shape = a->shape;
  shape.back() = da + db;
  auto out = op_result(shape, {a, b});
  size_t rows = a->numel() / size_t(da);
  for (size_t r = 0; r < rows; ++r) {
    std::copy(a->value.begin() + r * da, a->value.begin() + (r + 1) * da,
              out->value.begin() + r * (da + db));
    std::copy(b->value.begin() + r * db, b->value.begin() + (r + 1) * db,
              out->value.begin() + r * (da + db) + da);
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, b, rows, da, db] {
      for (size_t r = 0; r < rows; ++r) {
        if (a->requires_grad)
          for (int j = 0; j < da; ++j) a->grad[r * da + j] += o->grad[r * (da + db) + j];
        if (b->requires_grad)
          for (int j = 0; j < db; ++j) b->grad[r * db + j] += o->grad[r * (da + db) + da + j];
      }
    };
  }
  return out;
}

// [B, T, D] -> [B, T*r, D], each step repeated r times (temporal interleave)
inline TensorPtr repeat_time(const TensorPtr& x, int r) {
  require(r >= 1, "repeat_time: ratio must be >= 1");
  require(x->ndim() == 3, "repeat_time expects [B, T, D]");
  int b = x->shape[0], t = x->shape[1], d = x->shape[2];
  auto out = op_result({b, t * r, d}, {x});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < t; ++j)
      for (int k = 0; k < r; ++k)
        std::copy(x->value.begin() + (size_t(i) * t + j) * d,
                  x->value.begin() + (size_t(i) * t + j + 1) * d,
                  out->value.begin() + ((size_t(i) * t * r) + size_t(j) * r + k) * d);
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, b, t, d, r] {
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < t; ++j)
          for (int k = 0; k < r; ++k) {
            const double* g = o->grad.data() + ((size_t(i) * t * r) + size_t(j) * r + k) * d;
            double* xg = x->grad.data() + (size_t(i) * t + j) * d;
            for (int c = 0; c < d; ++c) xg[c] += g[c];
          }
    };
  }
  return out;
}

// [B, T, H*dh] -> [B, H, T, dh]
inline TensorPtr split_heads(const TensorPtr& x, int heads) {
  require(x->ndim() == 3, "split_heads expects [B, T, D]");
  int b = x->shape[0], t = x->shape[1], d = x->shape[2];
  require(d % heads == 0, "split_heads: D not divisible by heads");
  int dh = d / heads;
  auto out = op_result({b, heads, t, dh}, {x});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < t; ++j)
      for (int h = 0; h < heads; ++h)
        std::copy(x->value.begin() + ((size_t(i) * t + j) * d) + h * dh,
                  x->value.begin() + ((size_t(i) * t + j) * d) + (h + 1) * dh,
                  out->value.begin() + (((size_t(i) * heads + h) * t) + j) * dh);
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, b, t, heads, dh] {
      int d = heads * dh;
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < t; ++j)
          for (int h = 0; h < heads; ++h) {
            const double* g = o->grad.data() + (((size_t(i) * heads + h) * t) + j) * dh;
            double* xg = x->grad.data() + ((size_t(i) * t + j) * d) + h * dh;
            for (int c = 0; c < dh; ++c) xg[c] += g[c];
          }
    };
  }
  return out;
}

// [B, H, T, dh] -> [B, T, H*dh]
inline TensorPtr merge_heads(const TensorPtr& x) {
  require(x->ndim() == 4, "merge_heads expects [B, H, T, dh]");
  int b = x->shape[0], heads = x->shape[1], t = x->shape[2], dh = x->shape[3];
  int d = heads * dh;
  auto out = op_result({b, t, d}, {x});
  for (int i = 0; i < b; ++i)
    for (int h = 0; h < heads; ++h)
      for (int j = 0; j < t; ++j)
        std::copy(x->value.begin() + (((size_t(i) * heads + h) * t) + j) * dh,
                  x->value.begin() + (((size_t(i) * heads + h) * t) + j + 1) * dh,
                  out->value.begin() + ((size_t(i) * t + j) * d) + h * dh);
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, b, t, heads, dh] {
      int d = heads * dh;
      for (int i = 0; i < b; ++i)
        for (int h = 0; h < heads; ++h)
          for (int j = 0; j < t; ++j) {
            const double* g = o->grad.data() + ((size_t(i) * t + j) * d) + h * dh;
            double* xg = x->grad.data() + (((size_t(i) * heads + h) * t) + j) * dh;
            for (int c = 0; c < dh; ++c) xg[c] += g[c];
          }
    };
  }
  return out;
}

// ---- dense algebra ----

// x: [..., in], w: [in, out], b: [out] (optional)
inline TensorPtr linear(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b = nullptr) {
  int in = x->dim(-1);
  require(w->ndim() == 2 && w->shape[0] == in, "linear: weight shape mismatch");
  int out_dim = w->shape[1];
  auto shape = x->shape;
  shape.back() = out_dim;
  std::vector<TensorPtr> parents = {x, w};
  if (b) parents.push_back(b);
  auto out = op_result(shape, parents);
  size_t rows = x->numel() / size_t(in);
  opdetail::gemm_acc(x->value.data(), w->value.data(), out->value.data(), int(rows), in,
                     out_dim);
  if (b) {
    require(b->ndim() == 1 && b->shape[0] == out_dim, "linear: bias shape mismatch");
    for (size_t r = 0; r < rows; ++r)
      for (int j = 0; j < out_dim; ++j) out->value[r * out_dim + j] += b->value[j];
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, w, b, rows, in, out_dim] {
      // dX = dY * W^T ; dW = X^T * dY ; db = colsum(dY)
      if (x->requires_grad)
        opdetail::gemm_acc(o->grad.data(), w->value.data(), x->grad.data(), int(rows), out_dim,
                           in, false, true);
      if (w->requires_grad)
        opdetail::gemm_acc(x->value.data(), o->grad.data(), w->grad.data(), in, int(rows),
                           out_dim, true, false);
      if (b && b->requires_grad)
        for (size_t r = 0; r < rows; ++r)
          for (int j = 0; j < out_dim; ++j) b->grad[j] += o->grad[r * out_dim + j];
    };
  }
  return out;
}

// a: [N, m, k], b: [N, k, n] (optionally transposing the last two dims of b)
inline TensorPtr batched_matmul(const TensorPtr& a, const TensorPtr& b, bool trans_b = false) {
  require(a->ndim() >= 3 && b->ndim() == a->ndim(), "batched_matmul: rank mismatch");
  size_t batch = 1;
  for (int i = 0; i + 2 < a->ndim(); ++i) {
    require(a->shape[i] == b->shape[i], "batched_matmul: batch dims mismatch");
    batch *= size_t(a->shape[i]);
  }
  int m = a->dim(-2), k = a->dim(-1);
  int bk = trans_b ? b->dim(-1) : b->dim(-2);
  int n = trans_b ? b->dim(-2) : b->dim(-1);
  require(bk == k, "batched_matmul: inner dims mismatch");
  auto shape = a->shape;
  shape[shape.size() - 1] = n;
  auto out = op_result(shape, {a, b});
  size_t as = size_t(m) * k, bs = size_t(bk) * (trans_b ? k : n), os = size_t(m) * n;
  if (trans_b) bs = size_t(n) * k;
  for (size_t i = 0; i < batch; ++i)
    opdetail::gemm_acc(a->value.data() + i * as, b->value.data() + i * bs,
                       out->value.data() + i * os, m, k, n, false, trans_b);
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, a, b, batch, as, bs, os, m, k, n, trans_b] {
      for (size_t i = 0; i < batch; ++i) {
        const double* go = o->grad.data() + i * os;
        if (a->requires_grad) {
          // dA = dY * B^T  (or dY * B when B was transposed)
          opdetail::gemm_acc(go, b->value.data() + i * bs, a->grad.data() + i * as, m, n, k,
                             false, !trans_b);
        }
        if (b->requires_grad) {
          if (!trans_b)  // dB = A^T * dY
            opdetail::gemm_acc(a->value.data() + i * as, go, b->grad.data() + i * bs, k, m, n,
                               true, false);
          else  // dB = dY^T * A
            opdetail::gemm_acc(go, a->value.data() + i * as, b->grad.data() + i * bs, n, m, k,
                               true, false);
        }
      }
    };
  }
  return out;
}

// ---- normalization / softmax ----

inline TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                            double eps = 1e-5) {
  int d = x->dim(-1);
  require(gamma->shape == std::vector<int>{d} && beta->shape == std::vector<int>{d},
          "layer_norm: affine shape mismatch");
  auto out = op_result(x->shape, {x, gamma, beta});
  size_t rows = x->numel() / size_t(d);
  auto stats = std::make_shared<std::vector<double>>(rows * 2);  // mean, inv_std per row
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = inv;
    double* orow = out->value.data() + r * d;
    for (int j = 0; j < d; ++j)
      orow[j] = gamma->value[j] * ((xr[j] - mean) * inv) + beta->value[j];
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, gamma, beta, stats, rows, d] {
      for (size_t r = 0; r < rows; ++r) {
        const double* xr = x->value.data() + r * d;
        const double* go = o->grad.data() + r * d;
        double mean = (*stats)[2 * r], inv = (*stats)[2 * r + 1];
        double sum_gy = 0.0, sum_gyx = 0.0;
        for (int j = 0; j < d; ++j) {
          double xhat = (xr[j] - mean) * inv;
          double gy = go[j] * gamma->value[j];
          sum_gy += gy;
          sum_gyx += gy * xhat;
          if (gamma->requires_grad) gamma->grad[j] += go[j] * xhat;
          if (beta->requires_grad) beta->grad[j] += go[j];
        }
        if (x->requires_grad)
          for (int j = 0; j < d; ++j) {
            double xhat = (xr[j] - mean) * inv;
            double gy = go[j] * gamma->value[j];
            x->grad[r * d + j] += inv * (gy - sum_gy / d - xhat * sum_gyx / d);
          }
      }
    };
  }
  return out;
}

// softmax over the last dim; optional additive mask (same trailing dim,
// broadcast over rows) passed as a plain vector with stride semantics chosen
// by the caller via row_mask/full_mask helpers below.
inline TensorPtr softmax_lastdim(const TensorPtr& x,
                                 const std::shared_ptr<std::vector<double>>& add_mask = nullptr,
                                 size_t mask_row_stride = 0) {
  int d = x->dim(-1);
  size_t rows = x->numel() / size_t(d);
  if (add_mask)
    require(!add_mask->empty() && add_mask->size() % size_t(d) == 0,
            "softmax: mask must be whole rows of width ", d);
  auto out = op_result(x->shape, {x});
  for (size_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * d;
    const double* mr = nullptr;
    if (add_mask) {
      size_t n_mask_rows = add_mask->size() / d;
      size_t mrow = mask_row_stride == 0 ? r % n_mask_rows : (r / mask_row_stride) % n_mask_rows;
      mr = add_mask->data() + mrow * d;
    }
    double mx = -1e300;
    for (int j = 0; j < d; ++j) mx = std::max(mx, xr[j] + (mr ? mr[j] : 0.0));
    double sum = 0.0;
    double* orow = out->value.data() + r * d;
    for (int j = 0; j < d; ++j) {
      orow[j] = std::exp(xr[j] + (mr ? mr[j] : 0.0) - mx);
      sum += orow[j];
    }
    for (int j = 0; j < d; ++j) orow[j] /= sum;
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, rows, d] {
      for (size_t r = 0; r < rows; ++r) {
        const double* y = o->value.data() + r * d;
        const double* gy = o->grad.data() + r * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += y[j] * gy[j];
        for (int j = 0; j < d; ++j) x->grad[r * d + j] += y[j] * (gy[j] - dot);
      }
    };
  }
  return out;
}

// GLU over the last dim: first half gated by sigmoid of the second half.
inline TensorPtr glu(const TensorPtr& x) {
  int d = x->dim(-1);
  require(d % 2 == 0, "glu: last dim must be even");
  int h = d / 2;
  auto shape = x->shape;
  shape.back() = h;
  auto out = op_result(shape, {x});
  size_t rows = x->numel() / size_t(d);
  for (size_t r = 0; r < rows; ++r) {
    const double* a = x->value.data() + r * d;
    const double* g = a + h;
    double* orow = out->value.data() + r * h;
    for (int j = 0; j < h; ++j) orow[j] = a[j] / (1.0 + std::exp(-g[j]));
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, rows, d, h] {
      for (size_t r = 0; r < rows; ++r) {
        const double* a = x->value.data() + r * d;
        const double* g = a + h;
        const double* go = o->grad.data() + r * h;
        double* xg = x->grad.data() + r * d;
        for (int j = 0; j < h; ++j) {
          double s = 1.0 / (1.0 + std::exp(-g[j]));
          xg[j] += go[j] * s;
          xg[h + j] += go[j] * a[j] * s * (1.0 - s);
        }
      }
    };
  }
  return out;
}

// ---- convolutions ----

// x: [B, T, Cin], w: [K, Cin, Cout], stride 1; zero padding `pad` each side;
// dilation supported.
inline TensorPtr conv1d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b = nullptr,
                        int pad = 0, int dilation = 1) {
  require(x->ndim() == 3 && w->ndim() == 3, "conv1d: expects [B,T,C] and [K,Cin,Cout]");
  int bsz = x->shape[0], t = x->shape[1], cin = x->shape[2];
  int k = w->shape[0], cout = w->shape[2];
  require(w->shape[1] == cin, "conv1d: channel mismatch");
  int t_out = t + 2 * pad - dilation * (k - 1);
  require(t_out >= 1, "conv1d: output length would be empty");
  std::vector<TensorPtr> parents = {x, w};
  if (b) parents.push_back(b);
  auto out = op_result({bsz, t_out, cout}, parents);
  for (int i = 0; i < bsz; ++i)
    for (int kk = 0; kk < k; ++kk) {
      // out[i, to, :] += x[i, to + kk*dil - pad, :] @ w[kk]
      const double* wk = w->value.data() + size_t(kk) * cin * cout;
      for (int to = 0; to < t_out; ++to) {
        int ti = to + kk * dilation - pad;
        if (ti < 0 || ti >= t) continue;
        opdetail::gemm_acc(x->value.data() + (size_t(i) * t + ti) * cin, wk,
                           out->value.data() + (size_t(i) * t_out + to) * cout, 1, cin, cout);
      }
    }
  if (b) {
    require(b->shape == std::vector<int>{cout}, "conv1d: bias shape mismatch");
    for (int i = 0; i < bsz; ++i)
      for (int to = 0; to < t_out; ++to)
        for (int c = 0; c < cout; ++c)
          out->value[(size_t(i) * t_out + to) * cout + c] += b->value[c];
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, w, b, bsz, t, cin, k, cout, t_out, pad, dilation] {
      for (int i = 0; i < bsz; ++i)
        for (int kk = 0; kk < k; ++kk) {
          const double* wk = w->value.data() + size_t(kk) * cin * cout;
          double* wgk = w->requires_grad ? w->grad.data() + size_t(kk) * cin * cout : nullptr;
          for (int to = 0; to < t_out; ++to) {
            int ti = to + kk * dilation - pad;
            if (ti < 0 || ti >= t) continue;
            const double* go = o->grad.data() + (size_t(i) * t_out + to) * cout;
            if (x->requires_grad)
              opdetail::gemm_acc(go, wk, x->grad.data() + (size_t(i) * t + ti) * cin, 1, cout,
                                 cin, false, true);
            if (wgk)
              opdetail::gemm_acc(x->value.data() + (size_t(i) * t + ti) * cin, go, wgk, cin, 1,
                                 cout, true, false);
          }
        }
      if (b && b->requires_grad)
        for (int i = 0; i < bsz; ++i)
          for (int to = 0; to < t_out; ++to)
            for (int c = 0; c < cout; ++c)
              b->grad[c] += o->grad[(size_t(i) * t_out + to) * cout + c];
    };
  }
  return out;
}

// depthwise conv along time: x [B,T,C], w [K,C]
inline TensorPtr depthwise_conv1d(const TensorPtr& x, const TensorPtr& w, int pad) {
  require(x->ndim() == 3 && w->ndim() == 2, "depthwise_conv1d: bad shapes");
  int bsz = x->shape[0], t = x->shape[1], c = x->shape[2];
  int k = w->shape[0];
  require(w->shape[1] == c, "depthwise_conv1d: channel mismatch");
  int t_out = t + 2 * pad - (k - 1);
  require(t_out >= 1, "depthwise_conv1d: output empty");
  auto out = op_result({bsz, t_out, c}, {x, w});
  for (int i = 0; i < bsz; ++i)
    for (int to = 0; to < t_out; ++to) {
      double* orow = out->value.data() + (size_t(i) * t_out + to) * c;
      for (int kk = 0; kk < k; ++kk) {
        int ti = to + kk - pad;
        if (ti < 0 || ti >= t) continue;
        const double* xr = x->value.data() + (size_t(i) * t + ti) * c;
        const double* wr = w->value.data() + size_t(kk) * c;
        for (int j = 0; j < c; ++j) orow[j] += xr[j] * wr[j];
      }
    }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, w, bsz, t, c, k, t_out, pad] {
      for (int i = 0; i < bsz; ++i)
        for (int to = 0; to < t_out; ++to) {
          const double* go = o->grad.data() + (size_t(i) * t_out + to) * c;
          for (int kk = 0; kk < k; ++kk) {
            int ti = to + kk - pad;
            if (ti < 0 || ti >= t) continue;
            const double* xr = x->value.data() + (size_t(i) * t + ti) * c;
            const double* wr = w->value.data() + size_t(kk) * c;
            if (x->requires_grad) {
              double* xg = x->grad.data() + (size_t(i) * t + ti) * c;
              for (int j = 0; j < c; ++j) xg[j] += go[j] * wr[j];
            }
            if (w->requires_grad) {
              double* wg = w->grad.data() + size_t(kk) * c;
              for (int j = 0; j < c; ++j) wg[j] += go[j] * xr[j];
            }
          }
        }
    };
  }
  return out;
}

// transposed conv along time: x [B,T,Cin], w [K,Cin,Cout], output
// [B, (T-1)*stride + K - 2*pad, Cout]
inline TensorPtr conv_transpose1d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b,
                                  int stride, int pad) {
  require(x->ndim() == 3 && w->ndim() == 3, "conv_transpose1d: bad shapes");
  int bsz = x->shape[0], t = x->shape[1], cin = x->shape[2];
  int k = w->shape[0], cout = w->shape[2];
  require(w->shape[1] == cin, "conv_transpose1d: channel mismatch");
  int t_out = (t - 1) * stride + k - 2 * pad;
  require(t_out >= 1, "conv_transpose1d: output empty");
  std::vector<TensorPtr> parents = {x, w};
  if (b) parents.push_back(b);
  auto out = op_result({bsz, t_out, cout}, parents);
  for (int i = 0; i < bsz; ++i)
    for (int ti = 0; ti < t; ++ti) {
      const double* xr = x->value.data() + (size_t(i) * t + ti) * cin;
      for (int kk = 0; kk < k; ++kk) {
        int to = ti * stride + kk - pad;
        if (to < 0 || to >= t_out) continue;
        opdetail::gemm_acc(xr, w->value.data() + size_t(kk) * cin * cout,
                           out->value.data() + (size_t(i) * t_out + to) * cout, 1, cin, cout);
      }
    }
  if (b) {
    require(b->shape == std::vector<int>{cout}, "conv_transpose1d: bias shape mismatch");
    for (int i = 0; i < bsz; ++i)
      for (int to = 0; to < t_out; ++to)
        for (int c = 0; c < cout; ++c)
          out->value[(size_t(i) * t_out + to) * cout + c] += b->value[c];
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, w, b, bsz, t, cin, k, cout, t_out, stride, pad] {
      for (int i = 0; i < bsz; ++i)
        for (int ti = 0; ti < t; ++ti) {
          const double* xr = x->value.data() + (size_t(i) * t + ti) * cin;
          double* xg = x->requires_grad ? x->grad.data() + (size_t(i) * t + ti) * cin : nullptr;
          for (int kk = 0; kk < k; ++kk) {
            int to = ti * stride + kk - pad;
            if (to < 0 || to >= t_out) continue;
            const double* go = o->grad.data() + (size_t(i) * t_out + to) * cout;
            if (xg)
              opdetail::gemm_acc(go, w->value.data() + size_t(kk) * cin * cout, xg, 1, cout,
                                 cin, false, true);
            if (w->requires_grad)
              opdetail::gemm_acc(xr, go, w->grad.data() + size_t(kk) * cin * cout, cin, 1, cout,
                                 true, false);
          }
        }
      if (b && b->requires_grad)
        for (int i = 0; i < bsz; ++i)
          for (int to = 0; to < t_out; ++to)
            for (int c = 0; c < cout; ++c)
              b->grad[c] += o->grad[(size_t(i) * t_out + to) * cout + c];
    };
  }
  return out;
}

// x: [N, Cin, H, W], w: [K, K, Cin, Cout]
inline TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, int stride,
                        int pad) {
  require(x->ndim() == 4 && w->ndim() == 4, "conv2d: bad shapes");
  int n = x->shape[0], cin = x->shape[1], h = x->shape[2], wd = x->shape[3];
  int k = w->shape[0], cout = w->shape[3];
  require(w->shape[1] == k && w->shape[2] == cin, "conv2d: kernel shape mismatch");
  int ho = (h + 2 * pad - k) / stride + 1;
  int wo = (wd + 2 * pad - k) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: output empty");
  std::vector<TensorPtr> parents = {x, w};
  if (b) parents.push_back(b);
  auto out = op_result({n, cout, ho, wo}, parents);

  auto xidx = [cin, h, wd](int i, int c, int y, int xx) {
    return ((size_t(i) * cin + c) * h + y) * wd + xx;
  };
  auto oidx = [cout, ho, wo](int i, int c, int y, int xx) {
    return ((size_t(i) * cout + c) * ho + y) * wo + xx;
  };
  auto widx = [k, cin, cout](int ky, int kx, int ci, int co) {
    return ((size_t(ky) * k + kx) * cin + ci) * cout + co;
  };

  for (int i = 0; i < n; ++i)
    for (int yo = 0; yo < ho; ++yo)
      for (int xo = 0; xo < wo; ++xo) {
        for (int ky = 0; ky < k; ++ky) {
          int yi = yo * stride + ky - pad;
          if (yi < 0 || yi >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            int xi = xo * stride + kx - pad;
            if (xi < 0 || xi >= wd) continue;
            for (int ci = 0; ci < cin; ++ci) {
              double xv = x->value[xidx(i, ci, yi, xi)];
              if (xv == 0.0) continue;
              const double* wr = w->value.data() + widx(ky, kx, ci, 0);
              for (int co = 0; co < cout; ++co)
                out->value[oidx(i, co, yo, xo)] += xv * wr[co];
            }
          }
        }
        if (b)
          for (int co = 0; co < cout; ++co) out->value[oidx(i, co, yo, xo)] += b->value[co];
      }

  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, w, b, n, cin, h, wd, k, cout, ho, wo, stride, pad, xidx, oidx,
                        widx] {
      for (int i = 0; i < n; ++i)
        for (int yo = 0; yo < ho; ++yo)
          for (int xo = 0; xo < wo; ++xo) {
            for (int ky = 0; ky < k; ++ky) {
              int yi = yo * stride + ky - pad;
              if (yi < 0 || yi >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int xi = xo * stride + kx - pad;
                if (xi < 0 || xi >= wd) continue;
                for (int ci = 0; ci < cin; ++ci) {
                  const double* wr = w->value.data() + widx(ky, kx, ci, 0);
                  double* wg = w->requires_grad ? w->grad.data() + widx(ky, kx, ci, 0) : nullptr;
                  double xv = x->value[xidx(i, ci, yi, xi)];
                  double acc = 0.0;
                  const double* go = o->grad.data() + oidx(i, 0, yo, xo);
                  size_t ostride = size_t(ho) * wo;
                  for (int co = 0; co < cout; ++co) {
                    double g = go[co * ostride];
                    acc += g * wr[co];
                    if (wg) wg[co] += g * xv;
                  }
                  if (x->requires_grad) x->grad[xidx(i, ci, yi, xi)] += acc;
                }
              }
            }
            if (b && b->requires_grad) {
              size_t ostride = size_t(ho) * wo;
              const double* go = o->grad.data() + oidx(i, 0, yo, xo);
              for (int co = 0; co < cout; ++co) b->grad[co] += go[co * ostride];
            }
          }
    };
  }
  return out;
}

// global average pool over spatial dims: [N, C, H, W] -> [N, C]
inline TensorPtr global_avg_pool2d(const TensorPtr& x) {
  require(x->ndim() == 4, "global_avg_pool2d expects [N,C,H,W]");
  int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  auto out = op_result({n, c}, {x});
  double inv = 1.0 / (double(h) * w);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double* xr = x->value.data() + (size_t(i) * c + j) * h * w;
      double acc = 0.0;
      for (int p = 0; p < h * w; ++p) acc += xr[p];
      out->value[size_t(i) * c + j] = acc * inv;
    }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, n, c, h, w, inv] {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
          double g = o->grad[size_t(i) * c + j] * inv;
          double* xg = x->grad.data() + (size_t(i) * c + j) * h * w;
          for (int p = 0; p < h * w; ++p) xg[p] += g;
        }
    };
  }
  return out;
}

// ---- embeddings / dropout / reductions ----

inline TensorPtr embedding(const std::vector<int>& ids, const TensorPtr& table,
                           std::vector<int> out_leading_shape) {
  require(table->ndim() == 2, "embedding table must be [K, D]");
  int k = table->shape[0], d = table->shape[1];
  require(shape_numel(out_leading_shape) == ids.size(), "embedding: id count mismatch");
  auto shape = out_leading_shape;
  shape.push_back(d);
  auto out = op_result(shape, {table});
  for (size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < k, "embedding id ", ids[i], " out of range [0,", k, ")");
    std::copy(table->value.begin() + size_t(ids[i]) * d,
              table->value.begin() + size_t(ids[i] + 1) * d, out->value.begin() + i * d);
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    out->backward_fn = [o, table, ids_copy, d] {
      for (size_t i = 0; i < ids_copy->size(); ++i) {
        double* tg = table->grad.data() + size_t((*ids_copy)[i]) * d;
        const double* go = o->grad.data() + i * d;
        for (int j = 0; j < d; ++j) tg[j] += go[j];
      }
    };
  }
  return out;
}

inline TensorPtr dropout(const TensorPtr& x, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return x;
  require(p < 1.0, "dropout probability must be < 1");
  auto out = op_result(x->shape, {x});
  auto mask = std::make_shared<std::vector<double>>(x->numel());
  double keep_scale = 1.0 / (1.0 - p);
  for (size_t i = 0; i < x->numel(); ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
    out->value[i] = x->value[i] * (*mask)[i];
  }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, mask] {
      for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i] * (*mask)[i];
    };
  }
  return out;
}

inline TensorPtr mean_all(const TensorPtr& x) {
  auto out = op_result({1}, {x});
  double acc = 0.0;
  for (double v : x->value) acc += v;
  size_t n = x->numel();
  out->value[0] = acc / double(n);
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, n] {
      double g = o->grad[0] / double(n);
      for (size_t i = 0; i < n; ++i) x->grad[i] += g;
    };
  }
  return out;
}

inline TensorPtr sum_all(const TensorPtr& x) {
  auto out = op_result({1}, {x});
  double acc = 0.0;
  for (double v : x->value) acc += v;
  out->value[0] = acc;
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x] {
      double g = o->grad[0];
      for (size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    };
  }
  return out;
}

// weighted mean with a per-row 0/1 validity mask over [..., D] rows
inline TensorPtr masked_mean(const TensorPtr& x, const std::vector<double>& row_mask) {
  int d = x->dim(-1);
  size_t rows = x->numel() / size_t(d);
  require(row_mask.size() == rows, "masked_mean: mask length mismatch");
  double denom = 0.0;
  for (double m : row_mask) denom += m;
  denom = std::max(denom * d, 1.0);
  auto out = op_result({1}, {x});
  double acc = 0.0;
  for (size_t r = 0; r < rows; ++r)
    if (row_mask[r] != 0.0)
      for (int j = 0; j < d; ++j) acc += x->value[r * d + j];
  out->value[0] = acc / denom;
  if (out->requires_grad) {
    Tensor* o = out.get();
    auto m = std::make_shared<std::vector<double>>(row_mask);
    out->backward_fn = [o, x, m, d, denom] {
      double g = o->grad[0] / denom;
      for (size_t r = 0; r < m->size(); ++r)
        if ((*m)[r] != 0.0)
          for (int j = 0; j < d; ++j) x->grad[r * d + j] += g;
    };
  }
  return out;
}

// mean negative log-softmax of the target class; target < 0 marks a padded
// frame that is excluded from the mean.
inline TensorPtr cross_entropy(const TensorPtr& logits, const std::vector<int>& targets) {
  int k = logits->dim(-1);
  size_t rows = logits->numel() / size_t(k);
  require(targets.size() == rows, "cross_entropy: target count mismatch");
  size_t valid = 0;
  for (int t : targets) {
    require(t < k, "cross_entropy: target ", t, " out of range [0,", k, ")");
    if (t >= 0) ++valid;
  }
  require(valid > 0, "cross_entropy: no valid targets");

  auto out = op_result({1}, {logits});
  auto probs = std::make_shared<std::vector<double>>(logits->numel());
  double total = 0.0;
  for (size_t r = 0; r < rows; ++r) {
    const double* lr = logits->value.data() + r * k;
    double* pr = probs->data() + r * k;
    double mx = -1e300;
    for (int j = 0; j < k; ++j) mx = std::max(mx, lr[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      pr[j] = std::exp(lr[j] - mx);
      sum += pr[j];
    }
    for (int j = 0; j < k; ++j) pr[j] /= sum;
    if (targets[r] >= 0) total -= std::log(std::max(pr[targets[r]], 1e-300));
  }
  out->value[0] = total / double(valid);
  if (out->requires_grad) {
    Tensor* o = out.get();
    auto tg = std::make_shared<std::vector<int>>(targets);
    out->backward_fn = [o, logits, probs, tg, k, valid, rows] {
      double g = o->grad[0] / double(valid);
      for (size_t r = 0; r < rows; ++r) {
        int t = (*tg)[r];
        if (t < 0) continue;
        const double* pr = probs->data() + r * k;
        double* lg = logits->grad.data() + r * k;
        for (int j = 0; j < k; ++j) lg[j] += g * (pr[j] - (j == t ? 1.0 : 0.0));
      }
    };
  }
  return out;
}

// ---- differentiable STFT magnitude (vocoder losses) ----
// x: [B, N] waveform; output [B, T, fft/2+1] with periodic-Hann window of
// length `win`, hop `hop`, frames fully inside the signal (no padding).
inline TensorPtr stft_mag(const TensorPtr& x, int fft_size, int hop, int win) {
  require(x->ndim() == 2, "stft_mag expects [B, N]");
  require(win <= fft_size, "stft_mag: window larger than FFT");
  int bsz = x->shape[0], n = x->shape[1];
  int t_frames = (n - win) / hop + 1;
  require(t_frames >= 1, "stft_mag: signal shorter than one window");
  int bins = fft_size / 2 + 1;

  auto plan = std::make_shared<signal::FftPlan>(fft_size);
  auto window = std::make_shared<std::vector<double>>(signal::hann_window(win));
  auto spec_re = std::make_shared<std::vector<double>>(size_t(bsz) * t_frames * bins);
  auto spec_im = std::make_shared<std::vector<double>>(size_t(bsz) * t_frames * bins);

  auto out = op_result({bsz, t_frames, bins}, {x});
  std::vector<double> frame(fft_size, 0.0);
  for (int i = 0; i < bsz; ++i)
    for (int tf = 0; tf < t_frames; ++tf) {
      const double* xr = x->value.data() + size_t(i) * n + size_t(tf) * hop;
      for (int j = 0; j < win; ++j) frame[j] = xr[j] * (*window)[j];
      for (int j = win; j < fft_size; ++j) frame[j] = 0.0;
      auto spec = plan->rfft(frame);
      size_t base = (size_t(i) * t_frames + tf) * bins;
      for (int kb = 0; kb < bins; ++kb) {
        (*spec_re)[base + kb] = spec[kb].real();
        (*spec_im)[base + kb] = spec[kb].imag();
        out->value[base + kb] = std::abs(spec[kb]);
      }
    }

  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, plan, window, spec_re, spec_im, bsz, n, t_frames, bins, fft_size,
                        hop, win] {
      // d|X| -> complex spectrum grad -> adjoint DFT -> windowed overlap-add
      std::vector<std::complex<double>> dspec(fft_size, 0.0);
      for (int i = 0; i < bsz; ++i)
        for (int tf = 0; tf < t_frames; ++tf) {
          size_t base = (size_t(i) * t_frames + tf) * bins;
          for (int kb = 0; kb < fft_size; ++kb) dspec[kb] = 0.0;
          for (int kb = 0; kb < bins; ++kb) {
            double mag = o->value[base + kb];
            double g = o->grad[base + kb];
            if (mag > 1e-12 && g != 0.0)
              dspec[kb] = {g * (*spec_re)[base + kb] / mag, g * (*spec_im)[base + kb] / mag};
          }
          // adjoint of the bins-0..N/2 DFT: dx = Re(N * ifft(zero-extended D))
          plan->inverse(dspec);
          double* xg = x->grad.data() + size_t(i) * n + size_t(tf) * hop;
          for (int j = 0; j < win; ++j)
            xg[j] += dspec[j].real() * double(fft_size) * (*window)[j];
        }
    };
  }
  return out;
}

// non-overlapping average pooling along the last dim of [B, N]
inline TensorPtr avg_pool1d(const TensorPtr& x, int k) {
  require(x->ndim() == 2 && k >= 1, "avg_pool1d expects [B, N]");
  int b = x->shape[0], n = x->shape[1];
  int n_out = n / k;
  require(n_out >= 1, "avg_pool1d: output empty");
  auto out = op_result({b, n_out}, {x});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < n_out; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += x->value[size_t(i) * n + j * k + t];
      out->value[size_t(i) * n_out + j] = acc / k;
    }
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, b, n, n_out, k] {
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < n_out; ++j) {
          double g = o->grad[size_t(i) * n_out + j] / k;
          for (int t = 0; t < k; ++t) x->grad[size_t(i) * n + j * k + t] += g;
        }
    };
  }
  return out;
}

// multiply by a constant matrix on the right: x [..., K] * m [K, D]
inline TensorPtr matmul_const(const TensorPtr& x, const std::shared_ptr<Mat>& m) {
  int k = x->dim(-1);
  require(m->rows == k, "matmul_const: inner dim mismatch");
  auto shape = x->shape;
  shape.back() = m->cols;
  auto out = op_result(shape, {x});
  size_t rows = x->numel() / size_t(k);
  opdetail::gemm_acc(x->value.data(), m->data.data(), out->value.data(), int(rows), k, m->cols);
  if (out->requires_grad) {
    Tensor* o = out.get();
    out->backward_fn = [o, x, m, rows, k] {
      opdetail::gemm_acc(o->grad.data(), m->data.data(), x->grad.data(), int(rows), m->cols, k,
                         false, true);
    };
  }
  return out;
}

}  // namespace l2s::nn
