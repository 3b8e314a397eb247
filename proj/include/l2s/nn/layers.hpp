#pragma once

#include <map>

#include "l2s/nn/ops.hpp"

namespace l2s::nn {

// Named parameter registry; the unit for optimization and checkpointing.
class ParamStore {
public:
  // uniform +-bound init (Kaiming-style when bound = 1/sqrt(fan_in))
  TensorPtr create(const std::string& name, std::vector<int> shape, Rng& rng, double bound) {
    require(!params_.count(name), "duplicate parameter name: ", name);
    auto t = make_tensor(std::move(shape), true);
    for (double& v : t->value) v = rng.uniform(-bound, bound);
    params_[name] = t;
    return t;
  }

  TensorPtr create_const(const std::string& name, std::vector<int> shape, double fill) {
    require(!params_.count(name), "duplicate parameter name: ", name);
    auto t = make_tensor(std::move(shape), true);
    std::fill(t->value.begin(), t->value.end(), fill);
    params_[name] = t;
    return t;
  }

  const std::map<std::string, TensorPtr>& all() const { return params_; }

  TensorPtr at(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), "no such parameter: ", name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, t] : params_) std::fill(t->grad.begin(), t->grad.end(), 0.0);
  }

  size_t total_params() const {
    size_t n = 0;
    for (const auto& [name, t] : params_) n += t->numel();
    return n;
  }

private:
  std::map<std::string, TensorPtr> params_;
};

struct Linear {
  TensorPtr w, b;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
    double bound = 1.0 / std::sqrt(double(in));
    w = ps.create(name + ".w", {in, out}, rng, bound);
    b = ps.create(name + ".b", {out}, rng, bound);
  }
  TensorPtr operator()(const TensorPtr& x) const { return linear(x, w, b); }
};

struct LayerNormLayer {
  TensorPtr gamma, beta;

  LayerNormLayer() = default;
  LayerNormLayer(ParamStore& ps, const std::string& name, int dim) {
    gamma = ps.create_const(name + ".gamma", {dim}, 1.0);
    beta = ps.create_const(name + ".beta", {dim}, 0.0);
  }
  TensorPtr operator()(const TensorPtr& x) const { return layer_norm(x, gamma, beta); }
};

struct Conv1dLayer {
  TensorPtr w, b;
  int pad = 0, dilation = 1;

  Conv1dLayer() = default;
  Conv1dLayer(ParamStore& ps, const std::string& name, int k, int cin, int cout, Rng& rng,
              int pad_ = 0, int dilation_ = 1)
      : pad(pad_), dilation(dilation_) {
    double bound = 1.0 / std::sqrt(double(k) * cin);
    w = ps.create(name + ".w", {k, cin, cout}, rng, bound);
    b = ps.create(name + ".b", {cout}, rng, bound);
  }
  TensorPtr operator()(const TensorPtr& x) const { return conv1d(x, w, b, pad, dilation); }
};

struct ConvT1dLayer {
  TensorPtr w, b;
  int stride = 1, pad = 0;

  ConvT1dLayer() = default;
  ConvT1dLayer(ParamStore& ps, const std::string& name, int k, int cin, int cout, Rng& rng,
               int stride_, int pad_)
      : stride(stride_), pad(pad_) {
    double bound = 1.0 / std::sqrt(double(k) * cin / double(stride_));
    w = ps.create(name + ".w", {k, cin, cout}, rng, bound);
    b = ps.create(name + ".b", {cout}, rng, bound);
  }
  TensorPtr operator()(const TensorPtr& x) const {
    return conv_transpose1d(x, w, b, stride, pad);
  }
};

struct Conv2dLayer {
  TensorPtr w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& name, int k, int cin, int cout, Rng& rng,
              int stride_, int pad_)
      : stride(stride_), pad(pad_) {
    double bound = 1.0 / std::sqrt(double(k) * k * cin);
    w = ps.create(name + ".w", {k, k, cin, cout}, rng, bound);
    b = ps.create(name + ".b", {cout}, rng, bound);
  }
  TensorPtr operator()(const TensorPtr& x) const { return conv2d(x, w, b, stride, pad); }
};

struct EmbeddingLayer {
  TensorPtr table;

  EmbeddingLayer() = default;
  EmbeddingLayer(ParamStore& ps, const std::string& name, int vocab, int dim, Rng& rng) {
    table = ps.create(name + ".table", {vocab, dim}, rng, 1.0 / std::sqrt(double(dim)));
  }
  TensorPtr operator()(const std::vector<int>& ids, std::vector<int> leading) const {
    return embedding(ids, table, std::move(leading));
  }
};

// sinusoidal positions added to [B, T, D]
inline TensorPtr add_positional_encoding(const TensorPtr& x) {
  require(x->ndim() == 3, "positional encoding expects [B, T, D]");
  int b = x->shape[0], t = x->shape[1], d = x->shape[2];
  auto pe = make_tensor({b, t, d});
  for (int j = 0; j < t; ++j)
    for (int c = 0; c < d; ++c) {
      double angle = j / std::pow(10000.0, 2.0 * (c / 2) / double(d));
      double v = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
      for (int i = 0; i < b; ++i) pe->value[(size_t(i) * t + j) * d + c] = v;
    }
  return add(x, pe);
}

// Pre-norm multi-head self-attention with an additive key mask
// (mask[b*T + t] = 0 for valid, -1e30 for padding).
struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 4;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& name, int dim, int heads_, Rng& rng)
      : wq(ps, name + ".q", dim, dim, rng),
        wk(ps, name + ".k", dim, dim, rng),
        wv(ps, name + ".v", dim, dim, rng),
        wo(ps, name + ".o", dim, dim, rng),
        heads(heads_) {
    require(dim % heads_ == 0, "attention dim not divisible by heads");
  }

  TensorPtr operator()(const TensorPtr& x,
                       const std::shared_ptr<std::vector<double>>& key_mask) const {
    int b = x->shape[0], t = x->shape[1], d = x->shape[2];
    int dh = d / heads;
    auto q = split_heads(wq(x), heads);  // [B,H,T,dh]
    auto k = split_heads(wk(x), heads);
    auto v = split_heads(wv(x), heads);
    auto scores = scale(batched_matmul(q, k, /*trans_b=*/true), 1.0 / std::sqrt(double(dh)));
    // one mask row of width T per batch element, reused across heads and queries
    auto attn = softmax_lastdim(scores, key_mask, size_t(heads) * t);
    auto ctx = batched_matmul(attn, v);  // [B,H,T,dh]
    (void)b;
    return wo(merge_heads(ctx));
  }
};

struct FeedForward {
  Linear in, out;
  double dropout_p = 0.0;

  FeedForward() = default;
  FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng,
              double dropout_p_ = 0.0)
      : in(ps, name + ".in", dim, hidden, rng),
        out(ps, name + ".out", hidden, dim, rng),
        dropout_p(dropout_p_) {}

  TensorPtr operator()(const TensorPtr& x, Rng& rng, bool train) const {
    return out(dropout(silu(in(x)), dropout_p, rng, train));
  }
};

// Conformer convolution module: LN replaces batch norm so behavior is
// batch-size independent and deterministic.
struct ConformerConv {
  LayerNormLayer pre_norm;
  Linear pointwise_in;   // dim -> 2*dim, gated by GLU
  TensorPtr dw_kernel;   // [K, dim]
  LayerNormLayer mid_norm;
  Linear pointwise_out;
  int pad = 0;
  double dropout_p = 0.0;

  ConformerConv() = default;
  ConformerConv(ParamStore& ps, const std::string& name, int dim, int kernel, Rng& rng,
                double dropout_p_)
      : pre_norm(ps, name + ".norm", dim),
        pointwise_in(ps, name + ".pw_in", dim, 2 * dim, rng),
        mid_norm(ps, name + ".mid_norm", dim),
        pointwise_out(ps, name + ".pw_out", dim, dim, rng),
        pad((kernel - 1) / 2),
        dropout_p(dropout_p_) {
    require(kernel % 2 == 1, "conformer conv kernel must be odd");
    dw_kernel = ps.create(name + ".dw", {kernel, dim}, rng, 1.0 / std::sqrt(double(kernel)));
  }

  TensorPtr operator()(const TensorPtr& x, Rng& rng, bool train,
                       const std::vector<double>& time_mask) const {
    auto h = glu(pointwise_in(pre_norm(x)));
    if (!time_mask.empty()) h = mul_time_mask(h, time_mask);  // padding stays zero
    h = depthwise_conv1d(h, dw_kernel, pad);
    h = silu(mid_norm(h));
    return dropout(pointwise_out(h), dropout_p, rng, train);
  }
};

// FFN/2 + MHSA + conv + FFN/2 with pre-norm half-step residuals.
struct ConformerBlock {
  LayerNormLayer norm_ff1, norm_attn, norm_ff2, norm_final;
  FeedForward ff1, ff2;
  MultiHeadAttention attn;
  ConformerConv conv;
  double dropout_p = 0.0;

  ConformerBlock() = default;
  ConformerBlock(ParamStore& ps, const std::string& name, int dim, int heads, int conv_kernel,
                 Rng& rng, double dropout_p_)
      : norm_ff1(ps, name + ".norm_ff1", dim),
        norm_attn(ps, name + ".norm_attn", dim),
        norm_ff2(ps, name + ".norm_ff2", dim),
        norm_final(ps, name + ".norm_final", dim),
        ff1(ps, name + ".ff1", dim, 4 * dim, rng, dropout_p_),
        ff2(ps, name + ".ff2", dim, 4 * dim, rng, dropout_p_),
        attn(ps, name + ".attn", dim, heads, rng),
        conv(ps, name + ".conv", dim, conv_kernel, rng, dropout_p_),
        dropout_p(dropout_p_) {}

  TensorPtr operator()(const TensorPtr& x_in, Rng& rng, bool train,
                       const std::shared_ptr<std::vector<double>>& key_mask,
                       const std::vector<double>& time_mask) const {
    auto x = add(x_in, scale(ff1(norm_ff1(x_in), rng, train), 0.5));
    x = add(x, dropout(attn(norm_attn(x), key_mask), dropout_p, rng, train));
    x = add(x, conv(x, rng, train, time_mask));
    x = add(x, scale(ff2(norm_ff2(x), rng, train), 0.5));
    x = norm_final(x);
    if (!time_mask.empty()) x = mul_time_mask(x, time_mask);
    return x;
  }
};

}  // namespace l2s::nn
