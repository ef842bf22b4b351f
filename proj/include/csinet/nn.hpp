#pragma once

#include <map>
#include <string>

#include "csinet/autodiff.hpp"

namespace csinet::ad {

// ---- convolution ----

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; cross-correlation with zero
// padding, implemented via per-sample im2col and Eigen GEMM.
template <class S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride = 1, int pad = 0) {
  if (x->value.ndims() != 4 || w->value.ndims() != 4) throw DimensionError("conv2d: need 4-d tensors");
  const int N = x->value.dim(0), Cin = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
  const int Cout = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
  if (w->value.dim(1) != Cin) throw DimensionError("conv2d: channel mismatch");
  if (b->value.numel() != static_cast<std::size_t>(Cout)) throw DimensionError("conv2d: bias mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho < 1 || Wo < 1) throw DimensionError("conv2d: kernel larger than padded input");
  const int CKK = Cin * kh * kw;
  const std::size_t plane = static_cast<std::size_t>(Ho) * Wo;

  auto col = std::make_shared<Tensor<S>>(std::vector<int>{N, CKK, Ho * Wo});
  for (int n = 0; n < N; ++n) {
    S* cp = col->data.data() + static_cast<std::size_t>(n) * CKK * plane;
    const S* xp = x->value.data.data() + static_cast<std::size_t>(n) * Cin * H * W;
    for (int c = 0; c < Cin; ++c)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) {
          S* row = cp + (static_cast<std::size_t>(c) * kh * kw + i * kw + j) * plane;
          for (int oh = 0; oh < Ho; ++oh) {
            const int ih = oh * stride + i - pad;
            for (int ow = 0; ow < Wo; ++ow) {
              const int iw = ow * stride + j - pad;
              row[oh * Wo + ow] = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                      ? xp[(static_cast<std::size_t>(c) * H + ih) * W + iw]
                                      : S(0);
            }
          }
        }
  }

  Tensor<S> out({N, Cout, Ho, Wo});
  using Map = typename Tensor<S>::EigenMap;
  using CMap = typename Tensor<S>::ConstEigenMap;
  CMap wm(w->value.data.data(), Cout, CKK);
  for (int n = 0; n < N; ++n) {
    CMap cm(col->data.data() + static_cast<std::size_t>(n) * CKK * plane, CKK, Ho * Wo);
    Map om(out.data.data() + static_cast<std::size_t>(n) * Cout * plane, Cout, Ho * Wo);
    om.noalias() = wm * cm;
  }
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < Cout; ++c) {
      S* op = out.data.data() + (static_cast<std::size_t>(n) * Cout + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) op[i] += b->value[c];
    }

  return make_op<S>(std::move(out), {x, w, b},
                    [x, w, b, col, N, Cin, H, W, Cout, kh, kw, Ho, Wo, CKK, plane, stride,
                     pad](Node<S>& n) {
    using M = typename Tensor<S>::EigenMap;
    using CM = typename Tensor<S>::ConstEigenMap;
    if (b->requires_grad) {
      b->ensure_grad();
      for (int s = 0; s < N; ++s)
        for (int c = 0; c < Cout; ++c) {
          const S* gp = n.grad.data.data() + (static_cast<std::size_t>(s) * Cout + c) * plane;
          S acc = S(0);
          for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
          b->grad[c] += acc;
        }
    }
    if (w->requires_grad) {
      w->ensure_grad();
      M wg(w->grad.data.data(), Cout, CKK);
      for (int s = 0; s < N; ++s) {
        CM g(n.grad.data.data() + static_cast<std::size_t>(s) * Cout * plane, Cout, Ho * Wo);
        CM cm(col->data.data() + static_cast<std::size_t>(s) * CKK * plane, CKK, Ho * Wo);
        wg.noalias() += g * cm.transpose();
      }
    }
    if (x->requires_grad) {
      x->ensure_grad();
      CM wm(w->value.data.data(), Cout, CKK);
      Tensor<S> dcol({CKK, Ho * Wo});
      for (int s = 0; s < N; ++s) {
        CM g(n.grad.data.data() + static_cast<std::size_t>(s) * Cout * plane, Cout, Ho * Wo);
        M dc(dcol.data.data(), CKK, Ho * Wo);
        dc.noalias() = wm.transpose() * g;
        S* xg = x->grad.data.data() + static_cast<std::size_t>(s) * Cin * H * W;
        for (int c = 0; c < Cin; ++c)
          for (int i = 0; i < kh; ++i)
            for (int j = 0; j < kw; ++j) {
              const S* row = dcol.data.data() + (static_cast<std::size_t>(c) * kh * kw + i * kw + j) * plane;
              for (int oh = 0; oh < Ho; ++oh) {
                const int ih = oh * stride + i - pad;
                if (ih < 0 || ih >= H) continue;
                for (int ow = 0; ow < Wo; ++ow) {
                  const int iw = ow * stride + j - pad;
                  if (iw < 0 || iw >= W) continue;
                  xg[(static_cast<std::size_t>(c) * H + ih) * W + iw] += row[oh * Wo + ow];
                }
              }
            }
      }
    }
  });
}

// ---- batch normalization ----

template <class S>
struct BatchNormState {
  Tensor<S> running_mean;
  Tensor<S> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(Tensor<S>::zeros({channels})), running_var(Tensor<S>::full({channels}, S(1))) {}
};

// Per-channel standardization over (N, H, W) with learned scale/shift.
template <class S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta,
                  BatchNormState<S>& state, bool training, S momentum = S(0.1), S eps = S(1e-5)) {
  const int N = x->value.dim(0), C = x->value.dim(1);
  const std::size_t plane = x->value.numel() / (static_cast<std::size_t>(N) * C);
  if (training && N < 2) throw ConfigError("batch_norm: training mode needs batch >= 2");
  const std::size_t per_chan = static_cast<std::size_t>(N) * plane;

  Tensor<S> mean({C}), var({C});
  if (training) {
    for (int c = 0; c < C; ++c) {
      S mu = S(0);
      for (int s = 0; s < N; ++s) {
        const S* p = x->value.data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) mu += p[i];
      }
      mu /= static_cast<S>(per_chan);
      S v = S(0);
      for (int s = 0; s < N; ++s) {
        const S* p = x->value.data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - mu) * (p[i] - mu);
      }
      v /= static_cast<S>(per_chan);
      mean[c] = mu;
      var[c] = v;
      state.running_mean[c] = (S(1) - momentum) * state.running_mean[c] + momentum * mu;
      state.running_var[c] = (S(1) - momentum) * state.running_var[c] + momentum * v;
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor<S> invstd({C});
  for (int c = 0; c < C; ++c) invstd[c] = S(1) / std::sqrt(var[c] + eps);

  Tensor<S> out = x->value;
  auto xhat = std::make_shared<Tensor<S>>(x->value.shape);
  for (int s = 0; s < N; ++s)
    for (int c = 0; c < C; ++c) {
      S* op = out.data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
      S* xh = xhat->data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (op[i] - mean[c]) * invstd[c];
        op[i] = gamma->value[c] * xh[i] + beta->value[c];
      }
    }

  return make_op<S>(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, xhat, invstd = std::move(invstd), N, C, plane, per_chan,
                     training](Node<S>& n) {
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    if (x->requires_grad) x->ensure_grad();
    for (int c = 0; c < C; ++c) {
      S sum_gy = S(0), sum_gy_xh = S(0);
      for (int s = 0; s < N; ++s) {
        const S* gy = n.grad.data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
        const S* xh = xhat->data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_gy += gy[i];
          sum_gy_xh += gy[i] * xh[i];
        }
      }
      if (gamma->requires_grad) gamma->grad[c] += sum_gy_xh;
      if (beta->requires_grad) beta->grad[c] += sum_gy;
      if (x->requires_grad) {
        const S g = gamma->value[c];
        const S is = invstd[c];
        for (int s = 0; s < N; ++s) {
          const S* gy = n.grad.data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
          const S* xh = xhat->data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
          S* gx = x->grad.data.data() + (static_cast<std::size_t>(s) * C + c) * plane;
          if (training) {
            const S inv_m = S(1) / static_cast<S>(per_chan);
            for (std::size_t i = 0; i < plane; ++i)
              gx[i] += g * is * (gy[i] - inv_m * sum_gy - xh[i] * inv_m * sum_gy_xh);
          } else {
            for (std::size_t i = 0; i < plane; ++i) gx[i] += g * is * gy[i];
          }
        }
      }
    }
  });
}

// ---- attention and transformer ----

template <class S>
struct AttentionParams {
  Var<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <class S>
Var<S> multi_head_attention(const Var<S>& x, const AttentionParams<S>& p, int n_heads) {
  const int B = x->value.dim(0), L = x->value.dim(1), D = x->value.dim(2);
  if (D % n_heads != 0) throw ConfigError("attention: d_m must be divisible by n_heads");
  const int dh = D / n_heads;
  auto split = [&](const Var<S>& t) {
    return reshape(permute(reshape(t, {B, L, n_heads, dh}), {0, 2, 1, 3}), {B * n_heads, L, dh});
  };
  Var<S> q = split(linear(x, p.wq, p.bq));
  Var<S> k = split(linear(x, p.wk, p.bk));
  Var<S> v = split(linear(x, p.wv, p.bv));
  Var<S> scores = scale(bmm(q, k, false, true), static_cast<S>(1.0 / std::sqrt(double(dh))));
  Var<S> attn = softmax_lastdim(scores);
  Var<S> ctx = bmm(attn, v);
  Var<S> merged = reshape(permute(reshape(ctx, {B, n_heads, L, dh}), {0, 2, 1, 3}), {B, L, D});
  return linear(merged, p.wo, p.bo);
}

template <class S>
struct TransformerLayerParams {
  Var<S> ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionParams<S> attn;
  Var<S> ff_w1, ff_b1, ff_w2, ff_b2;
};

/// Pre-norm residual block: x + MHSA(LN(x)), then + FFN(LN(.)).
template <class S>
Var<S> transformer_layer(const Var<S>& x, const TransformerLayerParams<S>& p, int n_heads) {
  Var<S> h = add(x, multi_head_attention(layer_norm(x, p.ln1_g, p.ln1_b), p.attn, n_heads));
  Var<S> f = linear(gelu(linear(layer_norm(h, p.ln2_g, p.ln2_b), p.ff_w1, p.ff_b1)), p.ff_w2, p.ff_b2);
  return add(h, f);
}

// ---- parameter store ----

template <class S>
class ParameterStore {
 public:
  struct Entry {
    Var<S> var;
    std::string group;
    bool frozen = false;
  };

  Var<S> create(const std::string& name, Tensor<S> init, const std::string& group) {
    if (entries_.count(name)) throw ConfigError("parameter already exists: " + name);
    Var<S> v = make_var<S>(std::move(init), true);
    entries_[name] = Entry{v, group, false};
    order_.push_back(name);
    return v;
  }

  Var<S> get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second.var;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  void set_group_frozen(const std::string& group, bool frozen) {
    for (auto& [name, e] : entries_)
      if (e.group == group) {
        e.frozen = frozen;
        e.var->requires_grad = !frozen;
      }
  }

  void zero_grads() {
    for (auto& [name, e] : entries_) {
      e.var->ensure_grad();
      std::fill(e.var->grad.data.begin(), e.var->grad.data.end(), S(0));
    }
  }

  const std::vector<std::string>& names() const { return order_; }
  Entry& entry(const std::string& name) { return entries_.at(name); }
  const Entry& entry(const std::string& name) const { return entries_.at(name); }

  std::size_t count_in_group(const std::string& group) const {
    std::size_t n = 0;
    for (const auto& name : order_)
      if (entries_.at(name).group == group) n += entries_.at(name).var->value.numel();
    return n;
  }

 private:
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

// ---- finite-difference gradient checker ----

// Compares reverse-mode gradients of a scalar-valued rebuildable function
// against central differences on randomly probed parameter coordinates.
template <class S>
double grad_check(const std::function<Var<S>()>& loss_fn, const std::vector<Var<S>>& params,
                  int probe_count, Rng& rng, double step = 1e-5) {
  for (const auto& p : params) {
    p->ensure_grad();
    std::fill(p->grad.data.begin(), p->grad.data.end(), S(0));
  }
  Var<S> loss = loss_fn();
  backward(loss);
  double max_rel = 0.0;
  for (int probe = 0; probe < probe_count; ++probe) {
    const auto& p = params[rng.below(params.size())];
    if (p->value.numel() == 0) continue;
    const std::size_t idx = rng.below(p->value.numel());
    const double analytic = p->requires_grad ? static_cast<double>(p->grad[idx]) : 0.0;
    const S saved = p->value[idx];
    p->value[idx] = saved + static_cast<S>(step);
    const double lp = static_cast<double>(loss_fn()->value[0]);
    p->value[idx] = saved - static_cast<S>(step);
    const double lm = static_cast<double>(loss_fn()->value[0]);
    p->value[idx] = saved;
    if (!std::isfinite(lp) || !std::isfinite(lm)) throw NumericalError("grad_check: non-finite probe");
    const double fd = p->requires_grad ? (lp - lm) / (2.0 * step) : 0.0;
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-6});
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace csinet::ad
