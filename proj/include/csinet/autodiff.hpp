#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <unordered_set>
#include <vector>

#include "csinet/tensor.hpp"

namespace csinet::ad {

template <class S>
struct Node;

template <class S>
using Var = std::shared_ptr<Node<S>>;

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<Var<S>> parents;
  std::function<void(Node<S>&)> backward_fn;

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor<S>::zeros(value.shape);
  }
};

template <class S>
Var<S> make_var(Tensor<S> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <class S>
Var<S> make_op(Tensor<S> value, std::vector<Var<S>> parents,
               std::function<void(Node<S>&)> backward_fn) {
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

// Reverse-mode sweep from a scalar root.
template <class S>
void backward(const Var<S>& root) {
  if (root->value.numel() != 1) throw DimensionError("backward: root must be scalar");
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, std::size_t>> stack{{root.get(), 0}};
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i == 0 && seen.count(n)) {
      stack.pop_back();
      continue;
    }
    if (i < n->parents.size()) {
      Node<S>* p = n->parents[i++].get();
      if (!seen.count(p)) stack.push_back({p, 0});
    } else {
      seen.insert(n);
      order.push_back(n);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.data[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

// ---- elementwise ----

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  if (!a->value.same_shape(b->value)) throw DimensionError("add: shape mismatch");
  Tensor<S> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
  return make_op<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i];
    }
  });
}

template <class S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  if (!a->value.same_shape(b->value)) throw DimensionError("mul: shape mismatch");
  Tensor<S> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
  return make_op<S>(std::move(out), {a, b}, [a, b](Node<S>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * b->value[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    }
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S c) {
  Tensor<S> out = a->value;
  for (S& v : out.data) v *= c;
  return make_op<S>(std::move(out), {a}, [a, c](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * c;
  });
}

// Elementwise multiply by a constant mask; no gradient flows into the mask.
template <class S>
Var<S> mask_mul(const Var<S>& a, const Tensor<S>& mask) {
  if (!a->value.same_shape(mask)) throw DimensionError("mask_mul: shape mismatch");
  Tensor<S> out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  Tensor<S> m = mask;
  return make_op<S>(std::move(out), {a}, [a, m = std::move(m)](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * m[i];
  });
}

template <class S>
Var<S> leaky_relu(const Var<S>& a, S slope = S(0.3)) {
  Tensor<S> out = a->value;
  for (S& v : out.data) v = v >= S(0) ? v : slope * v;
  return make_op<S>(std::move(out), {a}, [a, slope](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i)
      a->grad[i] += n.grad[i] * (a->value[i] >= S(0) ? S(1) : slope);
  });
}

template <class S>
Var<S> gelu(const Var<S>& a) {
  const S k = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
  const S c = static_cast<S>(0.044715);
  Tensor<S> out = a->value;
  for (S& v : out.data) {
    S u = k * (v + c * v * v * v);
    v = S(0.5) * v * (S(1) + std::tanh(u));
  }
  return make_op<S>(std::move(out), {a}, [a, k, c](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) {
      S x = a->value[i];
      S u = k * (x + c * x * x * x);
      S t = std::tanh(u);
      S d = S(0.5) * (S(1) + t) + S(0.5) * x * (S(1) - t * t) * k * (S(1) + S(3) * c * x * x);
      a->grad[i] += n.grad[i] * d;
    }
  });
}

// ---- shape ops ----

template <class S>
Var<S> reshape(const Var<S>& a, std::vector<int> shp) {
  if (Tensor<S>::numel_of(shp) != a->value.numel()) throw DimensionError("reshape: numel mismatch");
  Tensor<S> out = a->value;
  out.shape = shp;
  return make_op<S>(std::move(out), {a}, [a](Node<S>& n) {
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
  });
}

namespace detail {

inline std::vector<std::size_t> strides_of(const std::vector<int>& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    s[i] = s[i + 1] * static_cast<std::size_t>(shape[i + 1]);
  return s;
}

}  // namespace detail

// out axis d takes input axis perm[d].
template <class S>
Var<S> permute(const Var<S>& a, std::vector<int> perm) {
  if (static_cast<int>(perm.size()) != a->value.ndims()) throw DimensionError("permute: rank mismatch");
  std::vector<int> out_shape(perm.size());
  for (std::size_t d = 0; d < perm.size(); ++d) out_shape[d] = a->value.shape[perm[d]];
  Tensor<S> out(out_shape);
  // forward: out[j] = a[perm applied]; implemented as scatter from input order
  {
    const auto in_strides = detail::strides_of(a->value.shape);
    const auto out_strides = detail::strides_of(out_shape);
    std::vector<int> inv(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) inv[perm[d]] = static_cast<int>(d);
    std::vector<int> idx(perm.size(), 0);
    for (std::size_t flat = 0; flat < a->value.numel(); ++flat) {
      std::size_t rem = flat, out_off = 0;
      for (std::size_t d = 0; d < perm.size(); ++d) {
        idx[d] = static_cast<int>(rem / in_strides[d]);
        rem %= in_strides[d];
      }
      for (std::size_t d = 0; d < perm.size(); ++d)
        out_off += static_cast<std::size_t>(idx[d]) * out_strides[inv[d]];
      out.data[out_off] = a->value.data[flat];
    }
  }
  return make_op<S>(std::move(out), {a}, [a, perm](Node<S>& n) {
    a->ensure_grad();
    const auto in_strides = detail::strides_of(a->value.shape);
    const auto out_strides = detail::strides_of(n.value.shape);
    std::vector<int> inv(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) inv[perm[d]] = static_cast<int>(d);
    std::vector<int> idx(perm.size(), 0);
    for (std::size_t flat = 0; flat < a->value.numel(); ++flat) {
      std::size_t rem = flat, out_off = 0;
      for (std::size_t d = 0; d < perm.size(); ++d) {
        idx[d] = static_cast<int>(rem / in_strides[d]);
        rem %= in_strides[d];
      }
      for (std::size_t d = 0; d < perm.size(); ++d)
        out_off += static_cast<std::size_t>(idx[d]) * out_strides[inv[d]];
      a->grad.data[flat] += n.grad.data[out_off];
    }
  });
}

template <class S>
Var<S> concat(const Var<S>& a, const Var<S>& b, int axis) {
  if (a->value.ndims() != b->value.ndims()) throw DimensionError("concat: rank mismatch");
  for (int d = 0; d < a->value.ndims(); ++d)
    if (d != axis && a->value.shape[d] != b->value.shape[d])
      throw DimensionError("concat: shape mismatch off-axis");
  std::vector<int> out_shape = a->value.shape;
  out_shape[axis] += b->value.shape[axis];
  Tensor<S> out(out_shape);
  std::size_t outer = 1, a_inner = 1, b_inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a->value.shape[d]);
  for (int d = axis; d < a->value.ndims(); ++d) {
    a_inner *= static_cast<std::size_t>(a->value.shape[d]);
    b_inner *= static_cast<std::size_t>(b->value.shape[d]);
  }
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a->value.data.begin() + o * a_inner, a_inner,
                out.data.begin() + o * (a_inner + b_inner));
    std::copy_n(b->value.data.begin() + o * b_inner, b_inner,
                out.data.begin() + o * (a_inner + b_inner) + a_inner);
  }
  return make_op<S>(std::move(out), {a, b}, [a, b, outer, a_inner, b_inner](Node<S>& n) {
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      if (a->requires_grad)
        for (std::size_t i = 0; i < a_inner; ++i)
          a->grad.data[o * a_inner + i] += n.grad.data[o * (a_inner + b_inner) + i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < b_inner; ++i)
          b->grad.data[o * b_inner + i] += n.grad.data[o * (a_inner + b_inner) + a_inner + i];
    }
  });
}

template <class S>
Var<S> slice(const Var<S>& a, int axis, int start, int len) {
  if (start < 0 || start + len > a->value.shape[axis]) throw DimensionError("slice: out of range");
  std::vector<int> out_shape = a->value.shape;
  out_shape[axis] = len;
  Tensor<S> out(out_shape);
  std::size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<std::size_t>(a->value.shape[d]);
  for (int d = axis + 1; d < a->value.ndims(); ++d) inner *= static_cast<std::size_t>(a->value.shape[d]);
  const std::size_t in_axis = static_cast<std::size_t>(a->value.shape[axis]);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(a->value.data.begin() + (o * in_axis + start) * inner,
                static_cast<std::size_t>(len) * inner, out.data.begin() + o * len * inner);
  return make_op<S>(std::move(out), {a, }, [a, axis, start, len, outer, inner](Node<S>& n) {
    a->ensure_grad();
    const std::size_t in_axis = static_cast<std::size_t>(a->value.shape[axis]);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < static_cast<std::size_t>(len) * inner; ++i)
        a->grad.data[(o * in_axis + start) * inner + i] += n.grad.data[o * len * inner + i];
  });
}

// Replicates a [1, ...] tensor along axis 0; gradient sums over replicas.
template <class S>
Var<S> tile0(const Var<S>& a, int count) {
  if (a->value.shape[0] != 1) throw DimensionError("tile0: leading dim must be 1");
  std::vector<int> out_shape = a->value.shape;
  out_shape[0] = count;
  Tensor<S> out(out_shape);
  const std::size_t inner = a->value.numel();
  for (int r = 0; r < count; ++r)
    std::copy_n(a->value.data.begin(), inner, out.data.begin() + static_cast<std::size_t>(r) * inner);
  return make_op<S>(std::move(out), {a}, [a, count, inner](Node<S>& n) {
    a->ensure_grad();
    for (int r = 0; r < count; ++r)
      for (std::size_t i = 0; i < inner; ++i)
        a->grad.data[i] += n.grad.data[static_cast<std::size_t>(r) * inner + i];
  });
}

// x [outer, rest] + p [rest] broadcast over the leading axis.
template <class S>
Var<S> add_broadcast(const Var<S>& x, const Var<S>& p) {
  const std::size_t inner = p->value.numel();
  if (x->value.numel() % inner != 0) throw DimensionError("add_broadcast: trailing size mismatch");
  const std::size_t outer = x->value.numel() / inner;
  Tensor<S> out = x->value;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] += p->value.data[i];
  return make_op<S>(std::move(out), {x, p}, [x, p, outer, inner](Node<S>& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (std::size_t i = 0; i < n.grad.numel(); ++i) x->grad[i] += n.grad[i];
    }
    if (p->requires_grad) {
      p->ensure_grad();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) p->grad.data[i] += n.grad.data[o * inner + i];
    }
  });
}

// ---- matrix ops ----

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a->value.ndims() != 2 || b->value.ndims() != 2 || a->value.dim(1) != b->value.dim(0))
    throw DimensionError("matmul: incompatible shapes");
  const int m = a->value.dim(0), k = a->value.dim(1), n_ = b->value.dim(1);
  Tensor<S> out({m, n_});
  out.as_matrix(m, n_).noalias() = a->value.as_matrix(m, k) * b->value.as_matrix(k, n_);
  return make_op<S>(std::move(out), {a, b}, [a, b, m, k, n_](Node<S>& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad.as_matrix(m, k).noalias() +=
          n.grad.as_matrix(m, n_) * b->value.as_matrix(k, n_).transpose();
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad.as_matrix(k, n_).noalias() +=
          a->value.as_matrix(m, k).transpose() * n.grad.as_matrix(m, n_);
    }
  });
}

// Batched matmul over leading dim: a [B, m, k] (or [B, k, m] with ta),
// b [B, k, n] (or [B, n, k] with tb).
template <class S>
Var<S> bmm(const Var<S>& a, const Var<S>& b, bool ta = false, bool tb = false) {
  if (a->value.ndims() != 3 || b->value.ndims() != 3 || a->value.dim(0) != b->value.dim(0))
    throw DimensionError("bmm: need [B,*,*] inputs");
  const int B = a->value.dim(0);
  const int m = ta ? a->value.dim(2) : a->value.dim(1);
  const int k = ta ? a->value.dim(1) : a->value.dim(2);
  const int kb = tb ? b->value.dim(2) : b->value.dim(1);
  const int n_ = tb ? b->value.dim(1) : b->value.dim(2);
  if (k != kb) throw DimensionError("bmm: inner dims mismatch");
  Tensor<S> out({B, m, n_});
  const std::size_t as = static_cast<std::size_t>(a->value.dim(1)) * a->value.dim(2);
  const std::size_t bs = static_cast<std::size_t>(b->value.dim(1)) * b->value.dim(2);
  const std::size_t os = static_cast<std::size_t>(m) * n_;
  using Map = typename Tensor<S>::EigenMap;
  using CMap = typename Tensor<S>::ConstEigenMap;
  for (int i = 0; i < B; ++i) {
    CMap am(a->value.data.data() + i * as, a->value.dim(1), a->value.dim(2));
    CMap bm(b->value.data.data() + i * bs, b->value.dim(1), b->value.dim(2));
    Map om(out.data.data() + i * os, m, n_);
    if (!ta && !tb)
      om.noalias() = am * bm;
    else if (ta && !tb)
      om.noalias() = am.transpose() * bm;
    else if (!ta && tb)
      om.noalias() = am * bm.transpose();
    else
      om.noalias() = am.transpose() * bm.transpose();
  }
  return make_op<S>(std::move(out), {a, b}, [a, b, ta, tb, B, m, n_, as, bs, os](Node<S>& n) {
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (int i = 0; i < B; ++i) {
      CMap g(n.grad.data.data() + i * os, m, n_);
      CMap am(a->value.data.data() + i * as, a->value.dim(1), a->value.dim(2));
      CMap bm(b->value.data.data() + i * bs, b->value.dim(1), b->value.dim(2));
      if (a->requires_grad) {
        Map ag(a->grad.data.data() + i * as, a->value.dim(1), a->value.dim(2));
        if (!ta && !tb)
          ag.noalias() += g * bm.transpose();
        else if (!ta && tb)
          ag.noalias() += g * bm;
        else if (ta && !tb)
          ag.noalias() += bm * g.transpose();
        else
          ag.noalias() += bm.transpose() * g.transpose();
      }
      if (b->requires_grad) {
        Map bg(b->grad.data.data() + i * bs, b->value.dim(1), b->value.dim(2));
        if (!ta && !tb)
          bg.noalias() += am.transpose() * g;
        else if (ta && !tb)
          bg.noalias() += am * g;
        else if (!ta && tb)
          bg.noalias() += g.transpose() * am;
        else
          bg.noalias() += g.transpose() * am.transpose();
      }
    }
  });
}

// x [..., d_in] * W [d_in, d_out] + b [d_out]
template <class S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const int d_in = w->value.dim(0), d_out = w->value.dim(1);
  if (x->value.shape.back() != d_in) throw DimensionError("linear: input width mismatch");
  if (b->value.numel() != static_cast<std::size_t>(d_out)) throw DimensionError("linear: bias width mismatch");
  const int rows = static_cast<int>(x->value.numel()) / d_in;
  std::vector<int> out_shape = x->value.shape;
  out_shape.back() = d_out;
  Tensor<S> out(out_shape);
  out.as_matrix(rows, d_out).noalias() = x->value.as_matrix(rows, d_in) * w->value.as_matrix(d_in, d_out);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < d_out; ++c) out.data[static_cast<std::size_t>(r) * d_out + c] += b->value[c];
  return make_op<S>(std::move(out), {x, w, b}, [x, w, b, rows, d_in, d_out](Node<S>& n) {
    auto g = n.grad.as_matrix(rows, d_out);
    if (x->requires_grad) {
      x->ensure_grad();
      x->grad.as_matrix(rows, d_in).noalias() += g * w->value.as_matrix(d_in, d_out).transpose();
    }
    if (w->requires_grad) {
      w->ensure_grad();
      w->grad.as_matrix(d_in, d_out).noalias() += x->value.as_matrix(rows, d_in).transpose() * g;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < d_out; ++c) b->grad[c] += n.grad.data[static_cast<std::size_t>(r) * d_out + c];
    }
  });
}

// ---- normalization and softmax ----

template <class S>
Var<S> softmax_lastdim(const Var<S>& x) {
  const int d = x->value.shape.back();
  const int rows = static_cast<int>(x->value.numel()) / d;
  Tensor<S> out = x->value;
  for (int r = 0; r < rows; ++r) {
    S* p = out.data.data() + static_cast<std::size_t>(r) * d;
    S mx = *std::max_element(p, p + d);
    S sum = S(0);
    for (int i = 0; i < d; ++i) {
      p[i] = std::exp(p[i] - mx);
      sum += p[i];
    }
    for (int i = 0; i < d; ++i) p[i] /= sum;
  }
  return make_op<S>(std::move(out), {x}, [x, rows, d](Node<S>& n) {
    x->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const S* y = n.value.data.data() + static_cast<std::size_t>(r) * d;
      const S* gy = n.grad.data.data() + static_cast<std::size_t>(r) * d;
      S dot = S(0);
      for (int i = 0; i < d; ++i) dot += y[i] * gy[i];
      S* gx = x->grad.data.data() + static_cast<std::size_t>(r) * d;
      for (int i = 0; i < d; ++i) gx[i] += y[i] * (gy[i] - dot);
    }
  });
}

template <class S>
Var<S> layer_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps = S(1e-5)) {
  const int d = x->value.shape.back();
  if (gamma->value.numel() != static_cast<std::size_t>(d) || beta->value.numel() != static_cast<std::size_t>(d))
    throw DimensionError("layer_norm: parameter width mismatch");
  const int rows = static_cast<int>(x->value.numel()) / d;
  Tensor<S> out = x->value;
  Tensor<S> xhat({rows, d});
  Tensor<S> invstd({rows});
  for (int r = 0; r < rows; ++r) {
    S* p = out.data.data() + static_cast<std::size_t>(r) * d;
    S mu = S(0);
    for (int i = 0; i < d; ++i) mu += p[i];
    mu /= static_cast<S>(d);
    S var = S(0);
    for (int i = 0; i < d; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= static_cast<S>(d);
    const S is = S(1) / std::sqrt(var + eps);
    invstd[r] = is;
    for (int i = 0; i < d; ++i) {
      S xh = (p[i] - mu) * is;
      xhat.data[static_cast<std::size_t>(r) * d + i] = xh;
      p[i] = gamma->value[i] * xh + beta->value[i];
    }
  }
  return make_op<S>(std::move(out), {x, gamma, beta},
                    [x, gamma, beta, rows, d, xhat = std::move(xhat),
                     invstd = std::move(invstd)](Node<S>& n) {
    if (x->requires_grad) x->ensure_grad();
    if (gamma->requires_grad) gamma->ensure_grad();
    if (beta->requires_grad) beta->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const S* gy = n.grad.data.data() + static_cast<std::size_t>(r) * d;
      const S* xh = xhat.data.data() + static_cast<std::size_t>(r) * d;
      S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
      for (int i = 0; i < d; ++i) {
        const S dxh = gy[i] * gamma->value[i];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xh[i];
        if (gamma->requires_grad) gamma->grad[i] += gy[i] * xh[i];
        if (beta->requires_grad) beta->grad[i] += gy[i];
      }
      if (x->requires_grad) {
        S* gx = x->grad.data.data() + static_cast<std::size_t>(r) * d;
        const S is = invstd[r];
        for (int i = 0; i < d; ++i) {
          const S dxh = gy[i] * gamma->value[i];
          gx[i] += is / static_cast<S>(d) *
                   (static_cast<S>(d) * dxh - sum_dxhat - xh[i] * sum_dxhat_xhat);
        }
      }
    }
  });
}

// ---- reductions and losses ----

// Per-sample mean over all trailing entries: [B, ...] -> [B].
template <class S>
Var<S> mean_per_sample(const Var<S>& x) {
  const int B = x->value.dim(0);
  const std::size_t inner = x->value.numel() / static_cast<std::size_t>(B);
  Tensor<S> out({B});
  for (int b = 0; b < B; ++b) {
    S acc = S(0);
    for (std::size_t i = 0; i < inner; ++i) acc += x->value.data[b * inner + i];
    out[b] = acc / static_cast<S>(inner);
  }
  return make_op<S>(std::move(out), {x}, [x, B, inner](Node<S>& n) {
    x->ensure_grad();
    for (int b = 0; b < B; ++b) {
      const S g = n.grad[b] / static_cast<S>(inner);
      for (std::size_t i = 0; i < inner; ++i) x->grad.data[b * inner + i] += g;
    }
  });
}

// Sum of squared entries per sample, averaged over the batch.
template <class S>
Var<S> mse_loss(const Var<S>& pred, const Tensor<S>& target) {
  if (!pred->value.same_shape(target)) throw DimensionError("mse_loss: shape mismatch");
  const int B = pred->value.dim(0);
  S acc = S(0);
  for (std::size_t i = 0; i < pred->value.numel(); ++i) {
    const S d = pred->value[i] - target[i];
    acc += d * d;
  }
  Tensor<S> out({1});
  out[0] = acc / static_cast<S>(B);
  if (!std::isfinite(static_cast<double>(out[0]))) throw NumericalError("mse_loss: non-finite loss");
  Tensor<S> t = target;
  return make_op<S>(std::move(out), {pred}, [pred, B, t = std::move(t)](Node<S>& n) {
    pred->ensure_grad();
    const S g = n.grad[0] * S(2) / static_cast<S>(B);
    for (std::size_t i = 0; i < pred->value.numel(); ++i)
      pred->grad[i] += g * (pred->value[i] - t[i]);
  });
}

// ---- gather / scatter for the codeword path ----

// x [B, P]; positions[b] are flat indices into P. Returns [B, m].
template <class S>
Var<S> gather_per_sample(const Var<S>& x, const std::vector<std::vector<int>>& positions) {
  const int B = x->value.dim(0);
  const std::size_t P = x->value.numel() / static_cast<std::size_t>(B);
  const int m = positions.empty() ? 0 : static_cast<int>(positions.front().size());
  Tensor<S> out({B, m});
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < m; ++i) out.data[static_cast<std::size_t>(b) * m + i] = x->value.data[b * P + positions[b][i]];
  return make_op<S>(std::move(out), {x}, [x, positions, B, P, m](Node<S>& n) {
    x->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int i = 0; i < m; ++i)
        x->grad.data[b * P + positions[b][i]] += n.grad.data[static_cast<std::size_t>(b) * m + i];
  });
}

// values [B, m+1] with values[:,0] the mean; output [B, P] filled with the
// mean and overwritten with values[:,i+1] at positions[b][i].
template <class S>
Var<S> mean_fill_scatter(const Var<S>& values, const std::vector<std::vector<int>>& positions,
                         int P) {
  const int B = values->value.dim(0);
  const int m = values->value.dim(1) - 1;
  Tensor<S> out({B, P});
  for (int b = 0; b < B; ++b) {
    const S mean = values->value.data[static_cast<std::size_t>(b) * (m + 1)];
    for (int p = 0; p < P; ++p) out.data[static_cast<std::size_t>(b) * P + p] = mean;
    for (int i = 0; i < m; ++i) {
      const int pos = positions[b][i];
      if (pos < 0 || pos >= P) throw DataError("fill: position out of range");
      out.data[static_cast<std::size_t>(b) * P + pos] = values->value.data[static_cast<std::size_t>(b) * (m + 1) + i + 1];
    }
  }
  return make_op<S>(std::move(out), {values}, [values, positions, B, P, m](Node<S>& n) {
    values->ensure_grad();
    std::vector<char> taken(static_cast<std::size_t>(P));
    for (int b = 0; b < B; ++b) {
      std::fill(taken.begin(), taken.end(), 0);
      for (int i = 0; i < m; ++i) {
        const int pos = positions[b][i];
        values->grad.data[static_cast<std::size_t>(b) * (m + 1) + i + 1] +=
            n.grad.data[static_cast<std::size_t>(b) * P + pos];
        taken[pos] = 1;
      }
      S acc = S(0);
      for (int p = 0; p < P; ++p)
        if (!taken[p]) acc += n.grad.data[static_cast<std::size_t>(b) * P + p];
      values->grad.data[static_cast<std::size_t>(b) * (m + 1)] += acc;
    }
  });
}

}  // namespace csinet::ad
