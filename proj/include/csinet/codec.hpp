#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "csinet/channel.hpp"
#include "csinet/nn.hpp"
#include "csinet/selfinfo.hpp"

namespace csinet::codec {

struct LayerConfig {
  int d_m = 64;
  int d_ff = 256;
  int n_heads = 4;
  int n_trans = 2;
  int s_p = 4;

  void validate(int n_c, int n_t) const {
    if (d_m % n_heads != 0) throw ConfigError("layers: d_m must be divisible by n_heads");
    if (s_p < 1 || n_c % s_p != 0 || n_t % s_p != 0)
      throw ConfigError("layers: s_p must divide n_c and n_t");
    if (n_trans < 1) throw ConfigError("layers: n_trans must be >= 1");
  }

  int n_patches(int n_c, int n_t) const { return (n_c / s_p) * (n_t / s_p); }
  int sequence_length(int n_c, int n_t) const { return n_patches(n_c, n_t) + 1; }
};

// Feedback payload m = [v, p]: values (index 0 is the CSI mean) plus sorted
// unique flat positions into the 2 x N_c x N_t tensor.
struct Codeword {
  std::vector<double> values;
  std::vector<int> positions;
  int m = 0;
  int value_bits = 64;  // q1
  int index_bits = 10;  // q2
  int n_c = 0, n_t = 0;

  void validate() const;
};

// ---- bit accounting ----

std::int64_t bits_total(int m, int q1, int q2);
double compression_ratio(int m, int q1, int q2, int n_c, int n_t);

// Default rule: floor(sigma * q1 * 2 * n_c * n_t / (q1 + q2)).
int m_for_ratio(double sigma, int q1, int q2, int n_c, int n_t);

// Pinned presets at 32x32 (sigma in {1/8, 1/16, 1/32, 1/64} -> {221, 111,
// 56, 28}); falls back to the default rule for other shapes.
int m_preset(double sigma, int q1, int q2, int n_c, int n_t);

// ---- model ----

enum class RunMode { kTraining, kInference };

template <class S>
struct PipelineModel {
  int n_c = 0, n_t = 0;
  LayerConfig layers;
  selfinfo::SelfInfoConfig si_cfg;
  selfinfo::FrozenAggregator aggregator;
  ad::ParameterStore<S> params;

  ad::BatchNormState<S> bn_en1, bn_en2;
  std::vector<ad::BatchNormState<S>> bn_pd;  // res0.c0..c2, res1.c0..c2

  // Affine normalization inside f_TP, frozen after stage 1.
  S norm_mean = S(0);
  S norm_std = S(1);
  bool norm_frozen = false;

  int flat_size() const { return 2 * n_c * n_t; }
};

// Channel widths of the preliminary decoder Res Networks.
inline constexpr int kResChannels[3] = {8, 16, 2};

template <class S>
PipelineModel<S> build_model(int n_c, int n_t, const LayerConfig& layers,
                             const selfinfo::SelfInfoConfig& si_cfg, std::uint64_t seed);

// ---- batched forward pieces (autodiff graph builders) ----

template <class S>
struct EncodeResult {
  ad::Var<S> values;                        // [B, m+1]
  std::vector<std::vector<int>> positions;  // per sample, ascending
};

template <class S>
EncodeResult<S> encode_batch(PipelineModel<S>& model, const ad::Tensor<S>& h, int m, RunMode mode);

// Random masking ablation (encoder replaced): positions drawn uniformly
// without replacement, values taken from the raw CSI.
template <class S>
EncodeResult<S> encode_random_batch(const PipelineModel<S>& model, const ad::Tensor<S>& h, int m,
                                    Rng& rng);

template <class S>
ad::Var<S> preliminary_decode_batch(PipelineModel<S>& model, const EncodeResult<S>& enc, RunMode mode);

template <class S>
ad::Var<S> tokenize_batch(PipelineModel<S>& model, const ad::Var<S>& h_p);

template <class S>
ad::Var<S> token_predict_batch(PipelineModel<S>& model, const ad::Var<S>& h_p);

template <class S>
ad::Var<S> decode_batch(PipelineModel<S>& model, const EncodeResult<S>& enc, RunMode mode) {
  return token_predict_batch(model, preliminary_decode_batch(model, enc, mode));
}

// ---- single-sample convenience (inference mode) ----

template <class S>
Codeword encode(PipelineModel<S>& model, const channel::CsiTensor& h, int m);

// Mean fill: constant tensor of values[0] with values[i+1] at positions[i].
channel::CsiTensor fill(const Codeword& cw, int n_c, int n_t);

template <class S>
channel::CsiTensor preliminary_decode(PipelineModel<S>& model, const Codeword& cw);

template <class S>
channel::CsiTensor decode(PipelineModel<S>& model, const Codeword& cw);

// ---- implementation ----

template <class S>
PipelineModel<S> build_model(int n_c, int n_t, const LayerConfig& layers,
                             const selfinfo::SelfInfoConfig& si_cfg, std::uint64_t seed) {
  layers.validate(n_c, n_t);
  si_cfg.validate();
  PipelineModel<S> model;
  model.n_c = n_c;
  model.n_t = n_t;
  model.layers = layers;
  model.si_cfg = si_cfg;
  model.aggregator = selfinfo::FrozenAggregator::random(seed ^ 0x51c0de5eULL);
  Rng rng(seed);
  auto tn = [&](std::vector<int> shape) { return ad::Tensor<S>::trunc_normal(std::move(shape), S(0.02), rng); };
  auto he = [&](std::vector<int> shape, int fan_in) {
    ad::Tensor<S> t(shape);
    const S sd = static_cast<S>(std::sqrt(2.0 / fan_in));
    for (S& v : t.data) v = static_cast<S>(rng.normal()) * sd;
    return t;
  };
  auto zeros = [](std::vector<int> shape) { return ad::Tensor<S>::zeros(std::move(shape)); };
  auto ones = [](std::vector<int> shape) { return ad::Tensor<S>::full(std::move(shape), S(1)); };
  auto& P = model.params;

  // encoder: 2 -> 64 -> 2, 3x3 kernels
  P.create("en.conv1.w", he({64, 2, 3, 3}, 2 * 9), "EN");
  P.create("en.conv1.b", zeros({64}), "EN");
  P.create("en.bn1.g", ones({64}), "EN");
  P.create("en.bn1.b", zeros({64}), "EN");
  P.create("en.conv2.w", he({2, 64, 3, 3}, 64 * 9), "EN");
  P.create("en.conv2.b", zeros({2}), "EN");
  P.create("en.bn2.g", ones({2}), "EN");
  P.create("en.bn2.b", zeros({2}), "EN");
  model.bn_en1 = ad::BatchNormState<S>(64);
  model.bn_en2 = ad::BatchNormState<S>(2);

  // preliminary decoder: two Res Networks (2->8->16->2) plus a conv head
  int in_ch = 2;
  for (int r = 0; r < 2; ++r) {
    in_ch = 2;
    for (int c = 0; c < 3; ++c) {
      const int out_ch = kResChannels[c];
      const std::string base = "pd.res" + std::to_string(r) + ".conv" + std::to_string(c);
      P.create(base + ".w", he({out_ch, in_ch, 3, 3}, in_ch * 9), "PD");
      P.create(base + ".b", zeros({out_ch}), "PD");
      P.create(base + ".bn.g", ones({out_ch}), "PD");
      P.create(base + ".bn.b", zeros({out_ch}), "PD");
      model.bn_pd.emplace_back(out_ch);
      in_ch = out_ch;
    }
  }
  P.create("pd.head.w", he({2, 2, 3, 3}, 2 * 9), "PD");
  P.create("pd.head.b", zeros({2}), "PD");

  // token prediction: patch conv, embeddings, transformer stack, output head
  const int n_patch = layers.n_patches(n_c, n_t);
  P.create("tp.patch.w", tn({layers.d_m, 2, layers.s_p, layers.s_p}), "TP");
  P.create("tp.patch.b", zeros({layers.d_m}), "TP");
  P.create("tp.pos", tn({n_patch, layers.d_m}), "TP");
  P.create("tp.cls", tn({1, layers.d_m}), "TP");
  for (int l = 0; l < layers.n_trans; ++l) {
    const std::string base = "tp.l" + std::to_string(l) + ".";
    P.create(base + "ln1.g", ones({layers.d_m}), "TP");
    P.create(base + "ln1.b", zeros({layers.d_m}), "TP");
    for (const char* nm : {"wq", "wk", "wv", "wo"})
      P.create(base + nm, tn({layers.d_m, layers.d_m}), "TP");
    for (const char* nm : {"bq", "bk", "bv", "bo"}) P.create(base + nm, zeros({layers.d_m}), "TP");
    P.create(base + "ln2.g", ones({layers.d_m}), "TP");
    P.create(base + "ln2.b", zeros({layers.d_m}), "TP");
    P.create(base + "ff.w1", tn({layers.d_m, layers.d_ff}), "TP");
    P.create(base + "ff.b1", zeros({layers.d_ff}), "TP");
    P.create(base + "ff.w2", tn({layers.d_ff, layers.d_m}), "TP");
    P.create(base + "ff.b2", zeros({layers.d_m}), "TP");
  }
  P.create("tp.lnf.g", ones({layers.d_m}), "TP");
  P.create("tp.lnf.b", zeros({layers.d_m}), "TP");
  P.create("tp.out.w", tn({layers.d_m, 2 * layers.s_p * layers.s_p}), "TP");
  P.create("tp.out.b", zeros({2 * layers.s_p * layers.s_p}), "TP");
  return model;
}

namespace detail {

// Per-sample top-m selection on the post-mask self-information image,
// ranked by |value|, ties to the lower flat index; positions ascending.
template <class S>
std::vector<int> select_top_m(const S* image, int flat_size, int m) {
  if (m < 0 || m > flat_size) throw ConfigError("encode: m out of range");
  std::vector<int> order(static_cast<std::size_t>(flat_size));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double va = std::abs(static_cast<double>(image[a]));
    const double vb = std::abs(static_cast<double>(image[b]));
    if (va != vb) return va > vb;
    return a < b;
  });
  std::vector<int> pos(order.begin(), order.begin() + m);
  std::sort(pos.begin(), pos.end());
  return pos;
}

template <class S>
channel::CsiTensor sample_to_csi(const ad::Tensor<S>& t, int b, int n_c, int n_t) {
  channel::CsiTensor h(n_c, n_t);
  const std::size_t off = static_cast<std::size_t>(b) * 2 * n_c * n_t;
  for (std::size_t i = 0; i < h.size(); ++i) h.data[i] = static_cast<double>(t.data[off + i]);
  return h;
}

}  // namespace detail

template <class S>
EncodeResult<S> encode_batch(PipelineModel<S>& model, const ad::Tensor<S>& h, int m, RunMode mode) {
  using namespace ad;
  const int B = h.dim(0);
  const int P = model.flat_size();
  if (m < 0 || m > P) throw ConfigError("encode: m out of range");
  const bool training = mode == RunMode::kTraining;
  Var<S> x = make_var<S>(h, false);

  Var<S> f1 = leaky_relu(batch_norm(conv2d(x, model.params.get("en.conv1.w"),
                                           model.params.get("en.conv1.b"), 1, 1),
                                    model.params.get("en.bn1.g"), model.params.get("en.bn1.b"),
                                    model.bn_en1, training));

  // SICNet: frozen aggregation of the 9 Gaussian kernel maps, then a binary
  // mask per channel; no gradient flows through this branch.
  Tensor<S> mask({B, 64, model.n_c, model.n_t});
  for (int b = 0; b < B; ++b) {
    const channel::CsiTensor hb = detail::sample_to_csi(h, b, model.n_c, model.n_t);
    const auto kmaps = selfinfo::kernel_maps(hb, model.si_cfg);
    const auto sic = selfinfo::sicnet_forward(kmaps, model.n_c, model.n_t, model.aggregator, model.si_cfg);
    const std::size_t off = static_cast<std::size_t>(b) * sic.mask.size();
    for (std::size_t i = 0; i < sic.mask.size(); ++i) mask.data[off + i] = static_cast<S>(sic.mask[i]);
  }
  Var<S> masked = mask_mul(f1, mask);

  Var<S> image = leaky_relu(batch_norm(conv2d(masked, model.params.get("en.conv2.w"),
                                              model.params.get("en.conv2.b"), 1, 1),
                                       model.params.get("en.bn2.g"), model.params.get("en.bn2.b"),
                                       model.bn_en2, training));

  Var<S> flat = reshape(image, {B, P});
  EncodeResult<S> out;
  out.positions.resize(B);
  for (int b = 0; b < B; ++b)
    out.positions[b] = detail::select_top_m(flat->value.data.data() + static_cast<std::size_t>(b) * P, P, m);

  Var<S> mean = reshape(mean_per_sample(x), {B, 1});
  Var<S> gathered = gather_per_sample(flat, out.positions);
  out.values = concat(mean, gathered, 1);
  return out;
}

template <class S>
EncodeResult<S> encode_random_batch(const PipelineModel<S>& model, const ad::Tensor<S>& h, int m,
                                    Rng& rng) {
  using namespace ad;
  const int B = h.dim(0);
  const int P = model.flat_size();
  if (m < 0 || m > P) throw ConfigError("encode: m out of range");
  EncodeResult<S> out;
  out.positions.resize(B);
  for (int b = 0; b < B; ++b) {
    // partial Fisher-Yates over the flat index space
    std::vector<int> idx(static_cast<std::size_t>(P));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < m; ++i)
      std::swap(idx[i], idx[i + static_cast<int>(rng.below(static_cast<std::uint64_t>(P - i)))]);
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
    out.positions[b] = std::move(idx);
  }
  Var<S> x = make_var<S>(h, false);
  Var<S> mean = reshape(mean_per_sample(x), {B, 1});
  Var<S> gathered = gather_per_sample(reshape(x, {B, P}), out.positions);
  out.values = concat(mean, gathered, 1);
  return out;
}

template <class S>
ad::Var<S> preliminary_decode_batch(PipelineModel<S>& model, const EncodeResult<S>& enc, RunMode mode) {
  using namespace ad;
  const int B = enc.values->value.dim(0);
  const bool training = mode == RunMode::kTraining;
  Var<S> k = reshape(mean_fill_scatter(enc.values, enc.positions, model.flat_size()),
                     {B, 2, model.n_c, model.n_t});
  Var<S> cur = k;
  int bn_idx = 0;
  for (int r = 0; r < 2; ++r) {
    Var<S> t = cur;
    for (int c = 0; c < 3; ++c) {
      const std::string base = "pd.res" + std::to_string(r) + ".conv" + std::to_string(c);
      t = batch_norm(conv2d(t, model.params.get(base + ".w"), model.params.get(base + ".b"), 1, 1),
                     model.params.get(base + ".bn.g"), model.params.get(base + ".bn.b"),
                     model.bn_pd[static_cast<std::size_t>(bn_idx++)], training);
      if (c < 2) t = leaky_relu(t);
    }
    cur = leaky_relu(add(cur, t));
  }
  return conv2d(cur, model.params.get("pd.head.w"), model.params.get("pd.head.b"), 1, 1);
}

template <class S>
ad::Var<S> tokenize_batch(PipelineModel<S>& model, const ad::Var<S>& h_p) {
  using namespace ad;
  const int B = h_p->value.dim(0);
  const auto& ly = model.layers;
  const int n_patch = ly.n_patches(model.n_c, model.n_t);

  Var<S> xn = scale(h_p, S(1) / model.norm_std);
  xn = add(xn, make_var<S>(Tensor<S>::full(h_p->value.shape, -model.norm_mean / model.norm_std)));

  Var<S> patches = conv2d(xn, model.params.get("tp.patch.w"), model.params.get("tp.patch.b"), ly.s_p, 0);
  Var<S> tokens = permute(reshape(patches, {B, ly.d_m, n_patch}), {0, 2, 1});
  tokens = add_broadcast(tokens, model.params.get("tp.pos"));
  Var<S> cls = tile0(reshape(model.params.get("tp.cls"), {1, 1, ly.d_m}), B);
  return concat(cls, tokens, 1);
}

template <class S>
ad::Var<S> token_predict_batch(PipelineModel<S>& model, const ad::Var<S>& h_p) {
  using namespace ad;
  const int B = h_p->value.dim(0);
  const auto& ly = model.layers;
  const int n_patch = ly.n_patches(model.n_c, model.n_t);

  Var<S> tokens = tokenize_batch(model, h_p);
  for (int l = 0; l < ly.n_trans; ++l) {
    const std::string base = "tp.l" + std::to_string(l) + ".";
    TransformerLayerParams<S> p;
    p.ln1_g = model.params.get(base + "ln1.g");
    p.ln1_b = model.params.get(base + "ln1.b");
    p.attn = {model.params.get(base + "wq"), model.params.get(base + "bq"),
              model.params.get(base + "wk"), model.params.get(base + "bk"),
              model.params.get(base + "wv"), model.params.get(base + "bv"),
              model.params.get(base + "wo"), model.params.get(base + "bo")};
    p.ln2_g = model.params.get(base + "ln2.g");
    p.ln2_b = model.params.get(base + "ln2.b");
    p.ff_w1 = model.params.get(base + "ff.w1");
    p.ff_b1 = model.params.get(base + "ff.b1");
    p.ff_w2 = model.params.get(base + "ff.w2");
    p.ff_b2 = model.params.get(base + "ff.b2");
    tokens = transformer_layer(tokens, p, ly.n_heads);
  }
  tokens = layer_norm(tokens, model.params.get("tp.lnf.g"), model.params.get("tp.lnf.b"));
  tokens = slice(tokens, 1, 1, n_patch);  // drop class token
  Var<S> out = linear(tokens, model.params.get("tp.out.w"), model.params.get("tp.out.b"));

  const int ph = model.n_c / ly.s_p, pw = model.n_t / ly.s_p;
  out = reshape(out, {B, ph, pw, 2, ly.s_p, ly.s_p});
  out = permute(out, {0, 3, 1, 4, 2, 5});
  out = reshape(out, {B, 2, model.n_c, model.n_t});

  out = scale(out, model.norm_std);
  return add(out, make_var<S>(Tensor<S>::full(out->value.shape, model.norm_mean)));
}

// ---- single-sample wrappers ----

template <class S>
Codeword encode(PipelineModel<S>& model, const channel::CsiTensor& h, int m) {
  ad::Tensor<S> batch({1, 2, model.n_c, model.n_t});
  for (std::size_t i = 0; i < h.size(); ++i) batch.data[i] = static_cast<S>(h.data[i]);
  EncodeResult<S> enc = encode_batch(model, batch, m, RunMode::kInference);
  Codeword cw;
  cw.m = m;
  cw.n_c = model.n_c;
  cw.n_t = model.n_t;
  cw.positions = enc.positions[0];
  cw.values.resize(static_cast<std::size_t>(m) + 1);
  for (int i = 0; i <= m; ++i) cw.values[static_cast<std::size_t>(i)] = static_cast<double>(enc.values->value.data[i]);
  cw.validate();
  return cw;
}

template <class S>
EncodeResult<S> codeword_to_result(const Codeword& cw) {
  ad::Tensor<S> v({1, cw.m + 1});
  for (int i = 0; i <= cw.m; ++i) v.data[static_cast<std::size_t>(i)] = static_cast<S>(cw.values[static_cast<std::size_t>(i)]);
  EncodeResult<S> enc;
  enc.values = ad::make_var<S>(std::move(v), false);
  enc.positions = {cw.positions};
  return enc;
}

template <class S>
channel::CsiTensor var_to_csi(const ad::Var<S>& out, int n_c, int n_t) {
  return detail::sample_to_csi(out->value, 0, n_c, n_t);
}

template <class S>
channel::CsiTensor preliminary_decode(PipelineModel<S>& model, const Codeword& cw) {
  cw.validate();
  auto enc = codeword_to_result<S>(cw);
  return var_to_csi(preliminary_decode_batch(model, enc, RunMode::kInference), model.n_c, model.n_t);
}

template <class S>
channel::CsiTensor decode(PipelineModel<S>& model, const Codeword& cw) {
  cw.validate();
  auto enc = codeword_to_result<S>(cw);
  return var_to_csi(decode_batch(model, enc, RunMode::kInference), model.n_c, model.n_t);
}

}  // namespace csinet::codec
