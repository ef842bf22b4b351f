#include <doctest.h>

#include "csinet/nn.hpp"

using namespace csinet;
using ad::Tensor;
using ad::Var;

namespace {

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.data) v = rng.normal() * scale;
  return t;
}

Var<double> param(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  return ad::make_var<double>(random_tensor(std::move(shape), rng, scale), true);
}

// Reduces any batched output to a scalar via the squared-error loss against a
// fixed random target, so gradients exercise the whole output.
double check(const std::function<Var<double>()>& out_fn, const std::vector<Var<double>>& params,
             Rng& rng, int probes = 40) {
  Tensor<double> target = random_tensor(out_fn()->value.shape, rng, 0.5);
  auto loss_fn = [&]() { return ad::mse_loss(out_fn(), target); };
  return ad::grad_check<double>(loss_fn, params, probes, rng);
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(7);
  auto a = param({2, 3, 4}, rng);
  auto b = param({2, 3, 4}, rng);
  CHECK(check([&] { return ad::add(a, b); }, {a, b}, rng) < kTol);
  CHECK(check([&] { return ad::mul(a, b); }, {a, b}, rng) < kTol);
  CHECK(check([&] { return ad::scale(a, 1.7); }, {a}, rng) < kTol);
  Tensor<double> mask = Tensor<double>::zeros({2, 3, 4});
  for (std::size_t i = 0; i < mask.numel(); i += 2) mask[i] = 1.0;
  CHECK(check([&] { return ad::mask_mul(a, mask); }, {a}, rng) < kTol);
  CHECK(check([&] { return ad::leaky_relu(a); }, {a}, rng) < kTol);
  CHECK(check([&] { return ad::gelu(a); }, {a}, rng) < kTol);
}

TEST_CASE("shape op gradients match finite differences") {
  Rng rng(11);
  auto a = param({2, 3, 4}, rng);
  auto b = param({2, 5, 4}, rng);
  auto one = param({1, 3, 4}, rng);
  auto pos = param({12}, rng);
  CHECK(check([&] { return ad::reshape(a, {2, 12}); }, {a}, rng) < kTol);
  CHECK(check([&] { return ad::permute(a, {2, 0, 1}); }, {a}, rng) < kTol);
  CHECK(check([&] { return ad::concat(a, b, 1); }, {a, b}, rng) < kTol);
  CHECK(check([&] { return ad::slice(b, 1, 1, 3); }, {b}, rng) < kTol);
  CHECK(check([&] { return ad::tile0(one, 4); }, {one}, rng) < kTol);
  CHECK(check([&] { return ad::add_broadcast(a, pos); }, {a, pos}, rng) < kTol);
}

TEST_CASE("matrix op gradients match finite differences") {
  Rng rng(13);
  auto a = param({3, 4}, rng);
  auto b = param({4, 5}, rng);
  CHECK(check([&] { return ad::matmul(a, b); }, {a, b}, rng) < kTol);

  auto x = param({2, 6, 3}, rng);
  auto w = param({3, 5}, rng);
  auto bias = param({5}, rng);
  CHECK(check([&] { return ad::linear(x, w, bias); }, {x, w, bias}, rng) < kTol);

  auto p = param({2, 3, 4}, rng);
  auto q = param({2, 4, 5}, rng);
  auto pt = param({2, 4, 3}, rng);
  auto qt = param({2, 5, 4}, rng);
  CHECK(check([&] { return ad::bmm(p, q); }, {p, q}, rng) < kTol);
  CHECK(check([&] { return ad::bmm(pt, q, true, false); }, {pt, q}, rng) < kTol);
  CHECK(check([&] { return ad::bmm(p, qt, false, true); }, {p, qt}, rng) < kTol);
  CHECK(check([&] { return ad::bmm(pt, qt, true, true); }, {pt, qt}, rng) < kTol);
}

TEST_CASE("normalization and reduction gradients match finite differences") {
  Rng rng(17);
  auto x = param({3, 4, 6}, rng);
  auto g = param({6}, rng, 0.2);
  auto b = param({6}, rng, 0.2);
  CHECK(check([&] { return ad::softmax_lastdim(x); }, {x}, rng) < kTol);
  CHECK(check([&] { return ad::layer_norm(x, g, b); }, {x, g, b}, rng) < kTol);
  CHECK(check([&] { return ad::mean_per_sample(x); }, {x}, rng) < kTol);
}

TEST_CASE("gather and mean-fill scatter gradients match finite differences") {
  Rng rng(19);
  auto x = param({3, 10}, rng);
  auto values = param({3, 5}, rng);  // mean + 4 selected entries
  std::vector<std::vector<int>> positions{{1, 4, 6, 9}, {0, 2, 3, 8}, {2, 5, 7, 9}};
  CHECK(check([&] { return ad::gather_per_sample(x, positions); }, {x}, rng) < kTol);
  CHECK(check([&] { return ad::mean_fill_scatter(values, positions, 10); }, {values}, rng) < kTol);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(23);
  auto x = param({2, 3, 5, 6}, rng);
  auto w = param({4, 3, 3, 3}, rng, 0.5);
  auto b = param({4}, rng, 0.2);
  CHECK(check([&] { return ad::conv2d(x, w, b, 1, 1); }, {x, w, b}, rng) < kTol);
  CHECK(check([&] { return ad::conv2d(x, w, b, 2, 1); }, {x, w, b}, rng) < kTol);
  auto wp = param({4, 3, 2, 2}, rng, 0.5);
  CHECK(check([&] { return ad::conv2d(x, wp, b, 2, 0); }, {x, wp, b}, rng) < kTol);
}

TEST_CASE("batch norm gradients match finite differences") {
  Rng rng(29);
  auto x = param({4, 3, 4, 4}, rng);
  auto g = param({3}, rng, 0.2);
  auto b = param({3}, rng, 0.2);
  ad::BatchNormState<double> state(3);
  CHECK(check([&] { return ad::batch_norm(x, g, b, state, true); }, {x, g, b}, rng) < kTol);
  ad::BatchNormState<double> frozen(3);
  CHECK(check([&] { return ad::batch_norm(x, g, b, frozen, false); }, {x, g, b}, rng) < kTol);
}

TEST_CASE("attention and transformer layer gradients match finite differences") {
  Rng rng(31);
  const int D = 8;
  auto x = param({2, 5, D}, rng, 0.5);
  ad::AttentionParams<double> ap{param({D, D}, rng, 0.3), param({D}, rng, 0.1),
                                 param({D, D}, rng, 0.3), param({D}, rng, 0.1),
                                 param({D, D}, rng, 0.3), param({D}, rng, 0.1),
                                 param({D, D}, rng, 0.3), param({D}, rng, 0.1)};
  std::vector<Var<double>> attn_params{x,     ap.wq, ap.bq, ap.wk, ap.bk,
                                       ap.wv, ap.bv, ap.wo, ap.bo};
  CHECK(check([&] { return ad::multi_head_attention(x, ap, 2); }, attn_params, rng, 60) < kTol);

  ad::TransformerLayerParams<double> tp;
  tp.ln1_g = param({D}, rng, 0.2);
  tp.ln1_b = param({D}, rng, 0.1);
  tp.attn = ap;
  tp.ln2_g = param({D}, rng, 0.2);
  tp.ln2_b = param({D}, rng, 0.1);
  tp.ff_w1 = param({D, 16}, rng, 0.3);
  tp.ff_b1 = param({16}, rng, 0.1);
  tp.ff_w2 = param({16, D}, rng, 0.3);
  tp.ff_b2 = param({D}, rng, 0.1);
  std::vector<Var<double>> all = attn_params;
  for (auto v : {tp.ln1_g, tp.ln1_b, tp.ln2_g, tp.ln2_b, tp.ff_w1, tp.ff_b1, tp.ff_w2, tp.ff_b2})
    all.push_back(v);
  CHECK(check([&] { return ad::transformer_layer(x, tp, 2); }, all, rng, 80) < kTol);
}

TEST_CASE("mse loss identities") {
  Rng rng(37);
  Tensor<double> t = random_tensor({3, 2, 4, 4}, rng);
  auto x = ad::make_var<double>(t, true);
  auto zero_loss = ad::mse_loss(x, t);
  CHECK(zero_loss->value[0] == doctest::Approx(0.0));

  // h_hat = h + 1 everywhere at 2x4x4 gives 2*4*4 = 32 per sample
  Tensor<double> shifted = t;
  for (double& v : shifted.data) v += 1.0;
  auto xs = ad::make_var<double>(shifted, true);
  CHECK(ad::mse_loss(xs, t)->value[0] == doctest::Approx(32.0));

  // quadratic loss: central differences are near-exact
  auto p = param({2, 6}, rng);
  Tensor<double> target = random_tensor({2, 6}, rng);
  auto loss_fn = [&] { return ad::mse_loss(ad::reshape(p, {2, 6}), target); };
  CHECK(ad::grad_check<double>(loss_fn, {p}, 30, rng) < 1e-8);
}

TEST_CASE("frozen parameters receive no gradient") {
  Rng rng(41);
  auto a = param({2, 4}, rng);
  auto b = param({2, 4}, rng);
  b->requires_grad = false;
  Tensor<double> target = random_tensor({2, 4}, rng);
  auto loss = ad::mse_loss(ad::add(a, b), target);
  ad::backward(loss);
  CHECK(a->grad.numel() == a->value.numel());
  CHECK(b->grad.numel() == 0);
}
