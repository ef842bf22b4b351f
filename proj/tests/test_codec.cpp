#include <doctest.h>

#include <cstdio>

#include "csinet/checkpoint.hpp"
#include "csinet/codec.hpp"

using namespace csinet;

namespace {

codec::PipelineModel<float> toy_model(int n_c = 8, int n_t = 8, std::uint64_t seed = 3) {
  codec::LayerConfig layers;
  layers.d_m = 16;
  layers.d_ff = 32;
  layers.n_heads = 4;
  layers.n_trans = 1;
  layers.s_p = 4;
  selfinfo::SelfInfoConfig si;
  si.radius_r = 1;
  return codec::build_model<float>(n_c, n_t, layers, si, seed);
}

channel::CsiTensor random_csi(int n_c, int n_t, std::uint64_t seed) {
  channel::CsiTensor h(n_c, n_t);
  Rng rng(seed);
  for (double& v : h.data) v = rng.normal() * 0.1;
  return h;
}

}  // namespace

TEST_CASE("bit accounting matches the pinned operating points") {
  CHECK(codec::bits_total(221, 64, 10) == 16418);
  CHECK(codec::bits_total(111, 64, 10) == 8278);
  CHECK(codec::bits_total(56, 64, 10) == 4208);
  CHECK(codec::bits_total(28, 64, 10) == 2136);
  CHECK(codec::bits_total(0, 64, 10) == 64);
  CHECK(codec::compression_ratio(0, 64, 10, 16, 16) == doctest::Approx(1.0 / 512));
}

TEST_CASE("m selection: default floor rule and pinned presets") {
  CHECK(codec::m_for_ratio(1.0 / 64, 64, 10, 32, 32) == 27);  // floor(27.68)
  CHECK(codec::m_preset(1.0 / 8, 64, 10, 32, 32) == 221);
  CHECK(codec::m_preset(1.0 / 16, 64, 10, 32, 32) == 111);
  CHECK(codec::m_preset(1.0 / 32, 64, 10, 32, 32) == 56);
  CHECK(codec::m_preset(1.0 / 64, 64, 10, 32, 32) == 28);
  CHECK_THROWS_AS(codec::m_for_ratio(0.0, 64, 10, 32, 32), ConfigError);
}

TEST_CASE("encode produces sorted unique in-range positions and the mean first") {
  auto model = toy_model();
  auto h = random_csi(8, 8, 5);
  const int m = 12;
  auto cw = codec::encode(model, h, m);
  CHECK(cw.m == m);
  CHECK(static_cast<int>(cw.values.size()) == m + 1);
  CHECK(static_cast<int>(cw.positions.size()) == m);
  for (std::size_t i = 1; i < cw.positions.size(); ++i)
    CHECK(cw.positions[i] > cw.positions[i - 1]);
  for (int p : cw.positions) CHECK((p >= 0 && p < 128));
  double mean = 0.0;
  for (double v : h.data) mean += v;
  mean /= static_cast<double>(h.size());
  CHECK(cw.values[0] == doctest::Approx(mean).epsilon(1e-5));
}

TEST_CASE("fill places transmitted values exactly and the mean elsewhere") {
  auto model = toy_model();
  auto h = random_csi(8, 8, 7);
  auto cw = codec::encode(model, h, 10);
  auto filled = codec::fill(cw, 8, 8);
  std::vector<char> is_pos(filled.size(), 0);
  for (int i = 0; i < cw.m; ++i) {
    is_pos[static_cast<std::size_t>(cw.positions[i])] = 1;
    CHECK(filled.data[static_cast<std::size_t>(cw.positions[i])] ==
          doctest::Approx(cw.values[static_cast<std::size_t>(i) + 1]));
  }
  for (std::size_t i = 0; i < filled.size(); ++i)
    if (!is_pos[i]) CHECK(filled.data[i] == doctest::Approx(cw.values[0]));
}

TEST_CASE("selection is invariant to positive scaling of the ranking image") {
  Rng rng(11);
  std::vector<float> image(64);
  for (float& v : image) v = static_cast<float>(rng.normal());
  auto base = codec::detail::select_top_m(image.data(), 64, 9);
  for (float& v : image) v *= 37.5f;
  auto scaled = codec::detail::select_top_m(image.data(), 64, 9);
  CHECK(base == scaled);
}

TEST_CASE("tokenize produces the documented sequence length") {
  codec::LayerConfig layers;
  layers.s_p = 4;
  CHECK(layers.sequence_length(32, 32) == 65);
  CHECK(layers.sequence_length(16, 16) == 17);
  CHECK_THROWS_AS(layers.validate(10, 16), ConfigError);
}

TEST_CASE("decode equals the manual stage composition and is deterministic") {
  auto model = toy_model();
  auto h = random_csi(8, 8, 13);
  auto cw = codec::encode(model, h, 16);

  auto direct = codec::decode(model, cw);
  auto h_p = codec::preliminary_decode(model, cw);
  auto enc = codec::codeword_to_result<float>(cw);
  ad::Tensor<float> hp_t({1, 2, 8, 8});
  for (std::size_t i = 0; i < h_p.size(); ++i) hp_t.data[i] = static_cast<float>(h_p.data[i]);
  auto composed =
      codec::var_to_csi(codec::token_predict_batch(model, ad::make_var<float>(hp_t, false)), 8, 8);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct.data[i] == composed.data[i]);

  auto again = codec::decode(model, cw);
  for (std::size_t i = 0; i < direct.size(); ++i) CHECK(direct.data[i] == again.data[i]);
  for (double v : direct.data) CHECK(std::isfinite(v));
}

TEST_CASE("preliminary decoder residual blocks pass through when conv weights are zero") {
  auto model = toy_model();
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      const std::string base = "pd.res" + std::to_string(r) + ".conv" + std::to_string(c);
      auto w = model.params.get(base + ".w");
      std::fill(w->value.data.begin(), w->value.data.end(), 0.0f);
      auto b = model.params.get(base + ".b");
      std::fill(b->value.data.begin(), b->value.data.end(), 0.0f);
      auto beta = model.params.get(base + ".bn.b");
      std::fill(beta->value.data.begin(), beta->value.data.end(), 0.0f);
    }
  auto h = random_csi(8, 8, 17);
  auto cw = codec::encode(model, h, 16);
  auto enc = codec::codeword_to_result<float>(cw);
  auto k = ad::reshape(ad::mean_fill_scatter(enc.values, enc.positions, 128), {1, 2, 8, 8});

  // with zeroed Res Networks the output is head(leaky_relu(leaky_relu(fill)))
  auto hp = codec::preliminary_decode_batch(model, enc, codec::RunMode::kInference);
  auto expect = ad::conv2d(ad::leaky_relu(ad::leaky_relu(k)), model.params.get("pd.head.w"),
                           model.params.get("pd.head.b"), 1, 1);
  for (std::size_t i = 0; i < hp->value.numel(); ++i)
    CHECK(hp->value[i] == doctest::Approx(expect->value[i]).epsilon(1e-5));
}

TEST_CASE("random-masking encoder draws valid positions and raw values") {
  auto model = toy_model();
  auto h = random_csi(8, 8, 19);
  ad::Tensor<float> batch({1, 2, 8, 8});
  for (std::size_t i = 0; i < h.size(); ++i) batch.data[i] = static_cast<float>(h.data[i]);
  Rng rng(23);
  auto enc = codec::encode_random_batch(model, batch, 10, rng);
  REQUIRE(enc.positions.size() == 1);
  const auto& pos = enc.positions[0];
  REQUIRE(pos.size() == 10);
  for (std::size_t i = 1; i < pos.size(); ++i) CHECK(pos[i] > pos[i - 1]);
  for (std::size_t i = 0; i < pos.size(); ++i)
    CHECK(enc.values->value[i + 1] == doctest::Approx(h.data[static_cast<std::size_t>(pos[i])]));
}

TEST_CASE("checkpoint round-trips the model bit-exactly") {
  auto model = toy_model(8, 8, 29);
  model.norm_mean = 0.125f;
  model.norm_std = 0.5f;
  model.norm_frozen = true;
  const std::string path = "ckpt_test.bin";
  io::save_checkpoint(path, model);
  auto loaded = io::load_checkpoint<float>(path);

  CHECK(loaded.n_c == model.n_c);
  CHECK(loaded.layers.d_m == model.layers.d_m);
  CHECK(loaded.norm_mean == model.norm_mean);
  CHECK(loaded.norm_frozen);
  for (const auto& name : model.params.names()) {
    const auto& a = model.params.get(name)->value;
    const auto& b = loaded.params.get(name)->value;
    REQUIRE(a.shape == b.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  // identical reconstructions from the reloaded model
  auto h = random_csi(8, 8, 31);
  auto cw = codec::encode(model, h, 12);
  auto d1 = codec::decode(model, cw);
  auto d2 = codec::decode(loaded, cw);
  for (std::size_t i = 0; i < d1.size(); ++i) CHECK(d1.data[i] == d2.data[i]);
  std::remove(path.c_str());
}
