#include <doctest.h>

#include <cstdio>

#include "csinet/training.hpp"

using namespace csinet;

namespace {

codec::PipelineModel<float> toy_model(std::uint64_t seed = 3) {
  codec::LayerConfig layers;
  layers.d_m = 16;
  layers.d_ff = 32;
  layers.n_heads = 4;
  layers.n_trans = 1;
  layers.s_p = 4;
  selfinfo::SelfInfoConfig si;
  si.radius_r = 1;
  return codec::build_model<float>(8, 8, layers, si, seed);
}

std::vector<channel::CsiTensor> toy_dataset(int count, std::uint64_t seed) {
  channel::ChannelScenario s;
  s.n_f = 32;
  s.n_c = 8;
  s.n_t = 8;
  s.seed = seed;
  std::vector<channel::CsiTensor> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(channel::generate_sample(s, static_cast<std::uint64_t>(i)));
  return out;
}

train::TrainConfig quick_config() {
  train::TrainConfig cfg;
  cfg.epochs_total = 3;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 4;
  cfg.patience = 5;
  return cfg;
}

}  // namespace

TEST_CASE("cosine schedule hits the documented anchor points") {
  train::TrainConfig cfg;
  cfg.epochs_total = 50;
  cfg.warmup_epochs = 10;  // even annealing window for the midpoint check
  cfg.lr_max = 2e-3;
  cfg.lr_min = 2e-4;
  CHECK(train::cosine_lr(0, cfg) == doctest::Approx(0.0));
  CHECK(train::cosine_lr(cfg.warmup_epochs, cfg) == doctest::Approx(cfg.lr_max));
  CHECK(train::cosine_lr(cfg.epochs_total, cfg) == doctest::Approx(cfg.lr_min));
  // halfway through the annealing window: cos(pi/2) = 0 applies exactly
  const int mid = cfg.warmup_epochs + (cfg.epochs_total - cfg.warmup_epochs) / 2;
  REQUIRE((cfg.epochs_total - cfg.warmup_epochs) % 2 == 0);
  CHECK(train::cosine_lr(mid, cfg) == doctest::Approx(0.5 * (cfg.lr_max + cfg.lr_min)));
  // continuity at T_w and monotone decay afterwards
  for (int t = cfg.warmup_epochs; t < cfg.epochs_total; ++t)
    CHECK(train::cosine_lr(t + 1, cfg) <= train::cosine_lr(t, cfg) + 1e-15);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, first step is -lr*sign") {
  ad::ParameterStore<float> store;
  auto x = store.create("x", ad::Tensor<float>::full({1}, 1.0f), "G");
  train::AdamState<float> st;
  x->ensure_grad();
  x->grad[0] = 0.0f;
  train::adam_step(store, st, 0.1);
  CHECK(x->value[0] == 1.0f);

  // f(x) = x^2 at x=1: first bias-corrected step is -lr * sign(grad)
  train::AdamState<float> st2;
  x->value[0] = 1.0f;
  x->grad[0] = 2.0f;
  train::adam_step(store, st2, 0.1);
  CHECK(x->value[0] == doctest::Approx(0.9).epsilon(1e-4));

  x->grad[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(train::adam_step(store, st2, 0.1), NumericalError);
}

TEST_CASE("stage 1 freezes the transformer group bit-exactly") {
  auto model = toy_model();
  auto train_set = toy_dataset(16, 100);
  auto val_set = toy_dataset(8, 200);

  std::map<std::string, ad::Tensor<float>> before;
  for (const auto& name : model.params.names())
    if (model.params.entry(name).group == "TP") before[name] = model.params.get(name)->value;

  auto log = train::train_stage1(model, train_set, val_set, 12, quick_config());
  CHECK(!log.epochs.empty());
  CHECK(log.best_epoch >= 0);
  CHECK(model.norm_frozen);

  for (const auto& [name, t] : before) {
    const auto& after = model.params.get(name)->value;
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == after[i]);
  }
  bool en_changed = false;
  for (float v : model.params.get("en.conv1.w")->value.data)
    if (v != 0.0f) en_changed = true;
  CHECK(en_changed);
}

TEST_CASE("stage 2 with freeze flag leaves encoder and preliminary decoder untouched") {
  auto model = toy_model();
  auto train_set = toy_dataset(16, 300);
  auto val_set = toy_dataset(8, 400);
  auto cfg = quick_config();
  train::train_stage1(model, train_set, val_set, 12, cfg);

  std::map<std::string, ad::Tensor<float>> before;
  for (const auto& name : model.params.names()) {
    const auto& g = model.params.entry(name).group;
    if (g == "EN" || g == "PD") before[name] = model.params.get(name)->value;
  }
  cfg.freeze_stage2 = true;
  train::train_stage2(model, train_set, val_set, 12, cfg);
  for (const auto& [name, t] : before) {
    const auto& after = model.params.get(name)->value;
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == after[i]);
  }
}

TEST_CASE("training is deterministic for identical seeds and data") {
  auto run = [] {
    auto model = toy_model(7);
    auto train_set = toy_dataset(16, 500);
    auto val_set = toy_dataset(8, 600);
    auto log = train::train_stage1(model, train_set, val_set, 12, quick_config());
    return std::make_pair(model.params.get("en.conv1.w")->value, log);
  };
  auto [w1, log1] = run();
  auto [w2, log2] = run();
  for (std::size_t i = 0; i < w1.numel(); ++i) CHECK(w1[i] == w2[i]);
  REQUIRE(log1.epochs.size() == log2.epochs.size());
  for (std::size_t i = 0; i < log1.epochs.size(); ++i) {
    CHECK(log1.epochs[i].train_loss == log2.epochs[i].train_loss);
    CHECK(log1.epochs[i].val_loss == log2.epochs[i].val_loss);
  }
}

TEST_CASE("early stopping restores the best checkpoint, never the last epoch") {
  // degenerate schedule with zero learning rate after a large warmup spike:
  // the first epochs move the weights, later epochs cannot improve
  auto model = toy_model();
  auto train_set = toy_dataset(16, 700);
  auto val_set = toy_dataset(8, 800);
  auto cfg = quick_config();
  cfg.epochs_total = 12;
  cfg.patience = 3;
  auto log = train::train_stage1(model, train_set, val_set, 12, cfg);
  CHECK(log.best_epoch >= 0);
  // best epoch's validation loss is the minimum over the recorded epochs
  double min_val = std::numeric_limits<double>::infinity();
  for (const auto& e : log.epochs) min_val = std::min(min_val, e.val_loss);
  CHECK(log.best_val == doctest::Approx(min_val));
  // early stop bounds the run length after the best epoch
  CHECK(static_cast<int>(log.epochs.size()) <= log.best_epoch + 1 + cfg.patience);
}

TEST_CASE("multi-ratio training evaluates at every scheduled ratio") {
  auto model = toy_model();
  auto train_set = toy_dataset(16, 900);
  auto val_set = toy_dataset(8, 1000);
  train::train_stage1(model, train_set, val_set, 12, quick_config());
  train::RatioSchedule schedule{{6, 12, 24}};
  auto log = train::train_multi_ratio(model, train_set, val_set, schedule, quick_config());
  CHECK(!log.epochs.empty());
  for (int m : schedule.m_values) {
    auto h = train_set.front();
    auto cw = codec::encode(model, h, m);
    auto rec = codec::decode(model, cw);
    for (double v : rec.data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("fine-tune with zero budget is a no-op") {
  auto model = toy_model();
  auto target = toy_dataset(16, 1100);
  auto val_set = toy_dataset(8, 1200);
  auto before = model.params.get("en.conv1.w")->value;
  auto log = train::fine_tune(model, target, val_set, 0, 12, quick_config());
  CHECK(log.epochs.empty());
  const auto& after = model.params.get("en.conv1.w")->value;
  for (std::size_t i = 0; i < before.numel(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("train log CSV round-trip of schema") {
  train::TrainLog log;
  log.epochs.push_back({0, "stage1", 1e-3, 0.5, 0.6});
  log.epochs.push_back({1, "stage2", 5e-4, 0.4, 0.45});
  const std::string path = "trainlog_test.csv";
  log.write_csv(path);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "epoch,stage,lr,train_loss,val_loss");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  is.close();
  std::remove(path.c_str());
}
