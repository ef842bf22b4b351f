#pragma once

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "csinet/codec.hpp"

namespace csinet::train {

struct TrainConfig {
  int epochs_total = 50;  // T_t
  int warmup_epochs = 5;  // T_w
  double lr_max = 2e-3;
  double lr_min = 0.0;
  int batch_size = 32;
  int patience = 10;
  bool freeze_stage2 = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (warmup_epochs < 0 || warmup_epochs >= epochs_total)
      throw ConfigError("train: need 0 <= T_w < T_t");
    if (!(lr_max >= lr_min) || lr_min < 0) throw ConfigError("train: need lr_max >= lr_min >= 0");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 for batch norm");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
  }
};

// Full-scale preset (300 epochs, patience 20); toy defaults are in TrainConfig.
inline TrainConfig full_scale_preset() {
  TrainConfig cfg;
  cfg.epochs_total = 300;
  cfg.warmup_epochs = 30;
  cfg.patience = 20;
  return cfg;
}

struct EpochRecord {
  int epoch = 0;
  std::string stage;
  double lr = 0, train_loss = 0, val_loss = 0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();

  void append(const TrainLog& other) {
    epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
    if (other.best_val < best_val) {
      best_val = other.best_val;
      best_epoch = other.best_epoch;
    }
  }

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("trainlog: cannot open for writing: " + path);
    os << "epoch,stage,lr,train_loss,val_loss\n";
    for (const auto& e : epochs)
      os << e.epoch << "," << e.stage << "," << e.lr << "," << e.train_loss << "," << e.val_loss
         << "\n";
  }
};

struct RatioSchedule {
  std::vector<int> m_values;

  void validate(int flat_size) const {
    if (m_values.empty()) throw ConfigError("ratio schedule: empty");
    for (int m : m_values)
      if (m < 0 || m > flat_size) throw ConfigError("ratio schedule: m out of range");
  }
};

// Linear warmup to lr_max over T_w epochs, then cosine annealing to lr_min.
inline double cosine_lr(int t, const TrainConfig& cfg) {
  cfg.validate();
  if (t < 0 || t > cfg.epochs_total) throw ConfigError("cosine_lr: t out of range");
  if (t < cfg.warmup_epochs)
    return cfg.lr_max * static_cast<double>(t) / static_cast<double>(cfg.warmup_epochs);
  const double frac = static_cast<double>(t - cfg.warmup_epochs) /
                      static_cast<double>(cfg.epochs_total - cfg.warmup_epochs);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(frac * std::numbers::pi));
}

// ---- Adam ----

template <class S>
struct AdamState {
  std::map<std::string, std::pair<ad::Tensor<S>, ad::Tensor<S>>> moments;
  std::int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

template <class S>
void adam_step(ad::ParameterStore<S>& params, AdamState<S>& st, double lr) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (const auto& name : params.names()) {
    auto& e = params.entry(name);
    if (e.frozen || !e.var->requires_grad) continue;
    e.var->ensure_grad();
    auto it = st.moments.find(name);
    if (it == st.moments.end())
      it = st.moments
               .emplace(name, std::make_pair(ad::Tensor<S>::zeros(e.var->value.shape),
                                             ad::Tensor<S>::zeros(e.var->value.shape)))
               .first;
    auto& [m1, m2] = it->second;
    for (std::size_t i = 0; i < e.var->value.numel(); ++i) {
      const double g = static_cast<double>(e.var->grad[i]);
      if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient in " + name);
      const double m = st.beta1 * static_cast<double>(m1[i]) + (1.0 - st.beta1) * g;
      const double v = st.beta2 * static_cast<double>(m2[i]) + (1.0 - st.beta2) * g * g;
      m1[i] = static_cast<S>(m);
      m2[i] = static_cast<S>(v);
      e.var->value[i] -= static_cast<S>(lr * (m / bc1) / (std::sqrt(v / bc2) + st.eps));
    }
  }
}

// ---- snapshots for early stopping ----

template <class S>
struct ModelSnapshot {
  std::map<std::string, ad::Tensor<S>> params;
  std::vector<std::pair<ad::Tensor<S>, ad::Tensor<S>>> bn;
  S norm_mean = S(0), norm_std = S(1);
  bool norm_frozen = false;
};

template <class S>
ModelSnapshot<S> take_snapshot(const codec::PipelineModel<S>& model) {
  ModelSnapshot<S> snap;
  for (const auto& name : model.params.names()) snap.params[name] = model.params.get(name)->value;
  snap.bn.push_back({model.bn_en1.running_mean, model.bn_en1.running_var});
  snap.bn.push_back({model.bn_en2.running_mean, model.bn_en2.running_var});
  for (const auto& st : model.bn_pd) snap.bn.push_back({st.running_mean, st.running_var});
  snap.norm_mean = model.norm_mean;
  snap.norm_std = model.norm_std;
  snap.norm_frozen = model.norm_frozen;
  return snap;
}

template <class S>
void restore_snapshot(codec::PipelineModel<S>& model, const ModelSnapshot<S>& snap) {
  for (const auto& [name, t] : snap.params) model.params.get(name)->value = t;
  auto bn = snap.bn.begin();
  auto put = [&](ad::BatchNormState<S>& st) {
    st.running_mean = bn->first;
    st.running_var = bn->second;
    ++bn;
  };
  put(model.bn_en1);
  put(model.bn_en2);
  for (auto& st : model.bn_pd) put(st);
  model.norm_mean = snap.norm_mean;
  model.norm_std = snap.norm_std;
  model.norm_frozen = snap.norm_frozen;
}

// ---- shared batching loop ----

namespace detail {

template <class S>
ad::Tensor<S> make_batch(const std::vector<channel::CsiTensor>& data, const std::vector<int>& idx,
                         std::size_t start, std::size_t count) {
  const int n_c = data.front().n_c, n_t = data.front().n_t;
  ad::Tensor<S> out({static_cast<int>(count), 2, n_c, n_t});
  for (std::size_t b = 0; b < count; ++b) {
    const auto& s = data[static_cast<std::size_t>(idx[start + b])];
    for (std::size_t i = 0; i < s.size(); ++i) out.data[b * s.size() + i] = static_cast<S>(s.data[i]);
  }
  return out;
}

enum class Stage { kPrelim, kFull };

// Builds the stage loss on one batch: L1 = ||H_p - H||^2, L2 = ||H_hat - H||^2.
template <class S>
ad::Var<S> stage_loss(codec::PipelineModel<S>& model, const ad::Tensor<S>& batch, int m,
                      Stage stage, codec::RunMode mode) {
  auto enc = codec::encode_batch(model, batch, m, mode);
  ad::Var<S> out = stage == Stage::kPrelim
                       ? codec::preliminary_decode_batch(model, enc, mode)
                       : codec::decode_batch(model, enc, mode);
  return ad::mse_loss(out, batch);
}

template <class S>
double validation_loss(codec::PipelineModel<S>& model, const std::vector<channel::CsiTensor>& val,
                       int m, Stage stage, int batch_size) {
  std::vector<int> idx(val.size());
  std::iota(idx.begin(), idx.end(), 0);
  double acc = 0.0;
  for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min<std::size_t>(batch_size, val.size() - start);
    auto batch = make_batch<S>(val, idx, start, count);
    auto loss = stage_loss(model, batch, m, stage, codec::RunMode::kInference);
    acc += static_cast<double>(loss->value[0]) * static_cast<double>(count);
  }
  return acc / static_cast<double>(val.size());
}

template <class S>
TrainLog run_stage(codec::PipelineModel<S>& model, const std::vector<channel::CsiTensor>& train,
                   const std::vector<channel::CsiTensor>& val, const RatioSchedule& schedule,
                   const TrainConfig& cfg, Stage stage, const std::string& tag) {
  cfg.validate();
  schedule.validate(model.flat_size());
  if (train.size() < static_cast<std::size_t>(cfg.batch_size))
    throw ConfigError("train: fewer training samples than one batch");
  if (val.empty()) throw ConfigError("train: empty validation set");

  Rng rng(cfg.seed);
  AdamState<S> adam;
  TrainLog log;
  ModelSnapshot<S> best = take_snapshot(model);
  int since_best = 0;

  std::vector<int> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs_total; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);

    double train_acc = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start + static_cast<std::size_t>(cfg.batch_size) <= train.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const int m = schedule.m_values[rng.below(schedule.m_values.size())];
      auto batch = make_batch<S>(train, idx, start, static_cast<std::size_t>(cfg.batch_size));
      model.params.zero_grads();
      auto loss = stage_loss(model, batch, m, stage, codec::RunMode::kTraining);
      ad::backward(loss);
      adam_step(model.params, adam, lr);
      train_acc += static_cast<double>(loss->value[0]);
      ++seen;
    }

    // validation at a fixed representative ratio (first schedule entry)
    const double val_loss =
        validation_loss(model, val, schedule.m_values.front(), stage, cfg.batch_size);
    log.epochs.push_back({epoch, tag, lr, train_acc / static_cast<double>(seen), val_loss});

    if (val_loss < log.best_val) {
      log.best_val = val_loss;
      log.best_epoch = epoch;
      best = take_snapshot(model);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore_snapshot(model, best);
  return log;
}

}  // namespace detail

// Stage 1: train f_EN and f_PD only on the preliminary reconstruction loss;
// O_TP stays frozen and bit-identical. Also fixes the f_TP normalization
// statistics from the training set.
template <class S>
TrainLog train_stage1(codec::PipelineModel<S>& model, const std::vector<channel::CsiTensor>& train,
                      const std::vector<channel::CsiTensor>& val, int m, const TrainConfig& cfg) {
  model.params.set_group_frozen("TP", true);
  TrainLog log;
  try {
    log = detail::run_stage(model, train, val, RatioSchedule{{m}}, cfg, detail::Stage::kPrelim,
                            "stage1");
  } catch (...) {
    model.params.set_group_frozen("TP", false);
    throw;
  }
  model.params.set_group_frozen("TP", false);

  if (!model.norm_frozen) {
    double mean = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : train)
      for (double v : s.data) {
        mean += v;
        sq += v * v;
        ++n;
      }
    mean /= static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    model.norm_mean = static_cast<S>(mean);
    model.norm_std = static_cast<S>(std::sqrt(std::max(var, 1e-12)));
    model.norm_frozen = true;
  }
  return log;
}

// Stage 2: jointly train all modules on the final reconstruction loss;
// freeze_stage2 keeps O_EN and O_PD fixed (the hard-convergence branch).
template <class S>
TrainLog train_stage2(codec::PipelineModel<S>& model, const std::vector<channel::CsiTensor>& train,
                      const std::vector<channel::CsiTensor>& val, int m, const TrainConfig& cfg) {
  if (cfg.freeze_stage2) {
    model.params.set_group_frozen("EN", true);
    model.params.set_group_frozen("PD", true);
  }
  TrainLog log;
  try {
    log = detail::run_stage(model, train, val, RatioSchedule{{m}}, cfg, detail::Stage::kFull,
                            "stage2");
  } catch (...) {
    model.params.set_group_frozen("EN", false);
    model.params.set_group_frozen("PD", false);
    throw;
  }
  if (cfg.freeze_stage2) {
    model.params.set_group_frozen("EN", false);
    model.params.set_group_frozen("PD", false);
  }
  return log;
}

// Stage-2 variant where each iteration draws its ratio from the schedule, so
// one model serves all scheduled ratios at inference.
template <class S>
TrainLog train_multi_ratio(codec::PipelineModel<S>& model,
                           const std::vector<channel::CsiTensor>& train,
                           const std::vector<channel::CsiTensor>& val,
                           const RatioSchedule& schedule, const TrainConfig& cfg) {
  return detail::run_stage(model, train, val, schedule, cfg, detail::Stage::kFull, "multiratio");
}

// Continues stage-2 training on a sample budget from the target scenario.
template <class S>
TrainLog fine_tune(codec::PipelineModel<S>& model, const std::vector<channel::CsiTensor>& target,
                   const std::vector<channel::CsiTensor>& val, int sample_budget, int m,
                   const TrainConfig& cfg) {
  if (sample_budget < 0) throw ConfigError("fine_tune: negative budget");
  if (sample_budget == 0) return TrainLog{};
  std::vector<channel::CsiTensor> subset(
      target.begin(), target.begin() + std::min<std::size_t>(target.size(), sample_budget));
  return train_stage2(model, subset, val, m, cfg);
}

}  // namespace csinet::train
