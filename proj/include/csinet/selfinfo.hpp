#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "csinet/channel.hpp"
#include "csinet/errors.hpp"
#include "csinet/rng.hpp"

namespace csinet::selfinfo {

enum class ThresholdMode { kAbsolute, kQuantile };

struct SelfInfoConfig {
  int radius_r = 3;
  double bandwidth_h = 0.05;
  ThresholdMode threshold_mode = ThresholdMode::kQuantile;
  double threshold_t = 0.0;   // absolute mode
  double quantile_rho = 0.5;  // fraction kept by the mask
  double epsilon = 1e-12;     // clamp floor for log arguments
  bool include_center = true;

  void validate() const {
    if (radius_r < 1) throw ConfigError("selfinfo: radius_r must be >= 1");
    if (!(bandwidth_h > 0)) throw ConfigError("selfinfo: bandwidth_h must be positive");
    if (threshold_mode == ThresholdMode::kQuantile && !(quantile_rho > 0 && quantile_rho < 1))
      throw ConfigError("selfinfo: quantile must be in (0,1)");
    if (!(epsilon > 0)) throw ConfigError("selfinfo: epsilon must be positive");
  }
};

struct SelfInfoMap {
  int n_c = 0, n_t = 0;
  std::vector<double> values;  // 2 x n_c x n_t
  std::vector<char> mask;      // same shape, entries in {0,1}
};

inline double gaussian_kernel(double a, double b, double h) {
  if (!(h > 0)) throw ConfigError("gaussian_kernel: bandwidth must be positive");
  const double d = a - b;
  return std::exp(-d * d / (2.0 * h * h)) / (std::sqrt(2.0 * std::numbers::pi) * h);
}

// Zero border of width R on each side of both spatial dims.
inline std::vector<double> pad(const channel::CsiTensor& h, int R) {
  if (R < 1) throw ConfigError("pad: R must be >= 1");
  const int pr = h.n_c + 2 * R, pc = h.n_t + 2 * R;
  std::vector<double> out(2u * pr * pc, 0.0);
  for (int p = 0; p < 2; ++p)
    for (int r = 0; r < h.n_c; ++r)
      for (int c = 0; c < h.n_t; ++c)
        out[(static_cast<std::size_t>(p) * pr + r + R) * pc + c + R] = h.at(p, r, c);
  return out;
}

// The 9 uniform samples at offsets {-R, 0, +R}^2, center included.
inline std::array<double, 9> sample_neighbors(const std::vector<double>& padded, int n_c, int n_t,
                                              int plane, int r, int c, int R) {
  const int pr = n_c + 2 * R, pc = n_t + 2 * R;
  std::array<double, 9> out;
  int k = 0;
  for (int dr : {-R, 0, R})
    for (int dc : {-R, 0, R})
      out[k++] = padded[(static_cast<std::size_t>(plane) * pr + r + R + dr) * pc + c + R + dc];
  return out;
}

namespace detail {

// Threshold rule shared by maps: keep the top `kept` entries of `values`,
// ties resolved in favor of the lower flattened index.
inline void apply_threshold(const std::vector<double>& values, std::vector<char>& mask,
                            const SelfInfoConfig& cfg) {
  mask.assign(values.size(), 0);
  if (cfg.threshold_mode == ThresholdMode::kAbsolute) {
    for (std::size_t i = 0; i < values.size(); ++i) mask[i] = values[i] >= cfg.threshold_t ? 1 : 0;
    return;
  }
  const auto n = static_cast<long>(values.size());
  long kept = std::llround(cfg.quantile_rho * static_cast<double>(n));
  kept = std::clamp<long>(kept, 0, n);
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  for (long i = 0; i < kept; ++i) mask[order[i]] = 1;
}

template <class NeighborFn>
SelfInfoMap estimate(const channel::CsiTensor& h, const SelfInfoConfig& cfg, NeighborFn&& neighbors) {
  cfg.validate();
  SelfInfoMap out;
  out.n_c = h.n_c;
  out.n_t = h.n_t;
  out.values.resize(h.size());
  const std::vector<double> padded = pad(h, cfg.radius_r);
  std::size_t j = 0;
  for (int p = 0; p < 2; ++p)
    for (int r = 0; r < h.n_c; ++r)
      for (int c = 0; c < h.n_t; ++c, ++j) {
        const double center = h.at(p, r, c);
        double acc = 0.0;
        int count = 0;
        neighbors(padded, p, r, c, [&](double v, bool is_center) {
          if (is_center && !cfg.include_center) return;
          acc += gaussian_kernel(center, v, cfg.bandwidth_h);
          ++count;
        });
        const double q = acc / static_cast<double>(count);
        out.values[j] = -std::log2(std::max(cfg.epsilon, q));
      }
  apply_threshold(out.values, out.mask, cfg);
  return out;
}

}  // namespace detail

// 9-sample subgrid estimator (the production path).
inline SelfInfoMap self_information_analytic(const channel::CsiTensor& h, const SelfInfoConfig& cfg) {
  return detail::estimate(h, cfg,
                          [&](const std::vector<double>& padded, int p, int r, int c, auto&& emit) {
                            for (int dr : {-cfg.radius_r, 0, cfg.radius_r})
                              for (int dc : {-cfg.radius_r, 0, cfg.radius_r}) {
                                const int pr = h.n_c + 2 * cfg.radius_r;
                                const int pc = h.n_t + 2 * cfg.radius_r;
                                emit(padded[(static_cast<std::size_t>(p) * pr + r + cfg.radius_r + dr) * pc +
                                            c + cfg.radius_r + dc],
                                     dr == 0 && dc == 0);
                              }
                          });
}

// Full (2R+1)^2 neighborhood average; test/inspection reference only.
inline SelfInfoMap brute_force_kde_oracle(const channel::CsiTensor& h, const SelfInfoConfig& cfg) {
  return detail::estimate(h, cfg,
                          [&](const std::vector<double>& padded, int p, int r, int c, auto&& emit) {
                            const int pr = h.n_c + 2 * cfg.radius_r;
                            const int pc = h.n_t + 2 * cfg.radius_r;
                            for (int dr = -cfg.radius_r; dr <= cfg.radius_r; ++dr)
                              for (int dc = -cfg.radius_r; dc <= cfg.radius_r; ++dc)
                                emit(padded[(static_cast<std::size_t>(p) * pr + r + cfg.radius_r + dr) * pc +
                                            c + cfg.radius_r + dc],
                                     dr == 0 && dc == 0);
                          });
}

// 9 Gaussian-kernel feature maps, plane-averaged: maps[k][r][c] is the mean
// over the two planes of K(center, neighbor_k).
inline std::vector<double> kernel_maps(const channel::CsiTensor& h, const SelfInfoConfig& cfg) {
  cfg.validate();
  const std::vector<double> padded = pad(h, cfg.radius_r);
  std::vector<double> maps(9u * h.n_c * h.n_t, 0.0);
  for (int p = 0; p < 2; ++p)
    for (int r = 0; r < h.n_c; ++r)
      for (int c = 0; c < h.n_t; ++c) {
        const double center = h.at(p, r, c);
        const auto nb = sample_neighbors(padded, h.n_c, h.n_t, p, r, c, cfg.radius_r);
        for (int k = 0; k < 9; ++k)
          maps[(static_cast<std::size_t>(k) * h.n_c + r) * h.n_t + c] +=
              0.5 * gaussian_kernel(center, nb[k], cfg.bandwidth_h);
      }
  return maps;
}

// Fixed 64x9 aggregation kernel; "convolution without gradients and biases".
struct FrozenAggregator {
  static constexpr int kChannels = 64;
  std::vector<double> weights;  // 64 x 9
  std::uint64_t seed = 0;

  static FrozenAggregator random(std::uint64_t seed) {
    FrozenAggregator agg;
    agg.seed = seed;
    agg.weights.resize(kChannels * 9);
    Rng rng(seed);
    for (int ch = 0; ch < kChannels; ++ch) {
      double norm2 = 0.0;
      for (int k = 0; k < 9; ++k) {
        const double w = rng.normal();
        agg.weights[ch * 9 + k] = w;
        norm2 += w * w;
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (int k = 0; k < 9; ++k) agg.weights[ch * 9 + k] *= inv;
    }
    return agg;
  }

  // Every channel averages the 9 kernel maps uniformly; channel 0 then
  // reproduces the analytic estimator.
  static FrozenAggregator uniform() {
    FrozenAggregator agg;
    agg.weights.assign(kChannels * 9, 1.0 / 9.0);
    return agg;
  }
};

struct SicnetOutput {
  int n_c = 0, n_t = 0;
  std::vector<double> maps;  // 64 x n_c x n_t
  std::vector<char> mask;    // same shape
};

// maps = -log2(max(eps, agg(kernel_maps))); per-channel quantile mask.
inline SicnetOutput sicnet_forward(const std::vector<double>& kmaps, int n_c, int n_t,
                                   const FrozenAggregator& agg, const SelfInfoConfig& cfg) {
  cfg.validate();
  if (kmaps.size() != 9u * n_c * n_t) throw DimensionError("sicnet: kernel map shape mismatch");
  SicnetOutput out;
  out.n_c = n_c;
  out.n_t = n_t;
  const std::size_t plane = static_cast<std::size_t>(n_c) * n_t;
  out.maps.resize(FrozenAggregator::kChannels * plane);
  out.mask.resize(out.maps.size());
  std::vector<double> chan(plane);
  std::vector<char> chan_mask;
  for (int ch = 0; ch < FrozenAggregator::kChannels; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (int k = 0; k < 9; ++k) acc += agg.weights[ch * 9 + k] * kmaps[k * plane + i];
      chan[i] = -std::log2(std::max(cfg.epsilon, acc));
      out.maps[ch * plane + i] = chan[i];
    }
    detail::apply_threshold(chan, chan_mask, cfg);
    std::copy(chan_mask.begin(), chan_mask.end(), out.mask.begin() + ch * plane);
  }
  return out;
}

}  // namespace csinet::selfinfo
