#include "csinet/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace csinet::quant {

int Quantizer::quantize(double x) const {
  // thresholds interleave levels; nearest level by binary search
  const auto it = std::upper_bound(thresholds.begin(), thresholds.end(), x);
  return static_cast<int>(it - thresholds.begin());
}

double Quantizer::dequantize(int index) const {
  if (index < 0 || index >= static_cast<int>(levels.size()))
    throw DataError("quantizer: index out of range");
  return levels[static_cast<std::size_t>(index)];
}

Quantizer lloyd_max_train(const std::vector<double>& samples, int bits, int max_iters, double tol) {
  if (bits < 1) throw ConfigError("lloyd_max: bits must be >= 1");
  const std::size_t n_levels = 1u << bits;
  std::set<double> distinct(samples.begin(), samples.end());
  if (distinct.size() < n_levels)
    throw ConfigError("lloyd_max: need at least 2^b distinct sample values");

  std::vector<double> sorted(samples);
  std::sort(sorted.begin(), sorted.end());

  Quantizer q;
  q.bits = bits;
  q.levels.resize(n_levels);
  // initialize at evenly spaced sample quantiles
  for (std::size_t k = 0; k < n_levels; ++k) {
    const double frac = (static_cast<double>(k) + 0.5) / static_cast<double>(n_levels);
    q.levels[k] = sorted[static_cast<std::size_t>(frac * (sorted.size() - 1))];
  }
  std::sort(q.levels.begin(), q.levels.end());

  double prev_mse = std::numeric_limits<double>::infinity();
  std::vector<double> sums(n_levels);
  std::vector<std::size_t> counts(n_levels);
  for (int iter = 0; iter < max_iters; ++iter) {
    q.thresholds.resize(n_levels - 1);
    for (std::size_t k = 0; k + 1 < n_levels; ++k)
      q.thresholds[k] = 0.5 * (q.levels[k] + q.levels[k + 1]);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0u);
    double mse = 0.0;
    for (double x : sorted) {
      const int k = q.quantize(x);
      sums[static_cast<std::size_t>(k)] += x;
      counts[static_cast<std::size_t>(k)]++;
      const double d = x - q.levels[static_cast<std::size_t>(k)];
      mse += d * d;
    }
    mse /= static_cast<double>(sorted.size());
    for (std::size_t k = 0; k < n_levels; ++k)
      if (counts[k] > 0) q.levels[k] = sums[k] / static_cast<double>(counts[k]);
    std::sort(q.levels.begin(), q.levels.end());

    if (prev_mse - mse < tol) break;
    prev_mse = mse;
  }
  q.thresholds.resize(n_levels - 1);
  for (std::size_t k = 0; k + 1 < n_levels; ++k)
    q.thresholds[k] = 0.5 * (q.levels[k] + q.levels[k + 1]);
  return q;
}

Quantizer uniform_quantizer(double lo, double hi, int bits) {
  if (bits < 1 || !(hi > lo)) throw ConfigError("uniform_quantizer: bad range or bits");
  const std::size_t n_levels = 1u << bits;
  Quantizer q;
  q.bits = bits;
  const double step = (hi - lo) / static_cast<double>(n_levels);
  q.levels.resize(n_levels);
  for (std::size_t k = 0; k < n_levels; ++k) q.levels[k] = lo + (static_cast<double>(k) + 0.5) * step;
  q.thresholds.resize(n_levels - 1);
  for (std::size_t k = 0; k + 1 < n_levels; ++k)
    q.thresholds[k] = 0.5 * (q.levels[k] + q.levels[k + 1]);
  return q;
}

double quantizer_mse(const Quantizer& q, const std::vector<double>& samples) {
  double acc = 0.0;
  for (double x : samples) {
    const double d = x - q.dequantize(q.quantize(x));
    acc += d * d;
  }
  return acc / static_cast<double>(samples.size());
}

}  // namespace csinet::quant
