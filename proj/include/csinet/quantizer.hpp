#pragma once

#include <cstdint>
#include <vector>

#include "csinet/errors.hpp"

namespace csinet::quant {

struct Quantizer {
  std::vector<double> levels;      // 2^b entries, ascending
  std::vector<double> thresholds;  // 2^b - 1 entries, ascending
  int bits = 0;

  int quantize(double x) const;
  double dequantize(int index) const;
};

// Lloyd-Max scalar quantizer: alternates nearest-level partitioning and
// centroid updates until the MSE improves by less than tol.
Quantizer lloyd_max_train(const std::vector<double>& samples, int bits, int max_iters = 200,
                          double tol = 1e-12);

// Uniform mid-rise quantizer over [lo, hi], for baseline comparisons.
Quantizer uniform_quantizer(double lo, double hi, int bits);

double quantizer_mse(const Quantizer& q, const std::vector<double>& samples);

}  // namespace csinet::quant
