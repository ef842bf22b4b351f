#pragma once

#include <Eigen/Dense>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csinet/codec.hpp"
#include "csinet/quantizer.hpp"

namespace csinet::eval {

// ---- reconstruction metrics ----

double nmse(const std::vector<channel::CsiTensor>& h, const std::vector<channel::CsiTensor>& h_hat);
double nmse_db(double linear);  // 0 -> -infinity sentinel
double sgcs(const std::vector<channel::CsiTensor>& h, const std::vector<channel::CsiTensor>& h_hat);

// ---- multi-user precoding ----

// Row k holds user k's effective (receive-side conjugated) channel, so the
// symbol reaching user k through precoder column j is row(k) * col(j).
struct MultiUserSetup {
  int k_users = 4;
  double tx_power = 1.0;      // total, linear
  double noise_power = 1.0;   // per user, linear
  Eigen::MatrixXcd true_h;    // K x N_t
  Eigen::MatrixXcd recon_h;   // K x N_t

  void validate() const;
};

// W = H^H (H H^H)^{-1}, columns normalized to unit power; rank-deficient
// Gram matrices fall back to a regularized inverse.
Eigen::MatrixXcd zf_precode(const Eigen::MatrixXcd& recon_h);

// R_k = log2(1 + SINR_k) with equal power split, evaluated on the true
// channels with precoders built from the reconstructed ones.
std::vector<double> sum_rate(const MultiUserSetup& setup, const Eigen::MatrixXcd& precoders);

// ---- end-to-end evaluation ----

enum class Variant { kFull, kNoEncoder, kNoPrelim, kNoTransformer, kMeanFill };

std::string variant_name(Variant v);

struct EvalOptions {
  double snr_db = std::numeric_limits<double>::infinity();  // input-CSI noise
  const quant::Quantizer* quantizer = nullptr;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 1;
  int batch_size = 32;
};

struct EvalReport {
  std::string scenario;
  std::string variant;
  int m = 0;
  double sigma = 0;
  double nmse_linear = 0;
  double nmse_db = 0;
  double sgcs = 0;
  double mean_rate = 0;
  int samples = 0;
  int quantizer_bits = 0;
  double snr_db = std::numeric_limits<double>::infinity();

  static std::string csv_header();
  std::string csv_row() const;
  static EvalReport from_csv_row(const std::string& row);
};

struct Reconstruction {
  std::vector<channel::CsiTensor> h_hat;
  std::vector<channel::CsiTensor> h_ref;  // clean references
};

// encode -> (optional quantize/dequantize) -> decode over the dataset,
// honoring the requested ablation variant.
Reconstruction reconstruct(codec::PipelineModel<float>& model,
                           const std::vector<channel::CsiTensor>& dataset, int m,
                           const EvalOptions& options);

EvalReport evaluate(codec::PipelineModel<float>& model,
                    const std::vector<channel::CsiTensor>& dataset, int m,
                    const EvalOptions& options);

// ---- complexity accounting ----

std::map<std::string, std::size_t> count_params(const codec::PipelineModel<float>& model);

struct FlopEstimate {
  double ue = 0;       // encoder side
  double bs = 0;       // decoder side
  double total() const { return ue + bs; }
};

FlopEstimate count_flops(int n_c, int n_t, const codec::LayerConfig& layers);

}  // namespace csinet::eval
