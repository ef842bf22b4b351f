#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

#include "csinet/errors.hpp"

namespace csinet::channel {

struct ChannelScenario {
  int n_f = 256;          // subcarriers
  int n_t = 16;           // BS antennas
  int n_c = 16;           // retained delay rows
  int n_paths = 3;        // multipath components
  double carrier_hz = 5.3e9;
  double bandwidth_hz = 20e6;
  double max_delay_s = 5e-7;
  std::uint64_t seed = 1;

  void validate() const;
};

// Full-scale dimensions (N_f=1024, N_c=32, N_t=32) as a named preset.
ChannelScenario full_scale_preset();
ChannelScenario desk_preset();

struct Path {
  std::complex<double> gain;
  double angle_rad;   // departure angle
  double delay_s;
  double doppler_hz;  // zero when static
};

struct PathSet {
  std::vector<Path> paths;
};

using SpatialFreqChannel = Eigen::MatrixXcd;  // N_f x N_t

// Real-valued truncated angle-delay CSI: plane 0 = Re, plane 1 = Im,
// row-major (plane, row, col).
struct CsiTensor {
  int n_c = 0;
  int n_t = 0;
  std::vector<double> data;  // 2 * n_c * n_t

  CsiTensor() = default;
  CsiTensor(int nc, int nt) : n_c(nc), n_t(nt), data(2u * nc * nt, 0.0) {}

  double& at(int plane, int r, int c) { return data[(static_cast<std::size_t>(plane) * n_c + r) * n_t + c]; }
  double at(int plane, int r, int c) const { return data[(static_cast<std::size_t>(plane) * n_c + r) * n_t + c]; }
  std::size_t size() const { return data.size(); }
  double squared_norm() const;
};

PathSet generate_paths(const ChannelScenario& scenario, std::uint64_t rng_seed);

SpatialFreqChannel synthesize(const PathSet& paths, const ChannelScenario& scenario);

// Unitary 2D DFT to the angle-delay domain and its inverse.
Eigen::MatrixXcd to_angle_delay(const SpatialFreqChannel& h);
SpatialFreqChannel from_angle_delay(const Eigen::MatrixXcd& h_bar);

Eigen::MatrixXcd truncate(const Eigen::MatrixXcd& h_bar, int n_c);

CsiTensor to_real(const Eigen::MatrixXcd& hc);
Eigen::MatrixXcd to_complex(const CsiTensor& h);

// snr_db = +infinity disables the noise entirely.
CsiTensor add_awgn(const CsiTensor& h, double snr_db, std::uint64_t seed);

PathSet apply_doppler(const PathSet& paths, double speed_mps, double carrier_hz,
                      double elapsed_s, std::uint64_t seed);

// Full generator: paths -> spatial-frequency -> angle-delay -> truncate -> real.
CsiTensor generate_sample(const ChannelScenario& scenario, std::uint64_t sample_index);
CsiTensor generate_doppler_sample(const ChannelScenario& scenario, std::uint64_t sample_index,
                                  double speed_mps, double elapsed_s);

}  // namespace csinet::channel
