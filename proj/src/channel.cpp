#include "csinet/channel.hpp"

#include <cmath>
#include <numbers>

#include "csinet/rng.hpp"

namespace csinet::channel {

namespace {
constexpr double kSpeedOfLight = 3e8;
constexpr std::complex<double> kI{0.0, 1.0};
}  // namespace

void ChannelScenario::validate() const {
  if (n_f < 1 || n_t < 1 || n_c < 1) throw ConfigError("scenario: all counts must be >= 1");
  if (n_c > n_f) throw ConfigError("scenario: n_c must not exceed n_f");
  if (n_paths < 1) throw ConfigError("scenario: n_paths must be >= 1");
  if (!(max_delay_s > 0)) throw ConfigError("scenario: max_delay_s must be positive");
  if (!(carrier_hz > 0) || !(bandwidth_hz > 0)) throw ConfigError("scenario: frequencies must be positive");
}

ChannelScenario full_scale_preset() {
  ChannelScenario s;
  s.n_f = 1024;
  s.n_t = 32;
  s.n_c = 32;
  s.n_paths = 3;
  s.carrier_hz = 5.3e9;
  s.bandwidth_hz = 20e6;
  s.max_delay_s = 5e-7;
  return s;
}

ChannelScenario desk_preset() { return ChannelScenario{}; }

double CsiTensor::squared_norm() const {
  double acc = 0.0;
  for (double v : data) acc += v * v;
  return acc;
}

PathSet generate_paths(const ChannelScenario& scenario, std::uint64_t rng_seed) {
  scenario.validate();
  Rng rng(rng_seed);
  PathSet out;
  out.paths.reserve(scenario.n_paths);
  // Unit total average power: each complex Gaussian gain has variance 1/n_paths.
  const double sigma = 1.0 / std::sqrt(2.0 * scenario.n_paths);
  for (int p = 0; p < scenario.n_paths; ++p) {
    Path path;
    path.gain = {sigma * rng.normal(), sigma * rng.normal()};
    path.angle_rad = rng.uniform(0.0, 2.0 * std::numbers::pi);
    path.delay_s = rng.uniform(0.0, scenario.max_delay_s);
    path.doppler_hz = 0.0;
    out.paths.push_back(path);
  }
  return out;
}

SpatialFreqChannel synthesize(const PathSet& paths, const ChannelScenario& scenario) {
  scenario.validate();
  SpatialFreqChannel h = SpatialFreqChannel::Zero(scenario.n_f, scenario.n_t);
  const double df = scenario.bandwidth_hz / scenario.n_f;
  for (const Path& p : paths.paths) {
    Eigen::VectorXcd freq(scenario.n_f);
    for (int n = 0; n < scenario.n_f; ++n) {
      freq(n) = std::exp(-kI * (2.0 * std::numbers::pi * (n * df) * p.delay_s));
    }
    Eigen::RowVectorXcd steer(scenario.n_t);
    const double s = std::sin(p.angle_rad);
    for (int a = 0; a < scenario.n_t; ++a) {
      steer(a) = std::exp(-kI * (std::numbers::pi * a * s));
    }
    h.noalias() += p.gain * (freq * steer);
  }
  return h;
}

namespace {

Eigen::MatrixXcd unitary_dft(int n) {
  Eigen::MatrixXcd f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      f(r, c) = scale * std::exp(-kI * (2.0 * std::numbers::pi * r * c / n));
  return f;
}

}  // namespace

Eigen::MatrixXcd to_angle_delay(const SpatialFreqChannel& h) {
  return unitary_dft(static_cast<int>(h.rows())) * h * unitary_dft(static_cast<int>(h.cols()));
}

SpatialFreqChannel from_angle_delay(const Eigen::MatrixXcd& h_bar) {
  return unitary_dft(static_cast<int>(h_bar.rows())).adjoint() * h_bar *
         unitary_dft(static_cast<int>(h_bar.cols())).adjoint();
}

Eigen::MatrixXcd truncate(const Eigen::MatrixXcd& h_bar, int n_c) {
  if (n_c > h_bar.rows()) throw DimensionError("truncate: n_c exceeds row count");
  return h_bar.topRows(n_c);
}

CsiTensor to_real(const Eigen::MatrixXcd& hc) {
  CsiTensor out(static_cast<int>(hc.rows()), static_cast<int>(hc.cols()));
  for (int r = 0; r < out.n_c; ++r)
    for (int c = 0; c < out.n_t; ++c) {
      out.at(0, r, c) = hc(r, c).real();
      out.at(1, r, c) = hc(r, c).imag();
    }
  return out;
}

Eigen::MatrixXcd to_complex(const CsiTensor& h) {
  Eigen::MatrixXcd out(h.n_c, h.n_t);
  for (int r = 0; r < h.n_c; ++r)
    for (int c = 0; c < h.n_t; ++c) out(r, c) = {h.at(0, r, c), h.at(1, r, c)};
  return out;
}

CsiTensor add_awgn(const CsiTensor& h, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db)) return h;
  CsiTensor out = h;
  const double var = h.squared_norm() / static_cast<double>(h.size()) * std::pow(10.0, -snr_db / 10.0);
  const double sd = std::sqrt(var);
  Rng rng(seed);
  for (double& v : out.data) v += sd * rng.normal();
  return out;
}

PathSet apply_doppler(const PathSet& paths, double speed_mps, double carrier_hz,
                      double elapsed_s, std::uint64_t seed) {
  if (speed_mps < 0) throw ConfigError("apply_doppler: speed must be >= 0");
  if (speed_mps == 0.0) return paths;
  PathSet out = paths;
  Rng rng(seed);
  const double f_max = speed_mps * carrier_hz / kSpeedOfLight;
  for (Path& p : out.paths) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.doppler_hz = f_max * std::cos(phi);
    p.gain *= std::exp(kI * (2.0 * std::numbers::pi * p.doppler_hz * elapsed_s));
  }
  return out;
}

CsiTensor generate_sample(const ChannelScenario& scenario, std::uint64_t sample_index) {
  Rng stream = Rng::for_index(scenario.seed, sample_index);
  PathSet paths = generate_paths(scenario, stream.next_u64());
  return to_real(truncate(to_angle_delay(synthesize(paths, scenario)), scenario.n_c));
}

CsiTensor generate_doppler_sample(const ChannelScenario& scenario, std::uint64_t sample_index,
                                  double speed_mps, double elapsed_s) {
  Rng stream = Rng::for_index(scenario.seed, sample_index);
  PathSet paths = generate_paths(scenario, stream.next_u64());
  paths = apply_doppler(paths, speed_mps, scenario.carrier_hz, elapsed_s, stream.next_u64());
  return to_real(truncate(to_angle_delay(synthesize(paths, scenario)), scenario.n_c));
}

}  // namespace csinet::channel
