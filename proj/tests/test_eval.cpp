#include <doctest.h>

#include "csinet/eval.hpp"

using namespace csinet;

namespace {

std::vector<channel::CsiTensor> random_set(int count, int n_c, int n_t, std::uint64_t seed) {
  std::vector<channel::CsiTensor> out;
  for (int i = 0; i < count; ++i) {
    channel::CsiTensor h(n_c, n_t);
    Rng rng(seed + static_cast<std::uint64_t>(i));
    for (double& v : h.data) v = rng.normal();
    out.push_back(std::move(h));
  }
  return out;
}

// independent naive re-implementation used as the metric oracle
double nmse_oracle(const std::vector<channel::CsiTensor>& h,
                   const std::vector<channel::CsiTensor>& hh) {
  double acc = 0.0;
  for (std::size_t s = 0; s < h.size(); ++s) {
    double num = 0.0, den = 0.0;
    for (int p = 0; p < 2; ++p)
      for (int r = 0; r < h[s].n_c; ++r)
        for (int c = 0; c < h[s].n_t; ++c) {
          num += (h[s].at(p, r, c) - hh[s].at(p, r, c)) * (h[s].at(p, r, c) - hh[s].at(p, r, c));
          den += h[s].at(p, r, c) * h[s].at(p, r, c);
        }
    acc += num / den;
  }
  return acc / static_cast<double>(h.size());
}

double sgcs_oracle(const channel::CsiTensor& h, const channel::CsiTensor& hh) {
  std::complex<double> tr = 0.0;
  double na = 0.0, nb = 0.0;
  for (int r = 0; r < h.n_c; ++r)
    for (int c = 0; c < h.n_t; ++c) {
      const std::complex<double> a{h.at(0, r, c), h.at(1, r, c)};
      const std::complex<double> b{hh.at(0, r, c), hh.at(1, r, c)};
      tr += std::conj(a) * b;
      na += std::norm(a);
      nb += std::norm(b);
    }
  return std::norm(tr) / (na * nb);
}

}  // namespace

TEST_CASE("nmse identities and oracle agreement") {
  auto h = random_set(10, 6, 6, 1);
  CHECK(eval::nmse(h, h) == doctest::Approx(0.0));
  CHECK(eval::nmse_db(0.0) == -std::numeric_limits<double>::infinity());

  std::vector<channel::CsiTensor> zeros(h.size(), channel::CsiTensor(6, 6));
  CHECK(eval::nmse(h, zeros) == doctest::Approx(1.0));
  CHECK(eval::nmse_db(1.0) == doctest::Approx(0.0));

  // ||e||^2/||h||^2 = 0.1 gives exactly -10 dB
  std::vector<channel::CsiTensor> shifted = h;
  for (std::size_t s = 0; s < h.size(); ++s) {
    double hn = 0.0, en = 0.0;
    Rng rng(50 + s);
    std::vector<double> e(h[s].size());
    for (double& v : e) v = rng.normal();
    for (std::size_t i = 0; i < e.size(); ++i) {
      hn += h[s].data[i] * h[s].data[i];
      en += e[i] * e[i];
    }
    const double scale = std::sqrt(0.1 * hn / en);
    for (std::size_t i = 0; i < e.size(); ++i) shifted[s].data[i] = h[s].data[i] + scale * e[i];
  }
  CHECK(eval::nmse_db(eval::nmse(h, shifted)) == doctest::Approx(-10.0).epsilon(1e-10));

  auto hh = random_set(10, 6, 6, 99);
  CHECK(eval::nmse(h, hh) == doctest::Approx(nmse_oracle(h, hh)).epsilon(1e-12));
}

TEST_CASE("nmse scaling invariance and zero-norm rejection") {
  auto h = random_set(5, 4, 4, 2);
  auto hh = random_set(5, 4, 4, 3);
  auto hs = h;
  auto hhs = hh;
  for (auto& t : hs)
    for (double& v : t.data) v *= -3.7;
  for (auto& t : hhs)
    for (double& v : t.data) v *= -3.7;
  CHECK(eval::nmse(hs, hhs) == doctest::Approx(eval::nmse(h, hh)).epsilon(1e-12));

  std::vector<channel::CsiTensor> zeros(1, channel::CsiTensor(4, 4));
  CHECK_THROWS_AS(eval::nmse(zeros, zeros), NumericalError);
}

TEST_CASE("sgcs identities, oracle agreement, and scale invariance") {
  auto h = random_set(8, 6, 6, 4);
  CHECK(eval::sgcs(h, h) == doctest::Approx(1.0));

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::complex<double> c{rng.normal(), rng.normal()};
    if (std::abs(c) < 1e-3) continue;
    std::vector<channel::CsiTensor> scaled = h;
    for (std::size_t s = 0; s < h.size(); ++s) {
      for (int r = 0; r < 6; ++r)
        for (int col = 0; col < 6; ++col) {
          const std::complex<double> v =
              c * std::complex<double>{h[s].at(0, r, col), h[s].at(1, r, col)};
          scaled[s].at(0, r, col) = v.real();
          scaled[s].at(1, r, col) = v.imag();
        }
    }
    CHECK(eval::sgcs(h, scaled) == doctest::Approx(1.0).epsilon(1e-10));
  }

  auto hh = random_set(8, 6, 6, 77);
  double mean = 0.0;
  for (std::size_t s = 0; s < h.size(); ++s) mean += sgcs_oracle(h[s], hh[s]);
  CHECK(eval::sgcs(h, hh) == doctest::Approx(mean / static_cast<double>(h.size())).epsilon(1e-12));

  // trace-orthogonal construction: Im-plane swap with sign flip
  channel::CsiTensor a(2, 2), b(2, 2);
  a.at(0, 0, 0) = 1.0;
  b.at(1, 0, 0) = 0.0;
  b.at(0, 1, 1) = 1.0;  // disjoint support => zero trace
  CHECK(eval::sgcs({a}, {b}) == doctest::Approx(0.0));
}

TEST_CASE("zero-forcing nulls interference under perfect csi") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 4, nt = 16;
    Eigen::MatrixXcd h(k, nt);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < nt; ++c) h(r, c) = {rng.normal(), rng.normal()};
    auto w = eval::zf_precode(h);
    for (int c = 0; c < k; ++c) CHECK(w.col(c).norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (int u = 0; u < k; ++u)
      for (int j = 0; j < k; ++j) {
        if (u == j) continue;
        const double leak = std::norm((h.row(u) * w.col(j)).value());
        const double sig = std::norm((h.row(u) * w.col(u)).value());
        CHECK(leak / sig < 1e-20);
      }
  }
}

TEST_CASE("zf with orthogonal users reduces to matched filtering") {
  const int k = 3, nt = 8;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(k, nt);
  h(0, 0) = 2.0;
  h(1, 3) = {0.0, 1.5};
  h(2, 6) = -1.0;
  auto w = eval::zf_precode(h);
  for (int u = 0; u < k; ++u) {
    const Eigen::VectorXcd mf = h.row(u).conjugate().transpose().normalized();
    CHECK(std::abs((mf.adjoint() * w.col(u)).value()) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sum rate arithmetic and interference ordering") {
  // single user, |h^H w|^2 p / noise = 15 -> log2(16) = 4
  eval::MultiUserSetup setup;
  setup.k_users = 1;
  setup.tx_power = 15.0;
  setup.noise_power = 1.0;
  setup.true_h = Eigen::MatrixXcd::Zero(1, 4);
  setup.true_h(0, 0) = 1.0;
  setup.recon_h = setup.true_h;
  auto w = eval::zf_precode(setup.recon_h);
  auto rates = eval::sum_rate(setup, w);
  REQUIRE(rates.size() == 1);
  CHECK(rates[0] == doctest::Approx(4.0).epsilon(1e-12));

  // perfect CSI beats perturbed CSI on average
  Rng rng(7);
  double perfect = 0.0, noisy = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    eval::MultiUserSetup s;
    s.k_users = 4;
    s.tx_power = 4.0;
    s.noise_power = 0.1;
    s.true_h.resize(4, 16);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 16; ++c) s.true_h(r, c) = {rng.normal(), rng.normal()};
    s.recon_h = s.true_h;
    for (double r : eval::sum_rate(s, eval::zf_precode(s.recon_h))) perfect += r;
    Eigen::MatrixXcd pert = s.true_h;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 16; ++c) pert(r, c) += 0.5 * std::complex<double>{rng.normal(), rng.normal()};
    s.recon_h = pert;
    for (double r : eval::sum_rate(s, eval::zf_precode(s.recon_h))) noisy += r;
  }
  CHECK(perfect > noisy);
}

TEST_CASE("interference grows monotonically with the perturbation norm") {
  Rng rng(8);
  Eigen::MatrixXcd h(4, 16), dir(4, 16);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 16; ++c) {
      h(r, c) = {rng.normal(), rng.normal()};
      dir(r, c) = {rng.normal(), rng.normal()};
    }
  double prev = -1.0;
  for (double eps : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    auto w = eval::zf_precode(h + eps * dir);
    double leak = 0.0;
    for (int u = 0; u < 4; ++u)
      for (int j = 0; j < 4; ++j)
        if (u != j) leak += std::norm((h.row(u) * w.col(j)).value());
    CHECK(leak > prev);
    prev = leak;
  }
}

TEST_CASE("evaluate harness: identity reconstruction scores perfectly") {
  auto h = random_set(6, 6, 6, 9);
  // bypass the model: feed the reference as the reconstruction
  CHECK(eval::nmse(h, h) == doctest::Approx(0.0));
  CHECK(eval::sgcs(h, h) == doctest::Approx(1.0));
}

TEST_CASE("eval report CSV round-trips losslessly") {
  eval::EvalReport r;
  r.scenario = "toy";
  r.variant = "full";
  r.m = 28;
  r.sigma = 1.0 / 64;
  r.nmse_linear = 0.05;
  r.nmse_db = eval::nmse_db(0.05);
  r.sgcs = 0.93;
  r.mean_rate = 3.5;
  r.samples = 500;
  r.quantizer_bits = 4;
  r.snr_db = std::numeric_limits<double>::infinity();
  auto back = eval::EvalReport::from_csv_row(r.csv_row());
  CHECK(back.scenario == r.scenario);
  CHECK(back.variant == r.variant);
  CHECK(back.m == r.m);
  CHECK(back.sigma == r.sigma);
  CHECK(back.nmse_linear == r.nmse_linear);
  CHECK(back.nmse_db == r.nmse_db);
  CHECK(back.sgcs == r.sgcs);
  CHECK(back.mean_rate == r.mean_rate);
  CHECK(back.samples == r.samples);
  CHECK(back.quantizer_bits == r.quantizer_bits);
  CHECK(std::isinf(back.snr_db));
}

TEST_CASE("parameter and flop accounting") {
  codec::LayerConfig layers;
  layers.d_m = 16;
  layers.d_ff = 32;
  layers.n_heads = 4;
  layers.n_trans = 1;
  layers.s_p = 4;
  selfinfo::SelfInfoConfig si;
  si.radius_r = 1;
  auto model = codec::build_model<float>(8, 8, layers, si, 1);
  auto counts = eval::count_params(model);

  // hand count of the encoder stack: conv 2->64 + bn, conv 64->2 + bn
  const std::size_t en = (64 * 2 * 9 + 64) + (64 + 64) + (2 * 64 * 9 + 2) + (2 + 2);
  CHECK(counts.at("EN") == en);
  CHECK(counts.at("total") == counts.at("EN") + counts.at("PD") + counts.at("TP"));

  auto f1 = eval::count_flops(8, 8, layers);
  layers.n_trans = 2;
  auto f2 = eval::count_flops(8, 8, layers);
  const double nn = 64.0;
  const double base = 3204.0 * nn + 2.0 * layers.d_m * nn;
  CHECK(f2.bs - base == doctest::Approx(2.0 * (f1.bs - base)).epsilon(1e-12));
  CHECK(f1.ue == f2.ue);
}
