#include <doctest.h>

#include "csinet/quantizer.hpp"
#include "csinet/rng.hpp"

using namespace csinet;

namespace {

std::vector<double> normal_samples(std::size_t n, std::uint64_t seed) {
  std::vector<double> out(n);
  Rng rng(seed);
  for (double& v : out) v = rng.normal();
  return out;
}

}  // namespace

TEST_CASE("lloyd-max on uniform samples at 1 bit approaches the analytic fixed point") {
  std::vector<double> samples(20000);
  Rng rng(1);
  for (double& v : samples) v = rng.uniform();
  auto q = quant::lloyd_max_train(samples, 1);
  REQUIRE(q.levels.size() == 2);
  CHECK(q.levels[0] == doctest::Approx(0.25).epsilon(0.02));
  CHECK(q.levels[1] == doctest::Approx(0.75).epsilon(0.02));
  CHECK(q.thresholds[0] == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("lloyd-max distortion is monotone non-increasing across iterations") {
  auto samples = normal_samples(5000, 2);
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 12; ++iters) {
    auto q = quant::lloyd_max_train(samples, 3, iters);
    const double mse = quant::quantizer_mse(q, samples);
    CHECK(mse <= prev + 1e-12);
    prev = mse;
  }
}

TEST_CASE("lloyd-max beats the uniform quantizer on gaussian data") {
  auto samples = normal_samples(100000, 3);
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  for (int bits : {2, 3, 4}) {
    auto lm = quant::lloyd_max_train(samples, bits);
    auto un = quant::uniform_quantizer(*lo, *hi, bits);
    CHECK(quant::quantizer_mse(lm, samples) < quant::quantizer_mse(un, samples));
  }
}

TEST_CASE("quantize/dequantize are consistent and idempotent on indices") {
  auto samples = normal_samples(4000, 4);
  auto q = quant::lloyd_max_train(samples, 3);
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double x = rng.normal() * 2.0;
    const int idx = q.quantize(x);
    CHECK((idx >= 0 && idx < 8));
    CHECK(q.quantize(q.dequantize(idx)) == idx);
    // nearest-level property against a direct scan
    int best = 0;
    for (int k = 1; k < 8; ++k)
      if (std::abs(x - q.levels[static_cast<std::size_t>(k)]) <
          std::abs(x - q.levels[static_cast<std::size_t>(best)]))
        best = k;
    CHECK(std::abs(q.dequantize(idx) - x) <=
          std::abs(q.dequantize(best) - x) + 1e-12);
  }
}

TEST_CASE("degenerate samples are rejected") {
  std::vector<double> flat(100, 1.0);
  CHECK_THROWS_AS(quant::lloyd_max_train(flat, 2), ConfigError);
  CHECK_THROWS_AS(quant::lloyd_max_train(flat, 0), ConfigError);
  CHECK_THROWS_AS(quant::uniform_quantizer(1.0, 1.0, 2), ConfigError);
}

TEST_CASE("uniform quantizer levels are mid-rise over the range") {
  auto q = quant::uniform_quantizer(0.0, 1.0, 2);
  REQUIRE(q.levels.size() == 4);
  CHECK(q.levels[0] == doctest::Approx(0.125));
  CHECK(q.levels[3] == doctest::Approx(0.875));
  CHECK(q.thresholds[1] == doctest::Approx(0.5));
}
