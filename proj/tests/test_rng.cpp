#include <doctest.h>

#include <cmath>

#include "csinet/rng.hpp"

using csinet::Rng;

TEST_CASE("rng streams are deterministic and index-separable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng s1 = Rng::for_index(7, 3);
  Rng s2 = Rng::for_index(7, 3);
  Rng s3 = Rng::for_index(7, 4);
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(s1.next_u64() != s3.next_u64());
}

TEST_CASE("uniform values lie in the half-open unit interval") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("normal deviates have roughly standard moments") {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("below produces in-range values") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(17) < 17);
}
