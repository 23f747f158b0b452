#include <doctest.h>

#include <cmath>

#include "fdi/dynamics.hpp"
#include "fdi/rng.hpp"

using namespace fdi;

TEST_CASE("counter rng is addressable and deterministic") {
  const CounterRng a(42, Stream::kNoise, 7);
  const CounterRng b(42, Stream::kNoise, 7);
  for (std::uint64_t k : {0ULL, 1ULL, 999ULL, 123456789ULL}) {
    CHECK(a.uniform01(k, 0) == b.uniform01(k, 0));
    CHECK(a.gaussian(k, 0) == b.gaussian(k, 0));
  }
  // different trials / streams decorrelate
  const CounterRng c(42, Stream::kNoise, 8);
  CHECK(a.uniform01(0, 0) != c.uniform01(0, 0));
  const CounterRng d(42, Stream::kProbe, 7);
  CHECK(a.uniform01(0, 0) != d.uniform01(0, 0));
}

TEST_CASE("uniform01 stays in [0,1) and has the right mean") {
  const CounterRng rng(7, Stream::kTest, 0);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01(i, 0);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("sphere draws are unit norm with zero mean") {
  const CounterRng rng(11, Stream::kTest, 0);
  Vector mean = Vector::Zero(3);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const Vector v = rng.sphere(i, 3);
    REQUIRE(std::abs(v.norm() - 1.0) < 1e-12);
    mean += v;
  }
  mean /= n;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("noise sources match their declared moments") {
  SUBCASE("none is always zero") {
    const NoiseSource src(NoiseSpec::none(), 5);
    for (std::uint64_t k = 0; k < 100; ++k) CHECK(src.sample(3, k) == 0.0);
  }
  SUBCASE("gaussian(0, 0.02) sample variance within 1%") {
    const NoiseSource src(NoiseSpec::gaussian(0.0, 0.02), 5);
    const int n = 1000000;
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < n; ++k) {
      const double d = src.sample(0, k);
      sum += d;
      sumsq += d * d;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(var - 0.02) < 0.0002);
    CHECK(std::abs(mean) < 0.001);
  }
  SUBCASE("uniform(0, 0.02) sample mean within 5% of 0.01") {
    const NoiseSource src(NoiseSpec::uniform(0.0, 0.02), 5);
    const int n = 1000000;
    double sum = 0.0;
    for (int k = 0; k < n; ++k) sum += src.sample(0, k);
    CHECK(std::abs(sum / n - 0.01) < 0.0005);
  }
}

TEST_CASE("noise determinism across identical streams") {
  const NoiseSource a(NoiseSpec::gaussian(0.0, 0.02), 99);
  const NoiseSource b(NoiseSpec::gaussian(0.0, 0.02), 99);
  for (std::uint64_t trial : {0ULL, 1ULL, 49ULL}) {
    for (std::uint64_t k : {0ULL, 1ULL, 20000ULL}) {
      CHECK(a.sample(trial, k) == b.sample(trial, k));
    }
  }
}

TEST_CASE("noise spec validation") {
  CHECK_THROWS_AS(NoiseSpec::gaussian(0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(NoiseSpec::gaussian(0.0, -1.0), ConfigError);
  CHECK_THROWS_AS(NoiseSpec::uniform(1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(NoiseSpec::uniform(2.0, 1.0), ConfigError);
}
