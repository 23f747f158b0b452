#include <doctest.h>

#include <cmath>

#include "fdi/objective.hpp"

using namespace fdi;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector vec1(double a) { return Vector::Constant(1, a); }

}  // namespace

TEST_CASE("evaluate is tracking norm plus energy") {
  const AdversaryObjective obj(3.0 * Matrix::Identity(2, 2), Reference::constant(-1.5));
  CHECK(obj.evaluate(vec2(0, 0), vec1(-1.5), 10) == doctest::Approx(0.0));
  CHECK(obj.evaluate(vec2(1, 0), vec1(0.0), 10) == doctest::Approx(4.5));

  const AdversaryObjective ramp(Matrix::Identity(2, 2), Reference::ramp(1e-4));
  CHECK(ramp.evaluate(vec2(0, 0), vec1(4.0), 40000) == doctest::Approx(0.0));
}

TEST_CASE("references") {
  const AdversaryObjective stat(Matrix::Identity(2, 2), Reference::constant(-1.5));
  CHECK(stat.reference_at(1)[0] == doctest::Approx(-1.5));
  CHECK(stat.reference_at(99999)[0] == doctest::Approx(-1.5));
  const AdversaryObjective ramp(Matrix::Identity(2, 2), Reference::ramp(1e-4));
  CHECK(ramp.reference_at(40000)[0] == doctest::Approx(4.0));
  CHECK(ramp.reference_at(0)[0] == doctest::Approx(0.0));
}

TEST_CASE("weight matrix validation") {
  Matrix bad(2, 2);
  bad << 1, 2, 0, 1;  // not symmetric
  CHECK_THROWS_AS(AdversaryObjective(bad, Reference::constant(0.0)), ConfigError);
  bad << 1, 0, 0, -1;  // not positive definite
  CHECK_THROWS_AS(AdversaryObjective(bad, Reference::constant(0.0)), ConfigError);
  bad << 0, 0, 0, 0;
  CHECK_THROWS_AS(AdversaryObjective(bad, Reference::constant(0.0)), ConfigError);
}

TEST_CASE("evaluate is nonnegative and zero only at the exact optimum") {
  const AdversaryObjective obj(2.0 * Matrix::Identity(2, 2), Reference::constant(1.0));
  const CounterRng rng(5, Stream::kTest, 0);
  for (int i = 0; i < 200; ++i) {
    const Vector theta = vec2(rng.gaussian(i, 0), rng.gaussian(i, 1));
    const Vector y = vec1(rng.gaussian(i, 2));
    const double v = obj.evaluate(theta, y, 3);
    REQUIRE(v >= 0.0);
    if (v == 0.0) {
      CHECK(theta.norm() == 0.0);
      CHECK(y[0] == doctest::Approx(1.0));
    }
  }
  CHECK(obj.evaluate(vec2(0, 0), vec1(1.0), 3) == 0.0);
}

TEST_CASE("evaluate is jointly convex in (theta, y)") {
  const AdversaryObjective obj(3.0 * Matrix::Identity(2, 2), Reference::constant(-1.5));
  const CounterRng rng(6, Stream::kTest, 0);
  for (int i = 0; i < 300; ++i) {
    const Vector t0 = vec2(rng.gaussian(i, 0), rng.gaussian(i, 1));
    const Vector t1 = vec2(rng.gaussian(i, 2), rng.gaussian(i, 3));
    const Vector y0 = vec1(rng.gaussian(i, 4));
    const Vector y1 = vec1(rng.gaussian(i, 5));
    const double mid = obj.evaluate(0.5 * (t0 + t1), 0.5 * (y0 + y1), 2);
    const double ends = 0.5 * (obj.evaluate(t0, y0, 2) + obj.evaluate(t1, y1, 2));
    REQUIRE(mid <= ends + 1e-9);
  }
}

TEST_CASE("smoothed value of a constant is exact") {
  const CounterRng rng(7, Stream::kMonteCarlo, 0);
  const auto f = [](const Vector&) { return 3.25; };
  const SmoothedValue sv = smoothed_value(f, vec2(0.4, -0.2), {0.5, 200}, rng);
  CHECK(sv.mean == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(sv.std_error == doctest::Approx(0.0));
}

TEST_CASE("smoothed value of ||.||^2 at the origin is delta^2 exactly") {
  const CounterRng rng(8, Stream::kMonteCarlo, 0);
  const auto f = [](const Vector& v) { return v.squaredNorm(); };
  for (double delta : {1e-3, 0.1, 1.0}) {
    const SmoothedValue sv =
        smoothed_value(f, Vector::Zero(3), {delta, 500}, rng);
    CHECK(sv.mean == doctest::Approx(delta * delta).epsilon(1e-12));
  }
}

TEST_CASE("smoothing bias bound for a 1-Lipschitz function") {
  // |Phi_delta(w) - Phi(w)| <= M delta with M = 1 for the Euclidean norm.
  const auto f = [](const Vector& v) { return v.norm(); };
  const CounterRng points(9, Stream::kTest, 1);
  const double delta = 0.2;
  for (int i = 0; i < 100; ++i) {
    const Vector w = vec2(3.0 * points.gaussian(i, 0), 3.0 * points.gaussian(i, 1));
    const CounterRng rng(10 + i, Stream::kMonteCarlo, 0);
    const SmoothedValue sv = smoothed_value(f, w, {delta, 4000}, rng);
    REQUIRE(std::abs(sv.mean - w.norm()) <= delta + 3.0 * sv.std_error);
  }
}

TEST_CASE("single-point sphere estimator is unbiased for the smoothed gradient") {
  // For a quadratic f, grad Phi_delta(w) = grad f(w) = 2 A w + b.
  const int p = 2;
  Matrix A(2, 2);
  A << 1.2, 0.3, 0.3, 0.8;
  const Vector b = vec2(-0.4, 0.9);
  const auto f = [&](const Vector& t) { return t.dot(A * t) + b.dot(t) + 0.7; };
  const double delta = 0.15;
  const CounterRng rng(11, Stream::kMonteCarlo, 0);
  const Vector w = vec2(0.5, -1.1);
  const Vector expected = 2.0 * A * w + b;
  Vector sum = Vector::Zero(p);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Vector v = rng.sphere(i, p);
    sum += (static_cast<double>(p) / delta) * f(w + delta * v) * v;
  }
  const Vector est = sum / n;
  CHECK((est - expected).norm() <= 0.05 * expected.norm());
}

TEST_CASE("empirical Lipschitz estimate for the norm is close to 1") {
  const CounterRng rng(12, Stream::kTest, 2);
  const auto f = [](const Vector& v) { return v.norm(); };
  const double est = estimate_lipschitz(f, 2, 2.0, 10000, rng);
  CHECK(est <= 1.0 + 1e-9);
  CHECK(est > 0.9);
}
