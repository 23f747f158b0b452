#include <doctest.h>

#include <cmath>

#include "fdi/dynamics.hpp"

using namespace fdi;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("spectral radius") {
  CHECK(spectral_radius(Matrix::Identity(2, 2)) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix m(2, 2);
  m << 0, 1, 0, 0.5;  // characteristic polynomial lambda (lambda - 0.5)
  CHECK(std::abs(spectral_radius(m) - 0.5) < 1e-9);
  m << 0, 1, 0.5, 0.5;  // roots of lambda^2 - 0.5 lambda - 0.5: {1, -0.5}
  CHECK(std::abs(spectral_radius(m) - 1.0) < 1e-9);
  CHECK_THROWS_AS(spectral_radius(Matrix::Zero(2, 3)), ConfigError);
}

TEST_CASE("registry scenarios and closed loops") {
  const Scenario& paper = find_scenario("paper-linear");
  const Scenario& stable = find_scenario("stable-linear");
  Matrix a_cl_paper(2, 2), a_cl_stable(2, 2);
  a_cl_paper << 0, 1, 0.5, 0.5;
  a_cl_stable << 0, 1, 0, 0.5;
  CHECK(paper.linear->closed_loop().isApprox(a_cl_paper, 1e-12));
  CHECK(stable.linear->closed_loop().isApprox(a_cl_stable, 1e-12));
  CHECK(!paper.has_exact_oracle);
  CHECK(stable.has_exact_oracle);
  CHECK(paper.stability_note.find("marginal") != std::string::npos);
  CHECK_THROWS_AS(find_scenario("nope"), ConfigError);
}

TEST_CASE("step_attacked matches the matrix oracle") {
  const Scenario& paper = find_scenario("paper-linear");
  SUBCASE("paper closed loop, zero attack") {
    const Vector next = step_attacked(paper.plant, vec2(1, -3), vec2(0, 0), 0.0);
    CHECK(next.isApprox(vec2(-3, -1), 1e-12));  // A_cl [1,-3] by hand
  }
  SUBCASE("zero-attack step equals nominal step for random states") {
    const CounterRng rng(3, Stream::kTest, 0);
    for (int i = 0; i < 50; ++i) {
      const Vector x = vec2(rng.gaussian(i, 0), rng.gaussian(i, 1));
      const Vector attacked = step_attacked(paper.plant, x, vec2(0, 0), 0.0);
      const Vector nominal =
          paper.plant.transition(x, paper.plant.controller(x), 0.0);
      CHECK(attacked == nominal);
    }
  }
  SUBCASE("Gamma theta passthrough at the origin") {
    const Scenario& stable = find_scenario("stable-linear");
    const Vector next = step_attacked(stable.plant, vec2(0, 0), vec2(1, 0), 0.0);
    CHECK(next.isApprox(vec2(1, 0), 1e-12));
  }
  SUBCASE("dimension errors") {
    Vector bad(3);
    bad << 1, 2, 3;
    CHECK_THROWS_AS(step_attacked(paper.plant, bad, vec2(0, 0), 0.0), ConfigError);
    CHECK_THROWS_AS(step_attacked(paper.plant, vec2(0, 0), bad, 0.0), ConfigError);
  }
}

TEST_CASE("observe is C x + d") {
  const Scenario& paper = find_scenario("paper-linear");
  CHECK(observe(paper.plant, vec2(1, -3), 0.0)[0] == doctest::Approx(-2.0));
  CHECK(observe(paper.plant, vec2(0, 0), 0.0)[0] == doctest::Approx(0.0));
  CHECK(observe(paper.plant, vec2(1, -3), 0.5)[0] == doctest::Approx(-1.5));
}

TEST_CASE("steady-state output solves (I - A_cl) x = Gamma theta") {
  const Scenario& stable = find_scenario("stable-linear");
  const Matrix gamma = Matrix::Identity(2, 2);
  // (I - A_cl)^{-1} = [[1,2],[0,2]] by hand, so x_ss([1,0]) = [1,0], y = 1.
  CHECK(steady_state_output(*stable.linear, gamma, vec2(1, 0))[0] ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(steady_state_output(*stable.linear, gamma, vec2(0, 0))[0] ==
        doctest::Approx(0.0));
  // x_ss([0,1]) = [2,2], y = 4.
  CHECK(steady_state_output(*stable.linear, gamma, vec2(0, 1))[0] ==
        doctest::Approx(4.0).epsilon(1e-12));

  const Scenario& paper = find_scenario("paper-linear");
  CHECK_THROWS_AS(steady_state_output(*paper.linear, gamma, vec2(1, 0)),
                  SteadyStateError);
}

TEST_CASE("iterated plant converges to the steady-state map") {
  const Scenario& stable = find_scenario("stable-linear");
  const Matrix gamma = stable.plant.attack_selection;
  const Vector theta = vec2(0.3, -0.7);
  Vector x = vec2(5, -11);
  for (int k = 0; k < 500; ++k) x = step_attacked(stable.plant, x, theta, 0.0);
  Matrix ident = Matrix::Identity(2, 2);
  const Vector x_ss =
      (ident - stable.linear->closed_loop()).partialPivLu().solve(gamma * theta);
  CHECK((x - x_ss).norm() < 1e-6);
  CHECK(std::abs(observe(stable.plant, x, 0.0)[0] -
                 steady_state_output(*stable.linear, gamma, theta)[0]) < 1e-6);
}

TEST_CASE("tanh contraction fixed point matches its steady map") {
  const Scenario& s = find_scenario("tanh-contraction");
  const Vector theta = vec2(0.4, -0.2);
  Vector x = vec2(3, 3);
  for (int k = 0; k < 500; ++k) x = step_attacked(s.plant, x, theta, 0.0);
  CHECK(std::abs(observe(s.plant, x, 0.0)[0] - s.steady_output(theta)[0]) < 1e-6);
}

TEST_CASE("linear superposition of zero-noise trajectories") {
  const Scenario& stable = find_scenario("stable-linear");
  const CounterRng rng(17, Stream::kTest, 0);
  Vector xa = vec2(rng.gaussian(0, 0), rng.gaussian(0, 1));
  Vector xb = vec2(rng.gaussian(1, 0), rng.gaussian(1, 1));
  Vector xc = xa + xb;
  for (int k = 0; k < 50; ++k) {
    const Vector ta = vec2(rng.gaussian(100 + k, 0), rng.gaussian(100 + k, 1));
    const Vector tb = vec2(rng.gaussian(200 + k, 0), rng.gaussian(200 + k, 1));
    xa = step_attacked(stable.plant, xa, ta, 0.0);
    xb = step_attacked(stable.plant, xb, tb, 0.0);
    xc = step_attacked(stable.plant, xc, ta + tb, 0.0);
    REQUIRE((xc - (xa + xb)).norm() < 1e-9 * (1.0 + xc.norm()));
  }
}

TEST_CASE("plant model validation rejects malformed selection matrices") {
  Scenario s = find_scenario("stable-linear");
  PlantModel m = s.plant;
  m.attack_selection(0, 0) = 0.5;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = s.plant;
  m.attack_selection.setZero();
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = s.plant;
  m.attack_selection = Matrix::Ones(2, 2);  // row selects two channels
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = s.plant;
  m.attack_selection = Matrix(2, 1);
  m.attack_selection << 1, 0;
  m.attack_dim = 1;
  CHECK_NOTHROW(m.validate());
}
