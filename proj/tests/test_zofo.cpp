#include <doctest.h>

#include <cmath>

#include "fdi/analysis.hpp"
#include "fdi/zofo.hpp"

using namespace fdi;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

AttackConfig paper_config() {
  AttackConfig cfg;
  cfg.delta = 1e-3;
  cfg.eta = 7.5e-5;
  cfg.energy_budget = 1.0;
  cfg.horizon = 100;
  cfg.probe = ProbeKind::kDeterministicTrig;
  cfg.attack_dim = 2;
  return cfg;
}

}  // namespace

TEST_CASE("attack config validation") {
  AttackConfig cfg = paper_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.eta = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = paper_config();
  cfg.delta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = paper_config();
  cfg.energy_budget = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = paper_config();
  cfg.attack_dim = 3;  // trig probe is two-dimensional
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("probing signals") {
  const CounterRng rng(1, Stream::kProbe, 0);
  AttackConfig cfg = paper_config();
  SUBCASE("trig probe at k=0 is [1,0]/sqrt(2)") {
    const Vector v = probe_signal(cfg, 0, rng);
    CHECK(v[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(v[1] == doctest::Approx(0.0));
  }
  SUBCASE("unit norm in both modes") {
    for (std::uint64_t k = 0; k < 1000; ++k) {
      CHECK(std::abs(probe_signal(cfg, k, rng).norm() - 1.0) < 1e-12);
    }
    cfg.probe = ProbeKind::kUniformSphere;
    for (std::uint64_t k = 0; k < 1000; ++k) {
      CHECK(std::abs(probe_signal(cfg, k, rng).norm() - 1.0) < 1e-12);
    }
  }
  SUBCASE("uniform-sphere draws have near-zero mean") {
    cfg.probe = ProbeKind::kUniformSphere;
    Vector mean = Vector::Zero(2);
    const int n = 100000;
    for (int k = 0; k < n; ++k) mean += probe_signal(cfg, k, rng);
    mean /= n;
    CHECK(mean.cwiseAbs().maxCoeff() < 0.02);
  }
}

TEST_CASE("residual gradient estimate") {
  CHECK(residual_gradient_estimate(0.5, 0.4, vec2(1, 0), 1e-3, 2)
            .isApprox(vec2(200, 0), 1e-12));
  CHECK(residual_gradient_estimate(0.7, 0.7, vec2(0.6, 0.8), 1e-3, 2).norm() == 0.0);
  CHECK(residual_gradient_estimate(1.0, 3.0, vec2(0, 1), 0.1, 2)
            .isApprox(vec2(0, -40), 1e-12));
  CHECK_THROWS_AS(residual_gradient_estimate(1.0, 0.0, vec2(1, 0), 0.0, 2), ConfigError);
}

TEST_CASE("ball projection") {
  CHECK(project_ball(vec2(3, 4), 25.0) == vec2(3, 4));
  CHECK(project_ball(vec2(6, 8), 25.0).isApprox(vec2(3, 4), 1e-12));
  CHECK(project_ball(Vector::Zero(2), 0.5).norm() == 0.0);
  CHECK_THROWS_AS(project_ball(vec2(1, 1), 0.0), ConfigError);

  SUBCASE("idempotent, non-expansive, feasible over random pairs") {
    const CounterRng rng(2, Stream::kTest, 0);
    const double R = 0.8;
    for (int i = 0; i < 10000; ++i) {
      const Vector a = 3.0 * vec2(rng.gaussian(i, 0), rng.gaussian(i, 1));
      const Vector b = 3.0 * vec2(rng.gaussian(i, 2), rng.gaussian(i, 3));
      const Vector pa = project_ball(a, R);
      const Vector pb = project_ball(b, R);
      REQUIRE(pa.squaredNorm() <= R * (1.0 + 1e-12));
      REQUIRE((project_ball(pa, R) - pa).norm() <= 1e-15);
      REQUIRE((pa - pb).norm() <= (a - b).norm() + 1e-12);
    }
  }
}

TEST_CASE("attack step") {
  const CounterRng rng(3, Stream::kProbe, 0);
  AttackConfig cfg = paper_config();
  OptimizerState st;
  st.w = vec2(0, 0);
  st.v = vec2(1, 0);
  st.phi_prev = 0.4;
  st.k = 5;

  SUBCASE("hand-computed single step") {
    // residual 0.1 with delta=1e-3, p=2 gives grad [200, 0]; eta 7.5e-5 moves
    // w to [-0.015, 0], interior so the projection is inert.
    auto [next, theta] = attack_step(st, 0.5, cfg, rng);
    CHECK(next.w.isApprox(vec2(-0.015, 0), 1e-12));
    CHECK(next.k == 6);
    CHECK(next.phi_prev == doctest::Approx(0.5));
    CHECK(theta.isApprox(next.w + cfg.delta * next.v, 1e-15));
  }
  SUBCASE("zero step size leaves w unchanged") {
    cfg.eta = 0.0;  // diagnostic value, below the validated range
    auto [next, theta] = attack_step(st, 0.9, cfg, rng);
    CHECK(next.w == st.w);
    CHECK(theta.isApprox(st.w + cfg.delta * next.v, 1e-15));
  }
  SUBCASE("equal evaluations give a zero update") {
    auto [next, theta] = attack_step(st, st.phi_prev, cfg, rng);
    CHECK(next.w == st.w);
  }
}

TEST_CASE("run_attack bookkeeping and feasibility") {
  const Scenario& scenario = find_scenario("stable-linear");
  const AdversaryObjective objective(3.0 * Matrix::Identity(2, 2),
                                     Reference::constant(-1.5));
  AttackConfig cfg = paper_config();
  cfg.horizon = 2000;
  cfg.energy_budget = 0.01;
  const NoiseSource noise(NoiseSpec::none(), 77);

  const TrajectoryRecord rec = run_attack(scenario, objective, cfg, noise, 0, 77);
  CHECK(rec.rows.size() == cfg.horizon);
  CHECK(rec.eval_count == cfg.horizon + 1);  // one seeding evaluation
  CHECK(!rec.diverged);
  CHECK(rec.last_finite_k == cfg.horizon);

  const double theta_limit = std::sqrt(cfg.energy_budget) + cfg.delta;
  for (std::size_t i = 0; i < rec.rows.size(); ++i) {
    const auto& row = rec.rows[i];
    REQUIRE(row.k == i + 1);
    REQUIRE(row.w.squaredNorm() <= cfg.energy_budget * (1.0 + 1e-12));
    REQUIRE(row.theta.norm() <= theta_limit + 1e-12);
    REQUIRE(std::abs(row.v.norm() - 1.0) < 1e-12);
    REQUIRE(row.theta.isApprox(row.w + cfg.delta * row.v, 1e-12));
  }
}

TEST_CASE("run_attack is deterministic given (scenario, config, seed, trial)") {
  const Scenario& scenario = find_scenario("stable-linear");
  const AdversaryObjective objective(3.0 * Matrix::Identity(2, 2),
                                     Reference::ramp(1e-4));
  AttackConfig cfg = paper_config();
  cfg.horizon = 500;
  cfg.probe = ProbeKind::kUniformSphere;
  const NoiseSource noise(NoiseSpec::gaussian(0.0, 0.02), 123);

  const TrajectoryRecord a = run_attack(scenario, objective, cfg, noise, 3, 123);
  const TrajectoryRecord b = run_attack(scenario, objective, cfg, noise, 3, 123);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    REQUIRE(a.rows[i].w == b.rows[i].w);
    REQUIRE(a.rows[i].theta == b.rows[i].theta);
    REQUIRE(a.rows[i].phi == b.rows[i].phi);
    REQUIRE(a.rows[i].y == b.rows[i].y);
  }
  // a different trial produces a different path
  const TrajectoryRecord c = run_attack(scenario, objective, cfg, noise, 4, 123);
  CHECK(a.rows[10].theta != c.rows[10].theta);
}

TEST_CASE("attack-free loop equals the nominal trajectory bit for bit") {
  const Scenario& scenario = find_scenario("paper-linear");
  Vector x_attacked = scenario.plant.initial_state;
  Vector x_nominal = scenario.plant.initial_state;
  const Vector zero = Vector::Zero(2);
  for (int k = 0; k < 200; ++k) {
    x_attacked = step_attacked(scenario.plant, x_attacked, zero, 0.0);
    x_nominal = scenario.plant.transition(x_nominal,
                                          scenario.plant.controller(x_nominal), 0.0);
    REQUIRE(x_attacked == x_nominal);
  }
}

TEST_CASE("divergence aborts with the last finite iteration recorded") {
  // Unstable custom plant: spectral radius 2, any injection blows up fast.
  Matrix A(2, 2), B(2, 2), C(1, 2), K(2, 2);
  A << 2, 0, 0, 2;
  B << 0, 0, 0, 0;
  C << 1, 1;
  K << 0, 0, 0, 0;
  Vector x0(2);
  x0 << 1, 1;
  const Scenario s = make_linear_scenario("blowup", A, B, C, K,
                                          Matrix::Identity(2, 2), x0);
  const AdversaryObjective objective(Matrix::Identity(2, 2), Reference::constant(0.0));
  AttackConfig cfg = paper_config();
  cfg.horizon = 500;
  const NoiseSource noise(NoiseSpec::none(), 1);
  const TrajectoryRecord rec = run_attack(s, objective, cfg, noise, 0, 1);
  CHECK(rec.diverged);
  CHECK(rec.last_finite_k < cfg.horizon);
  CHECK(rec.rows.size() == rec.last_finite_k);
}

TEST_CASE("known-function sanity: the loop optimizes a static quadratic") {
  // Plant loop replaced by direct evaluation of Phi(theta) = ||theta - t0||^2.
  // Step size from the noiseless schedule with mu = 0 constants.
  const Vector t0 = vec2(0.3, -0.2);
  const auto phi = [&](const Vector& t) { return (t - t0).squaredNorm(); };
  TheoryConstants c;
  c.M = 3.0;
  c.M_x = c.M_y = c.M_g = 1.0;
  c.alpha1 = c.alpha2 = c.alpha3 = 1.0;  // mu = 0

  const std::uint64_t T = 100000;
  const double kappa = kappa_star(c, T).kappa_star / 2.0;
  const StepSchedule sched =
      step_size_schedule(0.1, c, 2, T, kappa, ScheduleVariant::kNoiseless);

  AttackConfig cfg;
  cfg.delta = sched.delta;
  cfg.eta = sched.eta;
  cfg.energy_budget = 1.0;
  cfg.horizon = T;
  cfg.probe = ProbeKind::kUniformSphere;
  cfg.attack_dim = 2;

  const CounterRng probe_rng(99, Stream::kProbe, 0);
  const CounterRng init_rng(99, Stream::kInit, 0);
  OptimizerState st;
  st.w = project_ball(vec2(init_rng.uniform01(0, 0), init_rng.uniform01(0, 1)),
                      cfg.energy_budget);
  st.k = 0;
  st.v = probe_signal(cfg, 0, probe_rng);
  st.phi_prev = phi(st.w + cfg.delta * st.v);

  const double initial_gap = phi(st.w) - 0.0;
  double gap_sum = 0.0;
  Vector theta = st.w + cfg.delta * st.v;
  for (std::uint64_t k = 1; k <= T; ++k) {
    const double val = phi(theta);
    gap_sum += phi(st.w);
    auto [next, th] = attack_step(st, val, cfg, probe_rng);
    st = std::move(next);
    theta = std::move(th);
  }
  const double avg_gap = gap_sum / static_cast<double>(T);
  CHECK(avg_gap < 0.1 * initial_gap);
}
