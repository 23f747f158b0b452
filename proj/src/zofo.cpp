#include "fdi/zofo.hpp"

#include <cmath>
#include <sstream>

namespace fdi {

void AttackConfig::validate() const {
  if (!(delta > 0.0)) throw ConfigError("AttackConfig: delta must be > 0");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("AttackConfig: eta must be in (0,1)");
  if (!(energy_budget > 0.0)) throw ConfigError("AttackConfig: energy budget R must be > 0");
  if (horizon < 1) throw ConfigError("AttackConfig: horizon T must be >= 1");
  if (attack_dim < 1) throw ConfigError("AttackConfig: attack_dim must be >= 1");
  if (probe == ProbeKind::kDeterministicTrig && attack_dim != 2) {
    throw ConfigError("AttackConfig: deterministic-trig probe requires attack_dim == 2");
  }
}

std::string AttackConfig::fingerprint() const {
  std::ostringstream oss;
  oss.precision(17);
  oss << "delta=" << delta << ",eta=" << eta << ",R=" << energy_budget
      << ",T=" << horizon << ",probe="
      << (probe == ProbeKind::kUniformSphere ? "uniform-sphere" : "trig")
      << ",p=" << attack_dim;
  return oss.str();
}

Vector probe_signal(const AttackConfig& config, std::uint64_t k, const CounterRng& rng) {
  if (config.probe == ProbeKind::kDeterministicTrig) {
    if (config.attack_dim != 2) {
      throw ConfigError("probe_signal: trig probe requires attack_dim == 2");
    }
    const double t = static_cast<double>(k);
    Vector v(2);
    v << std::cos(t), std::sin(t);
    return v / std::sqrt(2.0);
  }
  return rng.sphere(k, config.attack_dim);
}

Vector residual_gradient_estimate(double phi_curr, double phi_prev, const Vector& v,
                                  double delta, int p) {
  if (!(delta > 0.0)) throw ConfigError("residual_gradient_estimate: delta must be > 0");
  return (static_cast<double>(p) / delta) * (phi_curr - phi_prev) * v;
}

Vector project_ball(const Vector& w, double energy_budget) {
  if (!(energy_budget > 0.0)) throw ConfigError("project_ball: R must be > 0");
  if (!w.allFinite()) throw NumericError("project_ball: non-finite input");
  const double sq = w.squaredNorm();
  if (sq <= energy_budget) return w;
  return w * std::sqrt(energy_budget / sq);
}

std::pair<OptimizerState, Vector> attack_step(const OptimizerState& state, double phi_curr,
                                              const AttackConfig& config,
                                              const CounterRng& rng) {
  const Vector grad =
      residual_gradient_estimate(phi_curr, state.phi_prev, state.v, config.delta,
                                 config.attack_dim);
  OptimizerState next;
  next.w = project_ball(state.w - config.eta * grad, config.energy_budget);
  next.k = state.k + 1;
  next.v = probe_signal(config, next.k, rng);
  next.phi_prev = phi_curr;
  Vector theta_next = next.w + config.delta * next.v;
  return {std::move(next), std::move(theta_next)};
}

namespace {

std::string objective_fingerprint(const AdversaryObjective& objective) {
  std::ostringstream oss;
  oss.precision(17);
  oss << "Q=";
  const Matrix& q = objective.weight();
  for (int i = 0; i < q.rows(); ++i)
    for (int j = 0; j < q.cols(); ++j) oss << q(i, j) << ",";
  oss << "ref="
      << (objective.reference().kind == ReferenceKind::kStatic ? "static" : "ramp") << ":";
  for (int i = 0; i < objective.reference().value.size(); ++i) {
    oss << objective.reference().value[i] << ",";
  }
  return oss.str();
}

bool exceeds_divergence_limit(const Vector& x) {
  return !x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceLimit;
}

}  // namespace

RunSummary run_attack_stream(const Scenario& scenario, const AdversaryObjective& objective,
                             const AttackConfig& config, const NoiseSource& noise,
                             std::uint64_t trial, std::uint64_t master_seed,
                             const RowSink& sink) {
  config.validate();
  scenario.plant.validate();
  if (config.attack_dim != scenario.plant.attack_dim) {
    throw ConfigError("run_attack: config attack_dim does not match scenario");
  }
  if (objective.attack_dim() != config.attack_dim) {
    throw ConfigError("run_attack: objective weight dimension does not match attack_dim");
  }
  if (objective.output_dim() != scenario.plant.output_dim) {
    throw ConfigError("run_attack: reference dimension does not match plant output");
  }

  const CounterRng init_rng(master_seed, Stream::kInit, trial);
  const CounterRng probe_rng(master_seed, Stream::kProbe, trial);

  RunSummary summary;

  // w_1: per-coordinate standard uniform, projected onto the ball.
  Vector w1(config.attack_dim);
  for (int i = 0; i < config.attack_dim; ++i) w1[i] = init_rng.uniform01(0, i);
  OptimizerState state;
  state.w = project_ball(w1, config.energy_budget);
  state.k = 0;
  state.v = probe_signal(config, 0, probe_rng);

  // Bootstrap injection theta_0 = w_1 + delta v_0 seeds the stored evaluation.
  Vector theta = state.w + config.delta * state.v;
  Vector x = scenario.plant.initial_state;
  {
    const double d0 = noise.sample(trial, 0);
    x = step_attacked(scenario.plant, x, theta, d0);
    if (exceeds_divergence_limit(x)) {
      summary.diverged = true;
      summary.last_finite_k = 0;
      return summary;
    }
    const Vector y0 = observe(scenario.plant, x, d0);
    state.phi_prev = objective.evaluate(theta, y0, 0);
    summary.eval_count = 1;
  }
  state.k = 1;
  state.v = probe_signal(config, 1, probe_rng);
  theta = state.w + config.delta * state.v;

  TrajectoryRow row;
  for (std::uint64_t k = 1; k <= config.horizon; ++k) {
    const double d = noise.sample(trial, k);
    Vector x_next;
    try {
      x_next = step_attacked(scenario.plant, x, theta, d);
    } catch (const NumericError&) {
      summary.diverged = true;
      summary.last_finite_k = k - 1;
      return summary;
    }
    if (exceeds_divergence_limit(x_next)) {
      summary.diverged = true;
      summary.last_finite_k = k - 1;
      return summary;
    }
    x = std::move(x_next);
    const Vector y = observe(scenario.plant, x, d);
    const double phi = objective.evaluate(theta, y, k);
    ++summary.eval_count;

    row.k = k;
    row.w = state.w;
    row.v = state.v;
    row.theta = theta;
    row.x = x;
    row.y = y;
    row.phi = phi;
    row.grad = residual_gradient_estimate(phi, state.phi_prev, state.v, config.delta,
                                          config.attack_dim);
    sink(row);
    ++summary.rows_emitted;

    auto [next_state, next_theta] = attack_step(state, phi, config, probe_rng);
    state = std::move(next_state);
    theta = std::move(next_theta);
  }
  summary.last_finite_k = config.horizon;
  return summary;
}

TrajectoryRecord run_attack(const Scenario& scenario, const AdversaryObjective& objective,
                            const AttackConfig& config, const NoiseSource& noise,
                            std::uint64_t trial, std::uint64_t master_seed) {
  TrajectoryRecord record;
  record.rows.reserve(config.horizon);
  const RunSummary summary = run_attack_stream(
      scenario, objective, config, noise, trial, master_seed,
      [&record](const TrajectoryRow& row) { record.rows.push_back(row); });
  record.scenario_fingerprint = scenario.fingerprint;
  record.config_fingerprint = config.fingerprint() + "|" + objective_fingerprint(objective) +
                              "|noise=" + noise.spec().describe() +
                              "|seed=" + std::to_string(master_seed);
  record.master_seed = master_seed;
  record.trial = trial;
  record.eval_count = summary.eval_count;
  record.diverged = summary.diverged;
  record.last_finite_k = summary.last_finite_k;
  return record;
}

}  // namespace fdi
