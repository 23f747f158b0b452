#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fdi/common.hpp"
#include "fdi/dynamics.hpp"
#include "fdi/objective.hpp"
#include "fdi/rng.hpp"

namespace fdi {

enum class ProbeKind { kUniformSphere, kDeterministicTrig };

/// Hyperparameters of the zeroth-order feedback-optimization attack.
struct AttackConfig {
  double delta = 0.0;          // smoothing radius
  double eta = 0.0;            // step size, in (0,1)
  double energy_budget = 0.0;  // R, bound on theta' theta
  std::uint64_t horizon = 0;   // T
  ProbeKind probe = ProbeKind::kUniformSphere;
  int attack_dim = 0;          // p

  void validate() const;
  std::string fingerprint() const;
};

/// Probing signal v_k: unit vector, either i.i.d. uniform on the sphere or
/// the deterministic [cos k, sin k]/sqrt(2) (p = 2 only).
Vector probe_signal(const AttackConfig& config, std::uint64_t k, const CounterRng& rng);

/// Residual-feedback gradient estimate (p/delta) * (phi_curr - phi_prev) * v.
Vector residual_gradient_estimate(double phi_curr, double phi_prev, const Vector& v,
                                  double delta, int p);

/// Euclidean projection onto { w : w'w <= R }.
Vector project_ball(const Vector& w, double energy_budget);

/// Optimizer state between iterations. `v` is the probe used to build the
/// attack signal whose evaluation is about to arrive; `phi_prev` is the stored
/// evaluation that the next residual reuses.
struct OptimizerState {
  Vector w;
  Vector v;
  double phi_prev = 0.0;
  std::uint64_t k = 0;
};

/// One update: gradient estimate from (phi_curr, state.phi_prev, state.v),
/// projected step on w, fresh probe, new attack signal w+ + delta v+.
/// Returns the advanced state and theta_{k+1}.
std::pair<OptimizerState, Vector> attack_step(const OptimizerState& state, double phi_curr,
                                              const AttackConfig& config,
                                              const CounterRng& rng);

struct TrajectoryRow {
  std::uint64_t k = 0;
  Vector w;      // w_k
  Vector v;      // v_k
  Vector theta;  // theta_k = w_k + delta v_k
  Vector x;      // x^a_{k+1}, state after injecting theta_k
  Vector y;      // y^a_{k+1}
  double phi = 0.0;   // Phi(theta_k, y^a_{k+1})
  Vector grad;        // residual gradient estimate at k
  double gap = std::numeric_limits<double>::quiet_NaN();  // filled by analysis
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
  std::string scenario_fingerprint;
  std::string config_fingerprint;
  std::uint64_t master_seed = 0;
  std::uint64_t trial = 0;
  std::uint64_t eval_count = 0;  // objective evaluations incl. the seeding one
  bool diverged = false;
  std::uint64_t last_finite_k = 0;
};

/// Streaming sink; the row reference is only valid during the call.
using RowSink = std::function<void(const TrajectoryRow&)>;

struct RunSummary {
  std::uint64_t eval_count = 0;
  bool diverged = false;
  std::uint64_t last_finite_k = 0;
  std::uint64_t rows_emitted = 0;
};

/// Closed-loop attack run. Per iteration k = 1..T: inject theta_k, step the
/// plant once, observe y^a_{k+1} (one shared noise draw per step), evaluate
/// Phi(theta_k, y^a_{k+1}; k), update via the three-step recursion.
/// w_1 is per-coordinate U(0,1) projected onto the ball; phi_prev is seeded by
/// one bootstrap injection theta_0 = w_1 + delta v_0 evaluated against the
/// reference at k = 0. Aborts (diverged flag) when any state magnitude
/// exceeds 1e12.
RunSummary run_attack_stream(const Scenario& scenario, const AdversaryObjective& objective,
                             const AttackConfig& config, const NoiseSource& noise,
                             std::uint64_t trial, std::uint64_t master_seed,
                             const RowSink& sink);

/// Same loop, materialized: exactly T rows unless the run diverged earlier.
TrajectoryRecord run_attack(const Scenario& scenario, const AdversaryObjective& objective,
                            const AttackConfig& config, const NoiseSource& noise,
                            std::uint64_t trial, std::uint64_t master_seed);

}  // namespace fdi
