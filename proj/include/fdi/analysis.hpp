#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdi/common.hpp"
#include "fdi/objective.hpp"
#include "fdi/zofo.hpp"

namespace fdi {

/// Lipschitz / Lyapunov constants entering the optimality-gap machinery.
/// In the noisy setting alpha1..alpha3 play the role of c1..c3 and sigma
/// bounds the objective's standard deviation.
struct TheoryConstants {
  double M = 0.0;    // Lipschitz of Phi in theta
  double M_y = 0.0;  // Lipschitz of Phi in y
  double M_x = 0.0;  // Lipschitz of the steady-state map in theta
  double M_g = 0.0;  // Lipschitz of g in x
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double alpha3 = 0.0;
  double sigma = 0.0;  // objective std bound (noisy setting only)

  void validate(bool noisy) const;  // positivity; sigma > 0 when noisy
};

/// One-step Lyapunov contraction rate 2*alpha2/alpha1 * (1 - alpha3/alpha2).
/// feasible == (mu < 1).
struct ConvergenceRate {
  double mu = 0.0;
  bool feasible = false;
};
ConvergenceRate convergence_rate_mu(const TheoryConstants& c);

/// The 2x2 coupled-recursion matrix and its spectral bound.
struct CouplingMatrix {
  double p11 = 0.0, p12 = 0.0, p21 = 0.0, p22 = 0.0;
  double d1 = 0.0, d2 = 0.0;
  double rho = 0.0;  // max eigenvalue of [[p11, s],[s, p22]], s = sqrt(p12*p21)
  bool feasible = false;  // rho < 1
};
CouplingMatrix coupling_matrix(const TheoryConstants& c, double eta, double delta, int p,
                               bool noisy);

/// Feasible step-size scaling range (0, kappa*) for the noiseless schedule.
struct KappaStar {
  double kappa_star = 0.0;
  double xi1 = 0.0, xi2 = 0.0, xi3 = 0.0;
};
KappaStar kappa_star(const TheoryConstants& c, std::uint64_t T);

enum class ScheduleVariant { kNoiseless, kNoisy };

/// delta = eps/M and eta = kappa*eps/(p*T) (noiseless)
/// or eta = kappa*sigma*eps/(p^2*sqrt(T)) (noisy). Validates kappa against
/// the variant's feasible range and eta in (0,1).
struct StepSchedule {
  double delta = 0.0;
  double eta = 0.0;
};
StepSchedule step_size_schedule(double epsilon, const TheoryConstants& c, int p,
                                std::uint64_t T, double kappa, ScheduleVariant variant);

/// Exact composite objective value Phi(theta, h(theta); k) for a scenario
/// with an exact steady-state map.
double composite_value(const std::function<Vector(const Vector&)>& h,
                       const AdversaryObjective& objective, const Vector& theta,
                       std::uint64_t k);

/// Minimizer of the composite over the energy ball, found by multi-start
/// projected (sub)gradient descent with a derivative-free polish; for scalar
/// affine maps the exact KKT candidates are also evaluated. `warm_start`
/// short-circuits the multi-start for incremental (per-iteration) oracles.
struct OracleResult {
  Vector theta_star;
  double phi_star = 0.0;
};
OracleResult oracle_optimum(const std::function<Vector(const Vector&)>& h,
                            const AdversaryObjective& objective, std::uint64_t k,
                            double energy_budget,
                            const std::optional<Vector>& warm_start = std::nullopt);

/// Independent check: dense grid search over the ball at the given axis
/// resolution (p = 2 only). Test oracle for oracle_optimum.
OracleResult grid_oracle(const std::function<Vector(const Vector&)>& h,
                         const AdversaryObjective& objective, std::uint64_t k,
                         double energy_budget, double resolution);

/// How Phi(theta_k*) is obtained in gap reports.
enum class OracleMode {
  kExact,          // analytic/fixed-point steady-state map
  kEmpiricalBest,  // best constant injection found by simulating grid candidates
};

/// Per-iteration optimality-gap series, ensemble-averaged.
struct GapReport {
  OracleMode mode = OracleMode::kExact;
  std::vector<double> gap_mean;       // per iteration
  std::vector<double> running_time_average;
  double time_averaged_gap = 0.0;     // mean over all iterations
  double tail_time_averaged_gap = 0.0;  // mean over the final 10%
  std::size_t trial_count = 0;
  // Pooled boxplot summary of the per-iteration per-trial gaps.
  double median = 0.0, q1 = 0.0, q3 = 0.0, whisker_lo = 0.0, whisker_hi = 0.0;
  std::uint64_t outlier_count = 0;
};

/// Gap of an ensemble of records against the exact oracle: per iteration k,
/// gap_k = mean_i Phi(theta_k^{(i)}, h(theta_k^{(i)})) - Phi(theta_k^*).
/// All records must share scenario/config fingerprints.
GapReport optimality_gap(const std::vector<TrajectoryRecord>& records,
                         const std::function<Vector(const Vector&)>& h,
                         const AdversaryObjective& objective, double energy_budget);

/// Same metric against an empirical best: Phi measured in the records versus
/// the best Phi reachable by any constant grid injection (used when no exact
/// steady-state map exists).
GapReport optimality_gap_empirical(const std::vector<TrajectoryRecord>& records,
                                   const std::vector<double>& phi_best_per_k);

/// Per-iteration steady-state evaluation error
///   e_Phi(k) = Phi(theta_k, y^a_{k+1}) - Phi(theta_k, h(theta_k))
/// plus, when Lyapunov constants are supplied, the bound
/// sqrt(mu My^2 Mg^2 / (2 alpha2) * V) with V = alpha2 ||x - x_ss(theta)||^2.
struct SteadyStateErrorSeries {
  std::vector<double> e_phi;
  std::vector<double> bound;  // empty when constants absent
};
SteadyStateErrorSeries steady_state_error(
    const TrajectoryRecord& record, const std::function<Vector(const Vector&)>& h,
    const std::function<Vector(const Vector&)>& x_ss, const AdversaryObjective& objective,
    const std::optional<TheoryConstants>& constants = std::nullopt);

/// Boxplot statistics with linear-interpolation quantiles.
struct BoxStats {
  double median = 0.0, q1 = 0.0, q3 = 0.0;
  double whisker_lo = 0.0, whisker_hi = 0.0;  // 1.5 IQR fences clipped to data
  std::uint64_t outlier_count = 0;
  double mean = 0.0;
  std::size_t count = 0;
};
BoxStats box_stats(std::vector<double> values);

/// Pooled per-quantity boxplot statistics for an ensemble.
struct EnsembleStatistics {
  BoxStats output;       // pooled y over all iterations and trials
  BoxStats final_output; // y at the last iteration across trials
  BoxStats phi;          // pooled measured Phi
};
EnsembleStatistics ensemble_statistics(const std::vector<TrajectoryRecord>& records);

}  // namespace fdi
