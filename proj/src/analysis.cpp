#include "fdi/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace fdi {

void TheoryConstants::validate(bool noisy) const {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("TheoryConstants: ") + name + " must be > 0");
  };
  pos(M, "M");
  pos(M_y, "M_y");
  pos(M_x, "M_x");
  pos(M_g, "M_g");
  pos(alpha1, "alpha1");
  pos(alpha2, "alpha2");
  pos(alpha3, "alpha3");
  if (noisy) pos(sigma, "sigma");
}

ConvergenceRate convergence_rate_mu(const TheoryConstants& c) {
  c.validate(false);
  const double mu = 2.0 * c.alpha2 / c.alpha1 * (1.0 - c.alpha3 / c.alpha2);
  return {mu, mu < 1.0};
}

CouplingMatrix coupling_matrix(const TheoryConstants& c, double eta, double delta, int p,
                               bool noisy) {
  c.validate(noisy);
  if (!(eta > 0.0) || !(delta > 0.0)) {
    throw ConfigError("coupling_matrix: eta and delta must be > 0");
  }
  if (p < 1) throw ConfigError("coupling_matrix: p must be >= 1");
  const double mu = convergence_rate_mu(c).mu;
  if (mu < 0.0) {
    throw ConfigError("coupling_matrix: alpha3 > alpha2 gives mu < 0; inconsistent constants");
  }
  const double p2 = static_cast<double>(p) * static_cast<double>(p);
  const double d2sq = delta * delta;
  const double mix = c.M * c.M + mu * c.M_x * c.M_x * c.M_y * c.M_y * c.M_g * c.M_g;
  const double ygsq = c.M_y * c.M_y * c.M_g * c.M_g;

  CouplingMatrix out;
  if (!noisy) {
    out.p11 = 6.0 * p2 * eta * eta / d2sq * mix;
    out.p12 = 3.0 * mu * p2 * ygsq * (1.0 + mu) / (2.0 * c.alpha2 * d2sq);
    out.p21 = 4.0 * c.alpha2 * eta * eta * c.M_x * c.M_x;
    out.p22 = mu;
    out.d1 = 24.0 * p2 * mix;
    out.d2 = 16.0 * c.alpha2 * d2sq * c.M_x * c.M_x;
  } else {
    const double s2 = c.sigma * c.sigma;
    out.p11 = 12.0 * p2 * eta * eta / d2sq * mix;
    out.p12 = 3.0 * mu * p2 * ygsq * (1.0 + mu) / (2.0 * c.alpha2 * d2sq);
    out.p21 = 8.0 * c.alpha2 * eta * eta * c.M_x * c.M_x;
    out.p22 = mu;
    out.d1 = 48.0 * p2 * mix +
             (24.0 * p2 * s2 * (1.0 + mu * ygsq) +
              12.0 * p2 * eta * eta * mu * c.M_x * c.M_x * ygsq) /
                 d2sq;
    out.d2 = 32.0 * c.alpha2 * d2sq * c.M_x * c.M_x + 16.0 * c.alpha2 * s2;
  }
  const double cross = out.p12 * out.p21;
  const double half_sum = 0.5 * (out.p11 + out.p22);
  const double half_diff = 0.5 * (out.p11 - out.p22);
  out.rho = half_sum + std::sqrt(half_diff * half_diff + cross);
  out.feasible = out.rho < 1.0;
  return out;
}

KappaStar kappa_star(const TheoryConstants& c, std::uint64_t T) {
  if (T < 1) throw ConfigError("kappa_star: T must be >= 1");
  const double mu = convergence_rate_mu(c).mu;
  if (mu >= 1.0) throw ConfigError("kappa_star: mu >= 1 (Assumption 2 violated)");
  if (mu < 0.0) throw ConfigError("kappa_star: mu < 0; inconsistent Lyapunov constants");
  const double t = static_cast<double>(T);
  KappaStar out;
  out.xi1 = 6.0 * c.M * c.M *
            (c.M * c.M + mu * c.M_x * c.M_x * c.M_y * c.M_y * c.M_g * c.M_g) / (t * t);
  out.xi2 = c.M * c.M_x * c.M_y * c.M_g * std::sqrt(6.0 * mu * (1.0 + mu)) / t;
  out.xi3 = mu;
  const double inf = std::numeric_limits<double>::infinity();
  // First root written in its rational form, stable as xi1 -> 0.
  const double root1 =
      (out.xi1 > 0.0 || out.xi2 > 0.0)
          ? 2.0 / (out.xi2 + std::sqrt(out.xi2 * out.xi2 + 4.0 * out.xi1))
          : inf;
  const double root2 = out.xi2 > 0.0 ? (1.0 - out.xi3) / out.xi2 : inf;
  out.kappa_star = std::min(root1, root2);
  return out;
}

StepSchedule step_size_schedule(double epsilon, const TheoryConstants& c, int p,
                                std::uint64_t T, double kappa, ScheduleVariant variant) {
  if (!(epsilon > 0.0)) throw ConfigError("step_size_schedule: epsilon must be > 0");
  if (p < 1 || T < 1) throw ConfigError("step_size_schedule: p and T must be >= 1");
  if (!(kappa > 0.0)) throw ConfigError("step_size_schedule: kappa must be > 0");
  c.validate(variant == ScheduleVariant::kNoisy);

  StepSchedule out;
  out.delta = epsilon / c.M;
  if (variant == ScheduleVariant::kNoiseless) {
    const double ks = kappa_star(c, T).kappa_star;
    if (!(kappa < ks)) {
      std::ostringstream oss;
      oss << "step_size_schedule: kappa=" << kappa << " violates kappa < kappa*=" << ks;
      throw ConfigError(oss.str());
    }
    out.eta = kappa * epsilon / (static_cast<double>(p) * static_cast<double>(T));
  } else {
    const double bound = static_cast<double>(p) * static_cast<double>(p) *
                         std::sqrt(static_cast<double>(T)) / (c.sigma * epsilon);
    if (!(kappa < bound)) {
      std::ostringstream oss;
      oss << "step_size_schedule: kappa=" << kappa
          << " violates kappa < p^2 sqrt(T)/(sigma eps)=" << bound;
      throw ConfigError(oss.str());
    }
    out.eta = kappa * c.sigma * epsilon /
              (static_cast<double>(p) * static_cast<double>(p) *
               std::sqrt(static_cast<double>(T)));
  }
  if (!(out.eta > 0.0 && out.eta < 1.0)) {
    std::ostringstream oss;
    oss << "step_size_schedule: eta=" << out.eta << " outside (0,1)";
    throw ConfigError(oss.str());
  }
  return out;
}

double composite_value(const std::function<Vector(const Vector&)>& h,
                       const AdversaryObjective& objective, const Vector& theta,
                       std::uint64_t k) {
  return objective.evaluate(theta, h(theta), k);
}

namespace {

struct AffineMap {
  bool affine = false;
  Matrix H;
  Vector h0;
};

AffineMap detect_affine(const std::function<Vector(const Vector&)>& h, int p) {
  AffineMap out;
  out.h0 = h(Vector::Zero(p));
  const int q = static_cast<int>(out.h0.size());
  out.H = Matrix(q, p);
  for (int j = 0; j < p; ++j) {
    Vector e = Vector::Zero(p);
    e[j] = 1.0;
    out.H.col(j) = h(e) - out.h0;
  }
  Vector probe(p);
  for (int j = 0; j < p; ++j) probe[j] = 0.31 + 0.17 * j;
  const Vector predicted = out.H * probe + out.h0;
  const Vector actual = h(probe);
  const double scale = 1.0 + predicted.norm() + actual.norm();
  out.affine = (predicted - actual).norm() <= 1e-9 * scale;
  return out;
}

// Subgradient of ||H theta + h0 - ybar|| + theta' Q theta.
Vector affine_subgradient(const Matrix& H, const Vector& h0, const Vector& ybar,
                          const Matrix& Q, const Vector& theta) {
  const Vector r = H * theta + h0 - ybar;
  const double n = r.norm();
  Vector g = 2.0 * (Q * theta);
  if (n > 1e-300) g += H.transpose() * r / n;
  return g;
}

Vector numeric_subgradient(const std::function<double(const Vector&)>& f,
                           const Vector& theta) {
  const int p = static_cast<int>(theta.size());
  const double eps = 1e-6 * (1.0 + theta.norm());
  Vector g(p);
  Vector t = theta;
  for (int i = 0; i < p; ++i) {
    const double orig = t[i];
    t[i] = orig + eps;
    const double fp = f(t);
    t[i] = orig - eps;
    const double fm = f(t);
    t[i] = orig;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

std::vector<Vector> polish_directions(int p) {
  std::vector<Vector> dirs;
  if (p == 2) {
    for (int i = 0; i < 16; ++i) {
      const double a = 2.0 * M_PI * i / 16.0;
      Vector d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
    return dirs;
  }
  for (int i = 0; i < p; ++i) {
    Vector d = Vector::Zero(p);
    d[i] = 1.0;
    dirs.push_back(d);
    dirs.push_back(-d);
  }
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      for (const double si : {1.0, -1.0}) {
        for (const double sj : {1.0, -1.0}) {
          Vector d = Vector::Zero(p);
          d[i] = si / std::sqrt(2.0);
          d[j] = sj / std::sqrt(2.0);
          dirs.push_back(d);
        }
      }
    }
  }
  return dirs;
}

// Derivative-free descent polish; shrinks the step until r_end.
void compass_polish(const std::function<double(const Vector&)>& f, Vector& theta,
                    double& value, double energy_budget, double r_start, double r_end) {
  const auto dirs = polish_directions(static_cast<int>(theta.size()));
  double step = r_start;
  while (step > r_end) {
    bool improved = false;
    for (const Vector& d : dirs) {
      const Vector cand = project_ball(theta + step * d, energy_budget);
      const double v = f(cand);
      if (v < value - 1e-18) {
        theta = cand;
        value = v;
        improved = true;
      }
    }
    if (!improved) step *= 0.5;
  }
}

Vector projected_subgradient_run(const std::function<double(const Vector&)>& f,
                                 const std::function<Vector(const Vector&)>& subgrad,
                                 Vector theta, double energy_budget, int iters,
                                 double step0) {
  theta = project_ball(theta, energy_budget);
  Vector best = theta;
  double best_val = f(theta);
  for (int t = 1; t <= iters; ++t) {
    Vector g = subgrad(theta);
    const double gn = g.norm();
    if (gn < 1e-300) break;
    const double alpha = step0 / (gn * std::sqrt(static_cast<double>(t)));
    theta = project_ball(theta - alpha * g, energy_budget);
    const double v = f(theta);
    if (v < best_val) {
      best_val = v;
      best = theta;
    }
  }
  return best;
}

// KKT candidates for the scalar affine composite |c.theta + h0 - ybar| + theta'Q theta.
void affine_kkt_candidates(const Vector& c_row, double h0, double ybar, const Matrix& Q,
                           double energy_budget, std::vector<Vector>* out) {
  const int p = static_cast<int>(c_row.size());
  const double radius = std::sqrt(energy_budget);
  const Eigen::LLT<Matrix> qllt(Q);
  const Vector qinv_c = qllt.solve(c_row);

  auto boundary_scaled = [&](const Vector& dir_rhs) -> std::optional<Vector> {
    // Solve ||(Q + lambda I)^{-1} dir_rhs|| = radius for lambda >= 0.
    auto norm_at = [&](double lambda) {
      const Matrix m = Q + lambda * Matrix::Identity(p, p);
      return Vector(m.ldlt().solve(dir_rhs)).norm();
    };
    if (norm_at(0.0) <= radius) return std::nullopt;  // interior case elsewhere
    double lo = 0.0, hi = 1.0;
    while (norm_at(hi) > radius) {
      hi *= 2.0;
      if (hi > 1e18) return std::nullopt;
    }
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (norm_at(mid) > radius ? lo : hi) = mid;
    }
    const Matrix m = Q + 0.5 * (lo + hi) * Matrix::Identity(p, p);
    return Vector(m.ldlt().solve(dir_rhs));
  };

  // Smooth branches: sign s of the residual c.theta + h0 - ybar.
  for (const double s : {1.0, -1.0}) {
    const Vector theta_u = -0.5 * s * qinv_c;
    Vector cand;
    if (theta_u.squaredNorm() <= energy_budget) {
      cand = theta_u;
    } else if (auto b = boundary_scaled(-0.5 * s * c_row)) {
      cand = *b;
    } else {
      continue;
    }
    const double resid = c_row.dot(cand) + h0 - ybar;
    if (resid * s >= 0.0) out->push_back(cand);
  }

  // Kink: c.theta = ybar - h0 with minimal energy.
  const double b = ybar - h0;
  const double c_qinv_c = c_row.dot(qinv_c);
  if (c_qinv_c > 0.0) {
    const Vector theta_k = (b / c_qinv_c) * qinv_c;
    if (theta_k.squaredNorm() <= energy_budget) {
      out->push_back(theta_k);
    } else if (c_row.norm() > 0.0 && std::abs(b) / c_row.norm() <= radius) {
      // Constrained onto plane + ball boundary via the shifted multiplier.
      auto theta_of = [&](double lambda) {
        const Matrix m = Q + lambda * Matrix::Identity(p, p);
        const Vector base = m.ldlt().solve(c_row);
        return Vector((b / c_row.dot(base)) * base);
      };
      double lo = 0.0, hi = 1.0;
      while (theta_of(hi).norm() > radius) {
        hi *= 2.0;
        if (hi > 1e18) break;
      }
      if (hi <= 1e18) {
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          (theta_of(mid).norm() > radius ? lo : hi) = mid;
        }
        out->push_back(theta_of(0.5 * (lo + hi)));
      }
    }
  }

  // Boundary extremes along +-c (cover the tracking-saturated case).
  if (c_row.norm() > 0.0) {
    out->push_back(radius * c_row / c_row.norm());
    out->push_back(-radius * c_row / c_row.norm());
  }
}

}  // namespace

OracleResult oracle_optimum(const std::function<Vector(const Vector&)>& h,
                            const AdversaryObjective& objective, std::uint64_t k,
                            double energy_budget, const std::optional<Vector>& warm_start) {
  if (!h) throw SteadyStateError("oracle_optimum: no exact steady-state map available");
  if (!(energy_budget > 0.0)) throw ConfigError("oracle_optimum: R must be > 0");
  const int p = objective.attack_dim();
  const double radius = std::sqrt(energy_budget);
  const auto f = [&](const Vector& theta) { return composite_value(h, objective, theta, k); };

  const AffineMap map = detect_affine(h, p);
  const Vector ybar = objective.reference_at(k);

  std::function<Vector(const Vector&)> subgrad;
  if (map.affine) {
    subgrad = [&](const Vector& theta) {
      return affine_subgradient(map.H, map.h0, ybar, objective.weight(), theta);
    };
  } else {
    subgrad = [&](const Vector& theta) { return numeric_subgradient(f, theta); };
  }

  std::vector<Vector> candidates;
  if (warm_start) candidates.push_back(project_ball(*warm_start, energy_budget));
  candidates.push_back(Vector::Zero(p));
  if (!warm_start) {
    const CounterRng rng(0xfd15ee, Stream::kOracle, 0);
    for (int s = 0; s < 8; ++s) {
      Vector start = rng.sphere(static_cast<std::uint64_t>(s), p) * radius *
                     std::pow(rng.uniform01(static_cast<std::uint64_t>(s), 2 * p + 1),
                              1.0 / p);
      candidates.push_back(start);
    }
  }

  Vector best;
  double best_val = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vector& theta) {
    const Vector proj = project_ball(theta, energy_budget);
    const double v = f(proj);
    if (v < best_val) {
      best_val = v;
      best = proj;
    }
  };

  const int pg_iters = warm_start ? 120 : 2000;
  for (const Vector& start : candidates) {
    consider(projected_subgradient_run(f, subgrad, start, energy_budget, pg_iters,
                                       0.3 * radius));
  }
  if (map.affine && map.H.rows() == 1) {
    std::vector<Vector> kkt;
    affine_kkt_candidates(map.H.row(0).transpose(), map.h0[0], ybar[0],
                          objective.weight(), energy_budget, &kkt);
    for (const Vector& cand : kkt) consider(cand);
  }
  compass_polish(f, best, best_val, energy_budget, 0.05 * radius, 1e-9 * radius);
  return {best, best_val};
}

OracleResult grid_oracle(const std::function<Vector(const Vector&)>& h,
                         const AdversaryObjective& objective, std::uint64_t k,
                         double energy_budget, double resolution) {
  if (objective.attack_dim() != 2) {
    throw ConfigError("grid_oracle: implemented for p = 2 only");
  }
  if (!(resolution > 0.0)) throw ConfigError("grid_oracle: resolution must be > 0");
  const double radius = std::sqrt(energy_budget);
  const auto n = static_cast<long>(std::floor(radius / resolution));
  Vector theta(2);
  Vector best(2);
  double best_val = std::numeric_limits<double>::infinity();
  for (long i = -n; i <= n; ++i) {
    for (long j = -n; j <= n; ++j) {
      theta[0] = resolution * static_cast<double>(i);
      theta[1] = resolution * static_cast<double>(j);
      if (theta.squaredNorm() > energy_budget) continue;
      const double v = composite_value(h, objective, theta, k);
      if (v < best_val) {
        best_val = v;
        best = theta;
      }
    }
  }
  return {best, best_val};
}

namespace {

void check_fingerprints(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw ConfigError("optimality_gap: empty ensemble");
  for (const auto& r : records) {
    if (r.scenario_fingerprint != records.front().scenario_fingerprint ||
        r.config_fingerprint != records.front().config_fingerprint) {
      throw ConfigError("optimality_gap: records have mismatched fingerprints");
    }
  }
}

GapReport finalize_gap_report(std::vector<double> gap_mean, std::vector<double> pooled,
                              std::size_t trials, OracleMode mode) {
  GapReport report;
  report.mode = mode;
  report.trial_count = trials;
  report.running_time_average.resize(gap_mean.size());
  double cum = 0.0;
  for (std::size_t i = 0; i < gap_mean.size(); ++i) {
    cum += gap_mean[i];
    report.running_time_average[i] = cum / static_cast<double>(i + 1);
  }
  if (!gap_mean.empty()) {
    report.time_averaged_gap = cum / static_cast<double>(gap_mean.size());
    const std::size_t tail_start = gap_mean.size() - std::max<std::size_t>(
        1, gap_mean.size() / 10);
    double tail = 0.0;
    for (std::size_t i = tail_start; i < gap_mean.size(); ++i) tail += gap_mean[i];
    report.tail_time_averaged_gap = tail / static_cast<double>(gap_mean.size() - tail_start);
  }
  const BoxStats bs = box_stats(std::move(pooled));
  report.median = bs.median;
  report.q1 = bs.q1;
  report.q3 = bs.q3;
  report.whisker_lo = bs.whisker_lo;
  report.whisker_hi = bs.whisker_hi;
  report.outlier_count = bs.outlier_count;
  report.gap_mean = std::move(gap_mean);
  return report;
}

}  // namespace

GapReport optimality_gap(const std::vector<TrajectoryRecord>& records,
                         const std::function<Vector(const Vector&)>& h,
                         const AdversaryObjective& objective, double energy_budget) {
  check_fingerprints(records);
  if (!h) throw SteadyStateError("optimality_gap: exact mode requires a steady-state map");
  std::size_t T = 0;
  for (const auto& r : records) T = std::max(T, r.rows.size());

  const bool static_ref = objective.reference().kind == ReferenceKind::kStatic;
  std::vector<double> phi_star(T);
  std::optional<Vector> warm;
  for (std::size_t i = 0; i < T; ++i) {
    const std::uint64_t k = static_cast<std::uint64_t>(i + 1);
    if (static_ref && i > 0) {
      phi_star[i] = phi_star[0];
      continue;
    }
    const OracleResult res = oracle_optimum(h, objective, k, energy_budget, warm);
    phi_star[i] = res.phi_star;
    warm = res.theta_star;
  }

  std::vector<double> gap_mean(T, 0.0);
  std::vector<std::size_t> counts(T, 0);
  std::vector<double> pooled;
  const std::size_t total = T * records.size();
  const std::size_t stride = std::max<std::size_t>(1, total / 2000000);
  pooled.reserve(total / stride + 1);
  std::size_t sample_idx = 0;
  for (const auto& record : records) {
    for (const auto& row : record.rows) {
      const std::size_t i = static_cast<std::size_t>(row.k - 1);
      const double gap = composite_value(h, objective, row.theta, row.k) - phi_star[i];
      gap_mean[i] += gap;
      counts[i] += 1;
      if (sample_idx++ % stride == 0) pooled.push_back(gap);
    }
  }
  for (std::size_t i = 0; i < T; ++i) {
    if (counts[i] > 0) gap_mean[i] /= static_cast<double>(counts[i]);
  }
  return finalize_gap_report(std::move(gap_mean), std::move(pooled), records.size(),
                             OracleMode::kExact);
}

GapReport optimality_gap_empirical(const std::vector<TrajectoryRecord>& records,
                                   const std::vector<double>& phi_best_per_k) {
  check_fingerprints(records);
  std::size_t T = 0;
  for (const auto& r : records) T = std::max(T, r.rows.size());
  if (phi_best_per_k.size() < T) {
    throw ConfigError("optimality_gap_empirical: phi_best series shorter than records");
  }
  std::vector<double> gap_mean(T, 0.0);
  std::vector<std::size_t> counts(T, 0);
  std::vector<double> pooled;
  const std::size_t total = T * records.size();
  const std::size_t stride = std::max<std::size_t>(1, total / 2000000);
  pooled.reserve(total / stride + 1);
  std::size_t sample_idx = 0;
  for (const auto& record : records) {
    for (const auto& row : record.rows) {
      const std::size_t i = static_cast<std::size_t>(row.k - 1);
      const double gap = row.phi - phi_best_per_k[i];
      gap_mean[i] += gap;
      counts[i] += 1;
      if (sample_idx++ % stride == 0) pooled.push_back(gap);
    }
  }
  for (std::size_t i = 0; i < T; ++i) {
    if (counts[i] > 0) gap_mean[i] /= static_cast<double>(counts[i]);
  }
  return finalize_gap_report(std::move(gap_mean), std::move(pooled), records.size(),
                             OracleMode::kEmpiricalBest);
}

SteadyStateErrorSeries steady_state_error(
    const TrajectoryRecord& record, const std::function<Vector(const Vector&)>& h,
    const std::function<Vector(const Vector&)>& x_ss, const AdversaryObjective& objective,
    const std::optional<TheoryConstants>& constants) {
  if (!h) throw SteadyStateError("steady_state_error: requires an exact steady-state map");
  SteadyStateErrorSeries out;
  out.e_phi.reserve(record.rows.size());
  const bool with_bound = constants.has_value() && x_ss != nullptr;
  double mu = 0.0;
  if (with_bound) {
    mu = convergence_rate_mu(*constants).mu;
    out.bound.reserve(record.rows.size());
  }
  for (const auto& row : record.rows) {
    out.e_phi.push_back(row.phi - composite_value(h, objective, row.theta, row.k));
    if (with_bound) {
      const Vector xs = x_ss(row.theta);
      const double v_proxy = constants->alpha2 * (row.x - xs).squaredNorm();
      const double factor =
          mu * constants->M_y * constants->M_y * constants->M_g * constants->M_g /
          (2.0 * constants->alpha2);
      out.bound.push_back(std::sqrt(std::max(0.0, factor * v_proxy)));
    }
  }
  return out;
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats out;
  out.count = values.size();
  if (values.empty()) return out;
  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
  };
  out.median = quantile(0.5);
  out.q1 = quantile(0.25);
  out.q3 = quantile(0.75);
  const double iqr = out.q3 - out.q1;
  const double lo_fence = out.q1 - 1.5 * iqr;
  const double hi_fence = out.q3 + 1.5 * iqr;
  out.whisker_lo = values.back();
  out.whisker_hi = values.front();
  double sum = 0.0;
  for (const double v : values) {
    sum += v;
    if (v >= lo_fence && v < out.whisker_lo) out.whisker_lo = v;
    if (v <= hi_fence && v > out.whisker_hi) out.whisker_hi = v;
    if (v < lo_fence || v > hi_fence) ++out.outlier_count;
  }
  out.mean = sum / static_cast<double>(values.size());
  return out;
}

EnsembleStatistics ensemble_statistics(const std::vector<TrajectoryRecord>& records) {
  if (records.size() < 2) {
    throw ConfigError("ensemble_statistics: need at least 2 records");
  }
  std::size_t total = 0;
  for (const auto& r : records) total += r.rows.size();
  const std::size_t stride = std::max<std::size_t>(1, total / 4000000);

  std::vector<double> pooled_y, pooled_phi, finals;
  pooled_y.reserve(total / stride + 1);
  pooled_phi.reserve(total / stride + 1);
  std::size_t idx = 0;
  for (const auto& r : records) {
    for (const auto& row : r.rows) {
      if (idx++ % stride == 0) {
        pooled_y.push_back(row.y.size() == 1 ? row.y[0] : row.y.norm());
        pooled_phi.push_back(row.phi);
      }
    }
    if (!r.rows.empty()) {
      const auto& last = r.rows.back();
      finals.push_back(last.y.size() == 1 ? last.y[0] : last.y.norm());
    }
  }
  EnsembleStatistics out;
  out.output = box_stats(std::move(pooled_y));
  out.final_output = box_stats(std::move(finals));
  out.phi = box_stats(std::move(pooled_phi));
  return out;
}

}  // namespace fdi
