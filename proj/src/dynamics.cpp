#include "fdi/dynamics.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <sstream>

namespace fdi {

double spectral_radius(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw ConfigError("spectral_radius: matrix must be square, got " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  if (!m.allFinite()) throw ConfigError("spectral_radius: non-finite entries");
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

void PlantModel::validate() const {
  if (state_dim < 1 || input_dim < 1 || output_dim < 1 || attack_dim < 1) {
    throw ConfigError("PlantModel: all dimensions must be positive");
  }
  if (state_dim < attack_dim) {
    throw ConfigError("PlantModel: state_dim must be >= attack_dim");
  }
  if (attack_selection.rows() != state_dim || attack_selection.cols() != attack_dim) {
    throw ConfigError("PlantModel: attack_selection must be state_dim x attack_dim");
  }
  // Gamma = non-zero columns of a binary diagonal selection: exactly one 1 per
  // column, at most one per row, nothing else.
  for (int j = 0; j < attack_selection.cols(); ++j) {
    int ones = 0;
    for (int i = 0; i < attack_selection.rows(); ++i) {
      const double g = attack_selection(i, j);
      if (g == 1.0) {
        ++ones;
      } else if (g != 0.0) {
        throw ConfigError("PlantModel: attack_selection entries must be 0 or 1");
      }
    }
    if (ones != 1) {
      throw ConfigError("PlantModel: attack_selection column " + std::to_string(j) +
                        " must contain exactly one 1");
    }
  }
  for (int i = 0; i < attack_selection.rows(); ++i) {
    if (attack_selection.row(i).sum() > 1.0) {
      throw ConfigError("PlantModel: attack_selection row " + std::to_string(i) +
                        " selects more than one attack channel");
    }
  }
  if (initial_state.size() != state_dim) {
    throw ConfigError("PlantModel: initial_state must have state_dim entries");
  }
  if (!transition || !observation || !controller) {
    throw ConfigError("PlantModel: transition/observation/controller must be set");
  }
}

void LinearScenario::validate() const {
  const auto n = A.rows();
  if (A.cols() != n) throw ConfigError("LinearScenario: A must be square");
  if (B.rows() != n) throw ConfigError("LinearScenario: B row count must match A");
  if (C.cols() != n) throw ConfigError("LinearScenario: C column count must match A");
  if (K.rows() != B.cols() || K.cols() != n) {
    throw ConfigError("LinearScenario: K must be input_dim x state_dim");
  }
}

Vector step_attacked(const PlantModel& model, const Vector& x, const Vector& theta,
                     double d) {
  if (x.size() != model.state_dim) {
    throw ConfigError("step_attacked: state has dimension " + std::to_string(x.size()) +
                      ", expected " + std::to_string(model.state_dim));
  }
  if (theta.size() != model.attack_dim) {
    throw ConfigError("step_attacked: attack signal has dimension " +
                      std::to_string(theta.size()) + ", expected " +
                      std::to_string(model.attack_dim));
  }
  Vector next = model.transition(x, model.controller(x), d) + model.attack_selection * theta;
  if (!next.allFinite()) {
    throw NumericError("step_attacked: non-finite state components");
  }
  return next;
}

Vector observe(const PlantModel& model, const Vector& x, double d) {
  if (x.size() != model.state_dim) {
    throw ConfigError("observe: state has dimension " + std::to_string(x.size()) +
                      ", expected " + std::to_string(model.state_dim));
  }
  return model.observation(x, d);
}

Vector steady_state_output(const LinearScenario& scenario, const Matrix& gamma,
                           const Vector& theta) {
  const Matrix a_cl = scenario.closed_loop();
  const double rho = spectral_radius(a_cl);
  if (rho >= 1.0) {
    std::ostringstream oss;
    oss << "steady_state_output: closed loop has spectral radius " << rho
        << " >= 1; the steady-state map is undefined";
    throw SteadyStateError(oss.str());
  }
  const auto n = a_cl.rows();
  const Vector x_ss = (Matrix::Identity(n, n) - a_cl).partialPivLu().solve(gamma * theta);
  return scenario.C * x_ss;
}

NoiseSpec NoiseSpec::gaussian(double mean, double variance) {
  if (!(variance > 0.0)) throw ConfigError("NoiseSpec: gaussian variance must be > 0");
  NoiseSpec s;
  s.kind = NoiseKind::kGaussian;
  s.mean = mean;
  s.variance = variance;
  return s;
}

NoiseSpec NoiseSpec::uniform(double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("NoiseSpec: uniform requires lo < hi");
  NoiseSpec s;
  s.kind = NoiseKind::kUniform;
  s.lo = lo;
  s.hi = hi;
  return s;
}

std::string NoiseSpec::describe() const {
  std::ostringstream oss;
  switch (kind) {
    case NoiseKind::kNone:
      return "none";
    case NoiseKind::kGaussian:
      oss << "gaussian(mean=" << mean << ",var=" << variance << ")";
      return oss.str();
    case NoiseKind::kUniform:
      oss << "uniform(" << lo << "," << hi << ")";
      return oss.str();
  }
  return "?";
}

namespace {

std::string matrix_fingerprint(const Matrix& m) {
  std::ostringstream oss;
  oss.precision(17);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) oss << m(i, j) << ",";
  }
  return oss.str();
}

Scenario make_tanh_scenario() {
  // Contractive nonlinear demo: x+ = 0.5 tanh(x) + Gamma theta, y = sum(x).
  // Contraction factor 0.5 gives a unique steady state for every theta;
  // the exact map is obtained by fixed-point iteration.
  const int n = 2;
  Scenario s;
  s.name = "tanh-contraction";
  s.stability_note = "stable (contraction factor 0.5)";
  PlantModel& m = s.plant;
  m.state_dim = n;
  m.input_dim = 1;
  m.output_dim = 1;
  m.attack_dim = n;
  m.attack_selection = Matrix::Identity(n, n);
  m.initial_state = Vector::Zero(n);
  m.controller = [](const Vector&) { return Vector::Zero(1); };
  m.transition = [](const Vector& x, const Vector&, double d) {
    return Vector(0.5 * x.array().tanh() + d);
  };
  m.observation = [](const Vector& x, double d) {
    return Vector::Constant(1, x.sum() + d);
  };
  const Matrix gamma = m.attack_selection;
  s.steady_output = [gamma, n](const Vector& theta) {
    Vector x = Vector::Zero(n);
    const Vector drive = gamma * theta;
    for (int it = 0; it < 200; ++it) {
      Vector next = 0.5 * x.array().tanh() + drive.array();
      const double delta = (next - x).norm();
      x = next;
      if (delta < 1e-15) break;
    }
    return Vector::Constant(1, x.sum());
  };
  s.has_exact_oracle = true;
  s.fingerprint = "tanh-contraction|n=2,p=2,q=1";
  return s;
}

}  // namespace

Scenario make_linear_scenario(std::string name, const Matrix& A, const Matrix& B,
                              const Matrix& C, const Matrix& K, const Matrix& gamma,
                              const Vector& x0) {
  LinearScenario lin{A, B, C, K};
  lin.validate();
  const double rho = lin.closed_loop_spectral_radius();

  Scenario s;
  s.name = std::move(name);
  s.linear = lin;
  {
    std::ostringstream oss;
    oss.precision(6);
    if (rho < 1.0) {
      oss << "stable (rho(A_cl)=" << rho << ")";
    } else if (rho < 1.0 + 1e-9) {
      oss << "marginal (rho(A_cl)=1)";
    } else {
      oss << "unstable (rho(A_cl)=" << rho << ")";
    }
    s.stability_note = oss.str();
  }

  PlantModel& m = s.plant;
  m.state_dim = static_cast<int>(A.rows());
  m.input_dim = static_cast<int>(B.cols());
  m.output_dim = static_cast<int>(C.rows());
  m.attack_dim = static_cast<int>(gamma.cols());
  m.attack_selection = gamma;
  m.initial_state = x0;
  m.controller = [K](const Vector& x) { return Vector(-K * x); };
  m.transition = [A, B](const Vector& x, const Vector& u, double d) {
    return Vector(A * x + B * u + Vector::Constant(A.rows(), d));
  };
  m.observation = [C](const Vector& x, double d) {
    return Vector(C * x + Vector::Constant(C.rows(), d));
  };
  m.validate();

  if (rho < 1.0) {
    const LinearScenario lin_copy = lin;
    const Matrix gamma_copy = gamma;
    s.steady_output = [lin_copy, gamma_copy](const Vector& theta) {
      return steady_state_output(lin_copy, gamma_copy, theta);
    };
    s.has_exact_oracle = true;
  }

  std::ostringstream fp;
  fp << s.name << "|n=" << m.state_dim << ",m=" << m.input_dim << ",q=" << m.output_dim
     << ",p=" << m.attack_dim << "|A=" << matrix_fingerprint(A)
     << "B=" << matrix_fingerprint(B) << "C=" << matrix_fingerprint(C)
     << "K=" << matrix_fingerprint(K) << "G=" << matrix_fingerprint(gamma)
     << "x0=" << matrix_fingerprint(x0);
  s.fingerprint = fp.str();
  return s;
}

namespace {

std::map<std::string, Scenario> build_registry() {
  Matrix A(2, 2), B(2, 2), C(1, 2), K_paper(2, 2), K_stable(2, 2);
  A << 0, 1, 2, -1;
  B << 0, 0, 1, 0;
  C << 1, 1;
  // Verbatim simulation gain: A_cl = [[0,1],[0.5,0.5]], eigenvalues {1,-0.5}.
  K_paper << 1.5, -1.5, 0.2, 0.1;
  // Modified gain: A_cl = [[0,1],[0,0.5]], spectral radius 0.5, exact
  // steady-state map h(theta) = theta_1 + 4 theta_2.
  K_stable << 2.0, -1.5, 0.2, 0.1;
  Vector x0(2);
  x0 << 1, -3;
  const Matrix gamma = Matrix::Identity(2, 2);

  std::map<std::string, Scenario> reg;
  reg.emplace("paper-linear",
              make_linear_scenario("paper-linear", A, B, C, K_paper, gamma, x0));
  reg.emplace("stable-linear",
              make_linear_scenario("stable-linear", A, B, C, K_stable, gamma, x0));
  reg.emplace("tanh-contraction", make_tanh_scenario());
  return reg;
}

const std::map<std::string, Scenario>& registry() {
  static const std::map<std::string, Scenario> reg = build_registry();
  return reg;
}

}  // namespace

const Scenario& find_scenario(const std::string& name) {
  const auto& reg = registry();
  const auto it = reg.find(name);
  if (it == reg.end()) {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  return it->second;
}

std::vector<const Scenario*> all_scenarios() {
  std::vector<const Scenario*> out;
  for (const auto& [_, s] : registry()) out.push_back(&s);
  return out;
}

}  // namespace fdi
