#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fdi/common.hpp"
#include "fdi/rng.hpp"

namespace fdi {

/// Largest modulus among the eigenvalues of a square matrix.
double spectral_radius(const Matrix& m);

/// Discrete-time plant under state injection:
///   x+ = f(x, u, d) + Gamma * theta,   y = g(x, d)
/// with a fixed feedback controller u = controller(x). Noise d enters as a
/// scalar additive disturbance applied to every state component and to the
/// output at the same step.
struct PlantModel {
  int state_dim = 0;
  int input_dim = 0;
  int output_dim = 0;
  int attack_dim = 0;
  std::function<Vector(const Vector& x, const Vector& u, double d)> transition;
  std::function<Vector(const Vector& x, double d)> observation;
  std::function<Vector(const Vector& x)> controller;
  Matrix attack_selection;  // n x p binary selection (Gamma)
  Vector initial_state;

  /// Throws ConfigError on inconsistent dimensions or a malformed Gamma
  /// (each column must contain exactly one 1, each row at most one).
  void validate() const;
};

/// Linear closed loop x+ = (A - B K) x + Gamma theta, y = C x.
/// The closed-loop matrix is always derived, never cached.
struct LinearScenario {
  Matrix A, B, C, K;

  Matrix closed_loop() const { return A - B * K; }
  double closed_loop_spectral_radius() const { return spectral_radius(closed_loop()); }
  bool strictly_stable() const { return closed_loop_spectral_radius() < 1.0; }
  void validate() const;
};

Vector step_attacked(const PlantModel& model, const Vector& x, const Vector& theta, double d);
Vector observe(const PlantModel& model, const Vector& x, double d);

/// Exact noiseless steady-state output C (I - A_cl)^{-1} Gamma theta.
/// Requires spectral_radius(A_cl) < 1 strictly; throws SteadyStateError
/// otherwise (the verbatim paper gain has a unit eigenvalue and lands here).
Vector steady_state_output(const LinearScenario& scenario, const Matrix& gamma,
                           const Vector& theta);

enum class NoiseKind { kNone, kGaussian, kUniform };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double mean = 0.0;      // gaussian mean
  double variance = 0.0;  // gaussian variance (> 0)
  double lo = 0.0;        // uniform bounds (lo < hi)
  double hi = 0.0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec gaussian(double mean, double variance);
  static NoiseSpec uniform(double lo, double hi);
  std::string describe() const;
};

/// Seed-addressable scalar noise stream; sample(trial, k) is a pure function
/// of (master seed, trial, k).
class NoiseSource {
 public:
  NoiseSource(NoiseSpec spec, std::uint64_t master_seed)
      : spec_(spec), master_seed_(master_seed) {}

  double sample(std::uint64_t trial, std::uint64_t k) const {
    switch (spec_.kind) {
      case NoiseKind::kNone:
        return 0.0;
      case NoiseKind::kGaussian: {
        CounterRng rng(master_seed_, Stream::kNoise, trial);
        return spec_.mean + std::sqrt(spec_.variance) * rng.gaussian(k, 0);
      }
      case NoiseKind::kUniform: {
        CounterRng rng(master_seed_, Stream::kNoise, trial);
        return spec_.lo + (spec_.hi - spec_.lo) * rng.uniform01(k, 0);
      }
    }
    return 0.0;
  }

  const NoiseSpec& spec() const { return spec_; }
  std::uint64_t master_seed() const { return master_seed_; }

 private:
  NoiseSpec spec_;
  std::uint64_t master_seed_;
};

/// A registered plant plus whatever exact machinery it supports.
struct Scenario {
  std::string name;
  std::string stability_note;  // e.g. "stable" or "marginal (rho(A_cl)=1)"
  PlantModel plant;
  std::optional<LinearScenario> linear;
  /// Exact noiseless steady-state output map h(theta); empty when the closed
  /// loop is not strictly stable (no well-defined map).
  std::function<Vector(const Vector&)> steady_output;
  bool has_exact_oracle = false;
  std::string fingerprint;
};

/// Built-in registry: paper-linear, stable-linear, tanh-contraction.
const Scenario& find_scenario(const std::string& name);
std::vector<const Scenario*> all_scenarios();

/// Assemble a linear scenario (controller u = -K x) into a full Scenario.
Scenario make_linear_scenario(std::string name, const Matrix& A, const Matrix& B,
                              const Matrix& C, const Matrix& K, const Matrix& gamma,
                              const Vector& x0);

}  // namespace fdi
