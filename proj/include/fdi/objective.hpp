#pragma once

#include <cstdint>
#include <functional>

#include "fdi/common.hpp"
#include "fdi/rng.hpp"

namespace fdi {

enum class ReferenceKind { kStatic, kRamp };

/// Expected output trajectory: a constant, or slope*k.
struct Reference {
  ReferenceKind kind = ReferenceKind::kStatic;
  Vector value;  // static value, or per-step slope for the ramp

  static Reference constant(const Vector& v) { return {ReferenceKind::kStatic, v}; }
  static Reference constant(double v) { return constant(Vector::Constant(1, v)); }
  static Reference ramp(const Vector& slope) { return {ReferenceKind::kRamp, slope}; }
  static Reference ramp(double slope) { return ramp(Vector::Constant(1, slope)); }
};

/// Adversary cost  Phi(theta, y; k) = ||y - ybar_k|| + theta' Q theta
/// with Q symmetric positive definite. The tracking term is the plain
/// Euclidean norm, not its square.
class AdversaryObjective {
 public:
  AdversaryObjective(Matrix weight, Reference reference);

  Vector reference_at(std::uint64_t k) const;
  double evaluate(const Vector& theta, const Vector& y, std::uint64_t k) const;
  /// Energy term alone: theta' Q theta.
  double energy(const Vector& theta) const;

  const Matrix& weight() const { return weight_; }
  const Reference& reference() const { return reference_; }
  int attack_dim() const { return static_cast<int>(weight_.rows()); }
  int output_dim() const { return static_cast<int>(reference_.value.size()); }

 private:
  Matrix weight_;
  Reference reference_;
};

struct SmoothingParams {
  double delta = 0.0;     // smoothing radius, > 0
  int sample_count = 0;   // Monte Carlo size, > 0
};

struct SmoothedValue {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of the sphere-smoothed surrogate
///   Phi_delta(w) = E_{v ~ U(S_p)}[ f(w + delta v) ].
/// Samples are addressed by index through `rng`, so the estimate is
/// reproducible and parallelizable.
SmoothedValue smoothed_value(const std::function<double(const Vector&)>& f,
                             const Vector& w, const SmoothingParams& params,
                             const CounterRng& rng);

/// Empirical Lipschitz constant: the max finite-difference ratio over random
/// pairs drawn from the ball of the given radius. A convenience estimate,
/// not a certified bound.
double estimate_lipschitz(const std::function<double(const Vector&)>& f, int dim,
                          double radius, int pairs, const CounterRng& rng);

}  // namespace fdi
