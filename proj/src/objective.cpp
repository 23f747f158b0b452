#include "fdi/objective.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace fdi {

AdversaryObjective::AdversaryObjective(Matrix weight, Reference reference)
    : weight_(std::move(weight)), reference_(std::move(reference)) {
  if (weight_.rows() != weight_.cols()) {
    throw ConfigError("AdversaryObjective: Q must be square");
  }
  if (!weight_.isApprox(weight_.transpose(), 1e-12)) {
    throw ConfigError("AdversaryObjective: Q must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(weight_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw ConfigError("AdversaryObjective: Q must be positive definite");
  }
  if (reference_.value.size() < 1) {
    throw ConfigError("AdversaryObjective: reference value must be non-empty");
  }
}

Vector AdversaryObjective::reference_at(std::uint64_t k) const {
  switch (reference_.kind) {
    case ReferenceKind::kStatic:
      return reference_.value;
    case ReferenceKind::kRamp:
      return reference_.value * static_cast<double>(k);
  }
  return reference_.value;
}

double AdversaryObjective::energy(const Vector& theta) const {
  if (theta.size() != weight_.rows()) {
    throw ConfigError("AdversaryObjective: theta has dimension " +
                      std::to_string(theta.size()) + ", Q is " +
                      std::to_string(weight_.rows()) + "x" + std::to_string(weight_.cols()));
  }
  return theta.dot(weight_ * theta);
}

double AdversaryObjective::evaluate(const Vector& theta, const Vector& y,
                                    std::uint64_t k) const {
  const Vector ybar = reference_at(k);
  if (y.size() != ybar.size()) {
    throw ConfigError("AdversaryObjective: output has dimension " +
                      std::to_string(y.size()) + ", reference has " +
                      std::to_string(ybar.size()));
  }
  return (y - ybar).norm() + energy(theta);
}

SmoothedValue smoothed_value(const std::function<double(const Vector&)>& f,
                             const Vector& w, const SmoothingParams& params,
                             const CounterRng& rng) {
  if (!(params.delta > 0.0)) throw ConfigError("smoothed_value: delta must be > 0");
  if (params.sample_count < 1) {
    throw ConfigError("smoothed_value: sample_count must be >= 1");
  }
  const int p = static_cast<int>(w.size());
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < params.sample_count; ++i) {
    const Vector v = rng.sphere(static_cast<std::uint64_t>(i), p);
    const double val = f(w + params.delta * v);
    sum += val;
    sum_sq += val * val;
  }
  const double n = static_cast<double>(params.sample_count);
  const double mean = sum / n;
  double std_error = 0.0;
  if (params.sample_count > 1) {
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    std_error = std::sqrt(var / n);
  }
  return {mean, std_error};
}

double estimate_lipschitz(const std::function<double(const Vector&)>& f, int dim,
                          double radius, int pairs, const CounterRng& rng) {
  if (dim < 1 || pairs < 1 || !(radius > 0.0)) {
    throw ConfigError("estimate_lipschitz: bad arguments");
  }
  double best = 0.0;
  for (int i = 0; i < pairs; ++i) {
    const std::uint64_t k = static_cast<std::uint64_t>(i);
    // Two independent points from the ball: sphere direction times radius*u^(1/dim).
    Vector a = rng.sphere(2 * k, dim);
    Vector b = rng.sphere(2 * k + 1, dim);
    a *= radius * std::pow(rng.uniform01(2 * k, 2 * dim), 1.0 / dim);
    b *= radius * std::pow(rng.uniform01(2 * k + 1, 2 * dim), 1.0 / dim);
    const double dist = (a - b).norm();
    if (dist < 1e-12) continue;
    best = std::max(best, std::abs(f(a) - f(b)) / dist);
  }
  return best;
}

}  // namespace fdi
