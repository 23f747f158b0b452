#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace fdi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Bad dimensions, invalid parameters, unknown names.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or magnitude blow-up during simulation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Requested a steady-state map on a plant whose closed loop is not
/// strictly stable.
class SteadyStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failures while writing artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// State magnitude beyond which a trajectory is declared divergent.
inline constexpr double kDivergenceLimit = 1e12;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace fdi
