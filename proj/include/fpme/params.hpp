#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fpme {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.1.0";

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or violated precondition on user input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Solver breakdown: non-convergence, NaN, singular blocks.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Model exponents and time horizon shared by every stage of the pipeline.
///
/// `m_conj` is the Hölder conjugate of `m` and is always derived, never read.
struct SimulationParameters {
  double s = 0.5;
  double m = 2.0;
  double m_conj = 2.0;
  double alpha = 3.0;
  double T = 1.0;

  static SimulationParameters make(double s, double m, double alpha, double T) {
    SimulationParameters p;
    p.s = s;
    p.m = m;
    p.m_conj = m / (m - 1.0);
    p.alpha = alpha;
    p.T = T;
    p.validate();
    return p;
  }

  void validate() const {
    if (!(s > 0.0 && s < 1.0)) throw ConfigError("parameter s must lie in (0, 1)");
    if (!(m > 1.0)) throw ConfigError("parameter m must exceed 1");
    if (!(T > 0.0)) throw ConfigError("parameter T must be positive");
    const double expected = m / (m - 1.0);
    if (std::abs(m_conj - expected) > 4.0 * std::numeric_limits<double>::epsilon() * expected)
      throw ConfigError("m_conj is not the Hölder conjugate of m");
    if (!(alpha > m_conj - 1.0))
      throw ConfigError("parameter alpha must exceed m' - 1 = " + std::to_string(m_conj - 1.0));
  }

  /// Constant relating the transformed exterior datum to h g0: 1/(1+alpha).
  double c_alpha() const { return 1.0 / (1.0 + alpha); }

  SimulationParameters with_horizon(double horizon) const {
    SimulationParameters p = *this;
    p.T = horizon;
    p.validate();
    return p;
  }
};

}  // namespace fpme
