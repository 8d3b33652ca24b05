#pragma once

#include "fpme/operator_pack.hpp"

#include <cmath>
#include <string>

namespace fpme {

/// Spectral weight used by the discrete Sobolev surrogates.
///   inhomogeneous: (1 + lambda_k)^r
///   homogeneous:   lambda_k^r
enum class NormWeight { inhomogeneous, homogeneous };

/// Discrete H^r surrogate ( sum_k w_k(r) c_k^2 )^{1/2}, where c_k are the
/// volume-weighted eigenbasis coefficients of `field`.
inline double sobolev_norm(const OperatorPack& pack, double order, const Vector& field,
                           NormWeight weight = NormWeight::inhomogeneous) {
  if (order < -1.0 || order > 1.0) throw ConfigError("Sobolev order must lie in [-1, 1]");
  const Vector c = pack.spectral_coefficients(field);
  const Eigen::ArrayXd base =
      weight == NormWeight::inhomogeneous ? (1.0 + pack.eigenvalues().array()).eval()
                                          : pack.eigenvalues().array().eval();
  return std::sqrt((base.pow(order) * c.array().square()).sum());
}

/// Empirical constant of an inequality over a tested sample.
struct EstimateWitness {
  std::string name;
  double empirical_constant = 0.0;
  long sample_size = 0;
  std::string worst_case_input;
  bool vacuous = false;  // every sample had a zero denominator
};

}  // namespace fpme
