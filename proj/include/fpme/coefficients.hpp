#pragma once

#include "fpme/layout.hpp"

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace fpme {

/// Standard C-infinity bump exp(1 - 1/(1 - r^2)) on |r| < 1, peak value 1.
inline double smooth_bump(double r) {
  if (std::abs(r) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - r * r));
}

/// Scalar field description used for conductivities, absorptions and data.
///
///   constant   : value
///   bump       : base + amplitude * smooth_bump(|x - center| / radius)
///   table      : piecewise-linear interpolation of (x, value) pairs along the
///                first coordinate, clamped to the end values
///   polynomial : sum_k coefficients[k] * x_0^k
struct FieldSpec {
  enum class Kind { constant, bump, table, polynomial };

  Kind kind = Kind::constant;
  double value = 0.0;
  double base = 0.0;
  double amplitude = 1.0;
  double radius = 1.0;
  std::vector<double> center;
  std::vector<std::pair<double, double>> table;
  std::vector<double> coefficients;

  static FieldSpec constant(double v) {
    FieldSpec f;
    f.kind = Kind::constant;
    f.value = v;
    return f;
  }

  static FieldSpec bump(std::vector<double> c, double r, double amp, double base = 0.0) {
    FieldSpec f;
    f.kind = Kind::bump;
    f.center = std::move(c);
    f.radius = r;
    f.amplitude = amp;
    f.base = base;
    return f;
  }

  static FieldSpec polynomial(std::vector<double> coeffs) {
    FieldSpec f;
    f.kind = Kind::polynomial;
    f.coefficients = std::move(coeffs);
    return f;
  }

  double evaluate(std::span<const double> x) const {
    switch (kind) {
      case Kind::constant:
        return value;
      case Kind::bump: {
        double r2 = 0.0;
        for (std::size_t a = 0; a < x.size(); ++a) {
          const double c = a < center.size() ? center[a] : 0.0;
          r2 += (x[a] - c) * (x[a] - c);
        }
        return base + amplitude * smooth_bump(std::sqrt(r2) / radius);
      }
      case Kind::table: {
        if (table.empty()) return 0.0;
        const double t = x[0];
        if (t <= table.front().first) return table.front().second;
        if (t >= table.back().first) return table.back().second;
        for (std::size_t k = 1; k < table.size(); ++k) {
          if (t <= table[k].first) {
            const auto [x0, y0] = table[k - 1];
            const auto [x1, y1] = table[k];
            return y0 + (y1 - y0) * (t - x0) / (x1 - x0);
          }
        }
        return table.back().second;
      }
      case Kind::polynomial: {
        double acc = 0.0;
        for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * x[0] + *it;
        return acc;
      }
    }
    return 0.0;
  }

  /// Samples the field at every unknown of the layout.
  Vector sample(const DomainLayout& L) const {
    Vector out(L.size());
    std::vector<double> x(static_cast<std::size_t>(L.dimension));
    for (Index i = 0; i < L.size(); ++i) {
      for (int a = 0; a < L.dimension; ++a) x[static_cast<std::size_t>(a)] = L.coords(i, a);
      out(i) = evaluate(x);
    }
    return out;
  }
};

/// Conductivity and absorption on the interior unknowns. Box-boundary nodes
/// carry gamma = 1 implicitly.
struct CoefficientFields {
  Vector gamma;
  Vector lambda;
};

inline void validate_coefficients(const DomainLayout& L, const CoefficientFields& c) {
  if (c.gamma.size() != L.size() || c.lambda.size() != L.size())
    throw ConfigError("coefficient fields do not match the layout size");
  for (Index i = 0; i < L.size(); ++i) {
    if (!(c.gamma(i) > 0.0) || !std::isfinite(c.gamma(i)))
      throw ConfigError("gamma must be positive everywhere");
    if (L.region[static_cast<std::size_t>(i)] == Region::exterior) {
      if (std::abs(c.gamma(i) - 1.0) > 1e-12)
        throw ConfigError("gamma must equal 1 in the exterior of omega");
      if (c.lambda(i) != 0.0) throw ConfigError("lambda must vanish outside omega");
    }
    if (!std::isfinite(c.lambda(i))) throw ConfigError("lambda must be finite");
  }
}

/// Evaluates gamma everywhere and lambda on omega only (zero elsewhere).
inline CoefficientFields make_coefficients(const DomainLayout& L, const FieldSpec& gamma,
                                           const FieldSpec& lambda) {
  CoefficientFields c;
  c.gamma = gamma.sample(L);
  const Vector lam = lambda.sample(L);
  c.lambda = Vector::Zero(L.size());
  for (Index i : L.mask_omega) c.lambda(i) = lam(i);
  validate_coefficients(L, c);
  return c;
}

inline CoefficientFields unit_coefficients(const DomainLayout& L) {
  return {Vector::Ones(L.size()), Vector::Zero(L.size())};
}

}  // namespace fpme
