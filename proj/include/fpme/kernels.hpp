#pragma once

#include "fpme/operator_pack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

namespace fpme {

/// Heat kernel density p_t(x_i, x_j) of the box operator:
/// Q diag(exp(-t lambda)) Q^T divided by the volume element.
inline Matrix heat_kernel(const OperatorPack& pack, double t) {
  if (!(t > 0.0)) throw ConfigError("heat kernel time must be positive");
  const Matrix& Q = pack.eigenvectors();
  const Vector decay = (-t * pack.eigenvalues().array()).exp().matrix();
  Matrix P = Q * decay.asDiagonal() * Q.transpose();
  P = (0.5 * (P + P.transpose())).eval();
  return P / pack.layout().volume_element();
}

struct GaussLegendre {
  std::vector<double> nodes;  // on [-1, 1]
  std::vector<double> weights;
};

inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre g;
  g.nodes.resize(static_cast<std::size_t>(n));
  g.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    g.nodes[static_cast<std::size_t>(i)] = x;
    g.weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return g;
}

/// Composite Gauss rule in tau = log t.
struct QuadratureRule {
  double tau_min = -40.0;
  double tau_max = 40.0;
  int nodes = 400;
  int points_per_panel = 4;

  QuadratureRule doubled() const {
    QuadratureRule r = *this;
    r.nodes *= 2;
    return r;
  }
};

/// Per-eigenvalue weights  sum_j w_j (exp(-t_j lambda) - 1) t_j^{-s},
/// approximating  int_0^inf (exp(-t lambda) - 1) t^{-1-s} dt = Gamma(-s) lambda^s.
///
/// The "-1" only adds a multiple of the identity to the kernel matrix, so the
/// off-diagonal entries equal the integral of p_t t^{-1-s}. The pieces outside
/// [e^tau_min, e^tau_max] are added in closed form: the head through the first
/// two Taylor terms of exp(-t lambda) - 1, the tail as -t^{-s}/s, since
/// exp(-t lambda) has long vanished there.
inline Vector mode_weights(const Vector& eigenvalues, double s, const QuadratureRule& rule) {
  const GaussLegendre gl = gauss_legendre(rule.points_per_panel);
  const int panels = std::max(1, rule.nodes / rule.points_per_panel);
  const double width = (rule.tau_max - rule.tau_min) / panels;
  Vector w = Vector::Zero(eigenvalues.size());
  for (int p = 0; p < panels; ++p) {
    const double mid = rule.tau_min + (p + 0.5) * width;
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
      const double tau = mid + 0.5 * width * gl.nodes[q];
      const double t = std::exp(tau);
      const double omega = 0.5 * width * gl.weights[q] * std::exp(-s * tau);
      w.array() += omega * (-t * eigenvalues.array()).expm1();
    }
  }
  const double a = std::exp(rule.tau_min), b = std::exp(rule.tau_max);
  const Eigen::ArrayXd lam = eigenvalues.array();
  w.array() += -lam * std::pow(a, 1.0 - s) / (1.0 - s) + lam.square() * std::pow(a, 2.0 - s) / (2.0 * (2.0 - s));
  w.array() -= std::pow(b, -s) / s;
  return w;
}

struct KernelMatrix {
  Matrix values;  // zero on the diagonal: K is singular at x = y
  double quadrature_error_estimate = 0.0;
  bool quadrature_flagged = false;
  double calibration_constant = 1.0;  // fitted C_s
  double analytic_constant = 1.0;     // -1/Gamma(-s), reported for comparison
  double bilinear_residual = 0.0;     // max relative misfit over the probe basis
};

/// 1/2 sum_{i != j} (u_i - u_j)(v_i - v_j) K_ij vol^2.
inline double kernel_bilinear(const Matrix& K, const Vector& u, const Vector& v, double vol) {
  const Vector row = K.rowwise().sum();
  const double diag = (u.array() * v.array() * row.array()).sum();
  return (diag - u.dot(K * v)) * vol * vol;
}

/// Smooth probe functions whose supports stay at least four spacings inside the
/// box; neighbouring supports are disjoint.
inline std::vector<Vector> bilinear_probe_basis(const DomainLayout& L, int count = 6) {
  std::vector<Vector> probes;
  const double radius = L.box_extent() / 16.0;
  for (int k = 0; k < count; ++k) {
    std::vector<double> c;
    for (int a = 0; a < L.dimension; ++a) {
      const auto& iv = L.box[static_cast<std::size_t>(a)];
      const double inner_lo = iv.lo + radius + 4.0 * L.spacing;
      const double inner_hi = iv.hi - radius - 4.0 * L.spacing;
      const double frac = count == 1 ? 0.5 : static_cast<double>(k) / (count - 1);
      const double shift = a == 0 ? frac : 1.0 - frac;
      c.push_back(inner_lo + (inner_hi - inner_lo) * (0.1 + 0.8 * shift));
    }
    probes.push_back(FieldSpec::bump(c, radius, 1.0).sample(L));
  }
  return probes;
}

struct BilinearCheck {
  double constant = 1.0;
  double max_relative_residual = 0.0;  // over all pairs, overlapping ones included
  int pairs = 0;
  int disjoint_pairs = 0;
};

/// Constant C with <Ls u, v> = C * kernel_bilinear(raw, u, v).
///
/// For probes with disjoint supports the killing part of the form (the row
/// sums of Ls, nonzero because of the box boundary) drops out, so C is fitted
/// on those pairs; the misfit over all pairs is reported.
inline BilinearCheck calibrate_bilinear(const OperatorPack& pack, const Matrix& raw,
                                        const std::vector<Vector>& probes) {
  const double vol = pack.layout().volume_element();
  struct Sample {
    double lhs, rhs;
    bool disjoint;
  };
  std::vector<Sample> samples;
  for (std::size_t a = 0; a < probes.size(); ++a) {
    const Vector Lu = pack.apply(probes[a]);
    for (std::size_t b = a; b < probes.size(); ++b) {
      const bool disjoint = (probes[a].array() * probes[b].array()).abs().maxCoeff() == 0.0;
      samples.push_back({vol * Lu.dot(probes[b]), kernel_bilinear(raw, probes[a], probes[b], vol), disjoint});
    }
  }
  BilinearCheck out;
  for (const auto& s : samples) out.disjoint_pairs += s.disjoint ? 1 : 0;
  double num = 0.0, den = 0.0, scale = 0.0;
  for (const auto& s : samples) {
    scale = std::max(scale, std::abs(s.lhs));
    if (out.disjoint_pairs > 0 && !s.disjoint) continue;
    num += s.lhs * s.rhs;
    den += s.rhs * s.rhs;
  }
  out.constant = den > 0.0 ? num / den : 0.0;
  for (const auto& s : samples)
    out.max_relative_residual = std::max(out.max_relative_residual, std::abs(s.lhs - out.constant * s.rhs) / scale);
  out.pairs = static_cast<int>(samples.size());
  return out;
}

inline KernelMatrix jump_kernel(const OperatorPack& pack, const QuadratureRule& rule = {},
                                double error_tolerance = 1e-8) {
  const double vol = pack.layout().volume_element();
  const Matrix& Q = pack.eigenvectors();
  const Vector w = mode_weights(pack.eigenvalues(), pack.s(), rule);
  const Vector w2 = mode_weights(pack.eigenvalues(), pack.s(), rule.doubled());

  Matrix raw = Q * w.asDiagonal() * Q.transpose();
  raw = (0.5 * (raw + raw.transpose()) / vol).eval();
  raw.diagonal().setZero();

  KernelMatrix K;
  const double offdiag_max = raw.cwiseAbs().maxCoeff();
  K.quadrature_error_estimate =
      offdiag_max > 0.0 ? (w - w2).cwiseAbs().maxCoeff() / (vol * offdiag_max) : 0.0;
  K.quadrature_flagged = K.quadrature_error_estimate > error_tolerance;

  const BilinearCheck cal = calibrate_bilinear(pack, raw, bilinear_probe_basis(pack.layout()));
  K.calibration_constant = cal.constant;
  K.bilinear_residual = cal.max_relative_residual;
  K.analytic_constant = -1.0 / std::tgamma(-pack.s());
  K.values = cal.constant * raw;
  return K;
}

struct KernelBand {
  double lower = std::numeric_limits<double>::infinity();
  double upper = 0.0;
  long pairs = 0;
  double ratio() const { return pairs > 0 ? upper / lower : std::numeric_limits<double>::infinity(); }
};

/// Range of K(i,j) |x_i - x_j|^{n+2s} over pairs with separation in
/// [min_sep, max_sep] and both points at least `margin` from the box boundary.
inline KernelBand kernel_band(const OperatorPack& pack, const KernelMatrix& K, double min_sep,
                              double max_sep, double margin) {
  const DomainLayout& L = pack.layout();
  const std::vector<Index> idx = interior_indices(L, margin);
  const double power = L.dimension + 2.0 * pack.s();
  KernelBand band;
  for (Index i : idx)
    for (Index j : idx) {
      if (j <= i) continue;
      const double r = L.distance(i, j);
      if (r < min_sep || r > max_sep) continue;
      const double v = K.values(i, j) * std::pow(r, power);
      band.lower = std::min(band.lower, v);
      band.upper = std::max(band.upper, v);
      ++band.pairs;
    }
  return band;
}

/// Two-sided Gaussian envelope
///   c1 exp(-c1' r^2/t) t^{-n/2} <= p_t <= c2 exp(-c2' r^2/t) t^{-n/2}
/// fitted on interior pairs with r^2/t <= max_z.
struct GaussianSandwich {
  double c1 = 0.0, c1_rate = 0.0, c2 = 0.0, c2_rate = 0.0;
  long samples = 0;
  bool finite() const {
    return samples > 0 && std::isfinite(c1) && std::isfinite(c2) && c1 > 0.0 && c2 > 0.0 &&
           std::isfinite(c1_rate) && std::isfinite(c2_rate) && c2_rate > 0.0;
  }
};

inline GaussianSandwich fit_gaussian_sandwich(const OperatorPack& pack, const std::vector<double>& times,
                                              double margin, double max_z = 16.0) {
  const DomainLayout& L = pack.layout();
  const std::vector<Index> idx = interior_indices(L, margin);
  std::vector<std::pair<double, double>> zy;  // (r^2/t, log(p t^{n/2}))
  for (double t : times) {
    const Matrix P = heat_kernel(pack, t);
    const double scale = std::pow(t, 0.5 * L.dimension);
    for (Index i : idx)
      for (Index j : idx) {
        if (j < i) continue;
        const double r = L.distance(i, j);
        const double z = r * r / t;
        const double p = P(i, j) * scale;
        if (z > max_z || !(p > 1e-12)) continue;
        zy.emplace_back(z, std::log(p));
      }
  }
  GaussianSandwich g;
  g.samples = static_cast<long>(zy.size());
  if (zy.size() < 2) return g;
  double sz = 0, sy = 0, szz = 0, szy = 0;
  for (auto [z, y] : zy) {
    sz += z;
    sy += y;
    szz += z * z;
    szy += z * y;
  }
  const double n = static_cast<double>(zy.size());
  const double slope = (n * szy - sz * sy) / (n * szz - sz * sz);
  const double rate = -slope;
  g.c2_rate = 0.5 * rate;
  g.c1_rate = 2.0 * rate;
  double up = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
  for (auto [z, y] : zy) {
    up = std::max(up, y + g.c2_rate * z);
    lo = std::min(lo, y + g.c1_rate * z);
  }
  g.c2 = std::exp(up);
  g.c1 = std::exp(lo);
  return g;
}

}  // namespace fpme
