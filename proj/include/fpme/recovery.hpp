#pragma once

#include "fpme/asymptotic.hpp"

#include <Eigen/Eigenvalues>

#include <random>

namespace fpme {

struct Reduction {
  Vector estimate;                    // approximates the linear DN map of g0 on W2
  std::vector<double> h;              // amplitudes, ascending
  std::vector<Vector> scaled;         // h^{-1} (transformed record) / (C_alpha T^{1+alpha}) per h
  std::vector<Vector> pair_extrapolants;
  double pair_disagreement = 0.0;     // relative gap of the last two extrapolants
  std::string warning;
};

/// Nonlinear DN records for one datum g0 and several amplitudes h -> linear DN
/// map of g0 on W2: transform in time, divide by h, Richardson-extrapolate in
/// h^{1/m-1} on consecutive pairs, divide by C_alpha T^{1+alpha}.
inline Reduction reduce_to_linear_dn(std::vector<MeasurementRecord> records, const SimulationParameters& p) {
  require_alpha(p);
  if (records.size() < 2) throw ConfigError("reduction needs records for at least two amplitudes");
  std::sort(records.begin(), records.end(),
            [](const MeasurementRecord& a, const MeasurementRecord& b) { return a.datum.h < b.datum.h; });
  for (std::size_t k = 1; k < records.size(); ++k) {
    if (records[k].datum.g0.size() != records[0].datum.g0.size() ||
        (records[k].datum.g0 - records[0].datum.g0).cwiseAbs().maxCoeff() != 0.0)
      throw ConfigError("reduction records must share the datum profile g0");
    if (records[k].datum.h == records[k - 1].datum.h) throw ConfigError("duplicate amplitude in reduction");
  }

  const double norm = p.c_alpha() * std::pow(p.T, 1.0 + p.alpha);
  const double q = 1.0 / p.m - 1.0;
  Reduction out;
  for (const auto& rec : records) {
    out.h.push_back(rec.datum.h);
    out.scaled.push_back(transform_record(rec, p.alpha, p.T) / (rec.datum.h * norm));
  }
  for (std::size_t k = 1; k < out.h.size(); ++k) {
    const double x0 = std::pow(out.h[k - 1], q), x1 = std::pow(out.h[k], q);
    out.pair_extrapolants.push_back((x0 * out.scaled[k] - x1 * out.scaled[k - 1]) / (x0 - x1));
  }
  out.estimate = out.pair_extrapolants.back();
  if (out.pair_extrapolants.size() >= 2) {
    const Vector& a = out.pair_extrapolants[out.pair_extrapolants.size() - 2];
    const double den = std::max(out.estimate.norm(), 1e-300);
    out.pair_disagreement = (a - out.estimate).norm() / den;
    if (out.pair_disagreement > 0.1)
      out.warning = "Richardson extrapolants disagree by " + std::to_string(100.0 * out.pair_disagreement) + "%";
  }
  return out;
}

struct RecoveryReport {
  Vector lambda_hat;               // on the full grid, zero outside valid points
  Vector truth;                    // ground truth when known, else empty
  Vector pointwise_error;          // |lambda_hat - truth| / |truth| (absolute where truth = 0)
  std::vector<Index> valid_mask;   // full-grid indices of omega points used
  std::vector<int> time_node;      // selected time node per valid point
  double threshold = 0.0;          // absolute |u| threshold applied
  double max_error = 0.0;
  double time_difference_bound = 0.0;  // max |lambda_hat - backward-difference estimate|
  double dn_distance = 0.0;
  double rate_slope = 0.0;
};

/// lambda_hat = -(du/dt + Ls u^m) / u at argmax_t |u| for every omega point with
/// |u| above `relative_threshold` times the global max |u| on omega.
///
/// du/dt uses centered differences in the interior of the time mesh and
/// second-order one-sided ones at its ends. The backward difference, which
/// matches the implicit scheme exactly, gives the reported error bound.
inline RecoveryReport recover_lambda(const OperatorPack& pack, const TimeSeriesField& solution,
                                     const SimulationParameters& p, double relative_threshold = 1e-3,
                                     const Vector* truth = nullptr) {
  if (solution.variable != Variable::u) throw ConfigError("lambda recovery expects the u-variable");
  const std::size_t K = solution.slices.size();
  if (K < 3) throw ConfigError("lambda recovery needs at least three time nodes");
  const DomainLayout& L = pack.layout();
  const double dt = solution.times[1] - solution.times[0];

  double umax = 0.0;
  for (const auto& sl : solution.slices)
    for (Index i : L.mask_omega) umax = std::max(umax, std::abs(sl(i)));

  RecoveryReport r;
  r.threshold = relative_threshold * umax;
  r.lambda_hat = Vector::Zero(L.size());
  r.pointwise_error = Vector::Zero(L.size());
  if (truth) r.truth = *truth;

  std::vector<Vector> vcache(K);
  auto v_at = [&](std::size_t k) -> const Vector& {
    if (vcache[k].size() == 0) vcache[k] = power_map(solution.slices[k], p.m);
    return vcache[k];
  };

  for (Index i : L.mask_omega) {
    std::size_t kb = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (std::abs(solution.slices[k](i)) > std::abs(solution.slices[kb](i))) kb = k;
    const double u = solution.slices[kb](i);
    if (!(std::abs(u) > r.threshold)) continue;
    auto at = [&](std::size_t k) { return solution.slices[k](i); };
    double dudt;
    if (kb == 0)
      dudt = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * dt);
    else if (kb == K - 1)
      dudt = (3.0 * at(K - 1) - 4.0 * at(K - 2) + at(K - 3)) / (2.0 * dt);
    else
      dudt = (at(kb + 1) - at(kb - 1)) / (2.0 * dt);
    const double Lv = pack.Ls().row(i).dot(v_at(kb));
    const double lam = -(dudt + Lv) / u;
    if (!std::isfinite(lam)) throw NumericalError("non-finite recovered lambda");
    r.lambda_hat(i) = lam;
    r.valid_mask.push_back(i);
    r.time_node.push_back(static_cast<int>(kb));
    if (kb > 0) {
      const double back = -((at(kb) - at(kb - 1)) / dt + Lv) / u;
      r.time_difference_bound = std::max(r.time_difference_bound, std::abs(lam - back));
    }
    if (truth) {
      const double t = (*truth)(i);
      r.pointwise_error(i) = t != 0.0 ? std::abs(lam - t) / std::abs(t) : std::abs(lam - t);
      r.max_error = std::max(r.max_error, r.pointwise_error(i));
    }
  }
  if (r.valid_mask.empty())
    throw NumericalError("no omega point exceeds the recovery threshold; raise the datum amplitude");
  return r;
}

namespace detail {

inline void check_comparable(const MeasurementRecord& a, const MeasurementRecord& b) {
  if (a.times.size() != b.times.size() || a.values.size() != b.values.size())
    throw ConfigError("DN records have different time meshes");
  for (std::size_t k = 0; k < a.times.size(); ++k)
    if (std::abs(a.times[k] - b.times[k]) > 1e-12 * std::max(1.0, std::abs(a.times[k])))
      throw ConfigError("DN records have different time meshes");
  for (std::size_t k = 0; k < a.values.size(); ++k)
    if (a.values[k].size() != b.values[k].size()) throw ConfigError("DN records have different W2 masks");
  if (a.datum.h != b.datum.h || a.datum.g0.size() != b.datum.g0.size() ||
      (a.datum.g0 - b.datum.g0).cwiseAbs().maxCoeff() != 0.0)
    throw ConfigError("DN records were produced by different data");
}

inline std::vector<double> trapezoid_weights(const std::vector<double>& t) {
  std::vector<double> w(t.size(), 0.0);
  for (std::size_t k = 0; k + 1 < t.size(); ++k) {
    const double d = 0.5 * (t[k + 1] - t[k]);
    w[k] += d;
    w[k + 1] += d;
  }
  return w;
}

}  // namespace detail

/// Space-time l2 norm of a record (trapezoid in time, `vol` in space).
inline double record_norm(const MeasurementRecord& a, double vol) {
  const auto w = detail::trapezoid_weights(a.times);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) acc += w[k] * vol * a.values[k].squaredNorm();
  return std::sqrt(acc);
}

inline double dn_distance(const MeasurementRecord& a, const MeasurementRecord& b, double vol) {
  detail::check_comparable(a, b);
  const auto w = detail::trapezoid_weights(a.times);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) acc += w[k] * vol * (a.values[k] - b.values[k]).squaredNorm();
  return std::sqrt(acc);
}

/// Distance attributable to solver tolerance: the worst relative step residual
/// times the record size, plus a rounding term.
inline double dn_floor(const MeasurementRecord& a, const MeasurementRecord& b, double vol) {
  const double size = std::max(record_norm(a, vol), record_norm(b, vol));
  const double res = std::max(a.meta.max_residual, b.meta.max_residual);
  return (res + 1e-14) * size;
}

/// Five exterior probe data on W1: bumps at three positions and two widths,
/// and one large-amplitude bump, which the nonlinear map does not simply rescale.
inline std::vector<FieldSpec> probe_battery(const DomainLayout& L) {
  const Box& w = L.config.w1;
  std::vector<double> c(static_cast<std::size_t>(L.dimension)), lo(c.size()), hi(c.size());
  double half = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < c.size(); ++a) {
    c[a] = 0.5 * (w[a].lo + w[a].hi);
    half = std::min(half, 0.5 * w[a].length());
    lo[a] = c[a] - 0.5 * half;
    hi[a] = c[a] + 0.5 * half;
  }
  std::vector<FieldSpec> out;
  out.push_back(FieldSpec::bump(c, half, 1.0));
  out.push_back(FieldSpec::bump(c, 0.5 * half, 1.0));
  out.push_back(FieldSpec::bump(lo, 0.5 * half, 1.0));
  out.push_back(FieldSpec::bump(hi, 0.5 * half, 1.0));
  out.push_back(FieldSpec::bump(c, half, 4.0));
  return out;
}

/// Trial space of the continuation diagnostic.
///   omega_supported : lowest eigenvectors of L_gamma restricted to omega,
///                     extended by zero (u vanishes on W, so only Ls u is seen)
///   band_limited    : lowest eigenvectors of L_gamma on the whole box
enum class UcpSubspace { omega_supported, band_limited };

struct UcpReport {
  double proxy = 0.0;               // min over unit u in the trial space of |u|_W^2 + |Ls u|_W^2
  double full_space_proxy = 0.0;    // same over all grid functions; zero once 2|W| < unknowns
  double minimizer_norm = 1.0;      // global norm of the minimizer
  double amplification = 0.0;       // 1 / sqrt(proxy): |u| per unit of W-observation
  double random_probe_min = 0.0;    // functional over random unit probes from the trial space
  bool below_rounding = false;      // proxy indistinguishable from zero in double precision
  int modes = 0;
  int probes = 0;
  std::size_t mask_size = 0;
  UcpSubspace subspace = UcpSubspace::omega_supported;
  std::string label = "diagnostic only: finite-dimensional proxy for unique continuation";
};

/// Minimizes |u|_W^2 + |Ls u|_W^2 over unit u in a `modes`-dimensional trial
/// space. Over all grid functions the minimum is zero as soon as W gives fewer
/// equations than unknowns, so that value is only reported alongside. The
/// continuation is severely ill-conditioned: beyond a handful of modes the
/// proxy drops to rounding level.
inline UcpReport ucp_diagnostic(const OperatorPack& pack, const std::vector<Index>& W, int probe_count,
                                std::uint64_t seed = 0, int modes = 4,
                                UcpSubspace subspace = UcpSubspace::omega_supported) {
  const DomainLayout& L = pack.layout();
  const Index n = pack.size();
  Vector d = Vector::Zero(n);
  for (Index i : W) d(i) = 1.0;
  const Matrix& A = pack.Ls();
  Matrix G = d.asDiagonal();
  G.noalias() += A * d.asDiagonal() * A;
  G = (0.5 * (G + G.transpose())).eval();

  UcpReport r;
  r.mask_size = W.size();
  r.subspace = subspace;
  Matrix E;
  if (subspace == UcpSubspace::band_limited) {
    r.modes = static_cast<int>(std::min<Index>(std::max(1, modes), n));
    E = pack.eigenvectors().leftCols(r.modes);
  } else {
    const auto& om = L.mask_omega;
    r.modes = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(1, modes)), om.size()));
    const Matrix block = pack.L()(om, om);
    const Eigen::SelfAdjointEigenSolver<Matrix> eb(block);
    E = Matrix::Zero(n, r.modes);
    for (std::size_t k = 0; k < om.size(); ++k)
      E.row(om[k]) = eb.eigenvectors().row(static_cast<Index>(k)).leftCols(r.modes);
  }
  Matrix Gr = E.transpose() * G * E;
  Gr = (0.5 * (Gr + Gr.transpose())).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(Gr);
  const double lead = es.eigenvalues().cwiseAbs().maxCoeff();
  r.proxy = std::max(es.eigenvalues()(0), 0.0);
  r.below_rounding = r.proxy <= 64.0 * std::numeric_limits<double>::epsilon() * lead;
  r.minimizer_norm = (E * es.eigenvectors().col(0)).norm();
  r.amplification = r.proxy > 0.0 ? 1.0 / std::sqrt(r.proxy) : std::numeric_limits<double>::infinity();
  if (2 * static_cast<Index>(W.size()) >= n)
    r.full_space_proxy =
        std::max(Eigen::SelfAdjointEigenSolver<Matrix>(G, Eigen::EigenvaluesOnly).eigenvalues()(0), 0.0);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  r.random_probe_min = std::numeric_limits<double>::infinity();
  r.probes = probe_count;
  for (int k = 0; k < probe_count; ++k) {
    Vector c(r.modes);
    for (Index i = 0; i < c.size(); ++i) c(i) = normal(rng);
    c.normalize();
    r.random_probe_min = std::min(r.random_probe_min, c.dot(Gr * c));
  }
  return r;
}

}  // namespace fpme
