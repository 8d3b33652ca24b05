#pragma once

#include "fpme/elliptic.hpp"
#include "fpme/params.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

namespace fpme {

/// Signed power |z|^{p-1} z, applied pointwise.
inline Vector power_map(const Vector& z, double p) {
  Vector out(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double a = std::abs(z(i));
    out(i) = a == 0.0 ? 0.0 : std::copysign(std::pow(a, p), z(i));
  }
  return out;
}

/// Volume-weighted  1/(m+1) sum |v|^{m+1}  over the given omega values.
inline double energy_functional(const DomainLayout& L, const Vector& v_omega, double m) {
  return L.volume_element() * v_omega.array().abs().pow(m + 1.0).sum() / (m + 1.0);
}

/// A z = (Ls (z^m extended by zero))|_omega.
inline Vector pme_apply(const OperatorPack& pack, const Vector& z_omega, double m) {
  const DomainLayout& L = pack.layout();
  const Vector full = L.extend_from(power_map(z_omega, m), L.mask_omega);
  return L.restrict_to(pack.apply(full), L.mask_omega);
}

struct StepOptions {
  double target_tolerance = 1e-11;  // Newton stops here
  double accept_tolerance = 1e-9;   // larger residuals are fatal
  int max_newton = 60;
  int max_halvings = 40;
  double epsilon = 1e-8;  // floor on |v| inside the derivative of v^{1/m}
  int max_sweeps = 200000;
  double relaxation = 0.5;
};

struct StepResult {
  Vector w;
  double residual = 0.0;  // weighted l2, relative to max(1, |rhs|)
  int newton_iterations = 0;
  bool used_fallback = false;
};

/// Backward Euler step for  w_t + kappa A_oo w^m + lambda w = f  on omega:
///
///   w + dt (kappa A_oo w^m + lambda w) = w_prev + dt f.
///
/// Solved for v = w^m by damped Newton on
///   (1 + dt lambda) v^{1/m} + dt kappa A_oo v = rhs,
/// with a relaxed nonlinear Jacobi sweep as fallback when Newton stalls.
class ImplicitStepper {
 public:
  ImplicitStepper(const OperatorPack& pack, Vector lambda_omega, double m, double dt, double stiffness = 1.0,
                  StepOptions options = {})
      : vol_(pack.layout().volume_element()),
        m_(m),
        dt_(dt),
        kappa_(stiffness),
        lambda_(std::move(lambda_omega)),
        options_(options) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    if (!(m > 0.0)) throw ConfigError("power m must be positive");
    const auto& om = pack.layout().mask_omega;
    if (lambda_.size() != static_cast<Index>(om.size())) throw ConfigError("lambda must be given on omega");
    block_ = dt_ * kappa_ * pack.Ls()(om, om);
    diag_ = (1.0 + dt_ * lambda_.array()).matrix();
  }

  StepResult step(const Vector& w_prev, const Vector& f_next) const {
    const Vector rhs = w_prev + dt_ * f_next;
    const double scale = std::max(1.0, std::sqrt(vol_) * rhs.norm());
    StepResult out;
    Vector v = power_map(w_prev, m_);
    double res = residual_norm(v, rhs);
    check_finite(res, 0);

    Eigen::LLT<Matrix> llt;
    bool stalled = false;
    while (res > options_.target_tolerance * scale && out.newton_iterations < options_.max_newton) {
      ++out.newton_iterations;
      const Vector F = equation(v, rhs);
      Matrix J = block_;
      for (Index i = 0; i < v.size(); ++i) {
        const double a = std::max(std::abs(v(i)), options_.epsilon);
        J(i, i) += diag_(i) * std::pow(a, 1.0 / m_ - 1.0) / m_;
      }
      llt.compute(J);
      if (llt.info() != Eigen::Success) {
        stalled = true;
        break;
      }
      const Vector dv = llt.solve(-F);
      double t = 1.0;
      bool improved = false;
      for (int k = 0; k <= options_.max_halvings; ++k, t *= 0.5) {
        const Vector trial = v + t * dv;
        const double r = residual_norm(trial, rhs);
        check_finite(r, out.newton_iterations);
        if (r < res) {
          v = trial;
          res = r;
          improved = true;
          break;
        }
      }
      if (!improved) {
        stalled = true;
        break;
      }
    }
    if (stalled || res > options_.target_tolerance * scale) {
      // Near the degenerate front v^{1/m} has an unbounded derivative; the same
      // equation in w = v^{1/m} has the well-conditioned Jacobian D + B diag(m|w|^{m-1}).
      res = newton_w(v, rhs, scale, res, out.newton_iterations);
      if (res > options_.accept_tolerance * scale) {
        out.used_fallback = true;
        res = jacobi_sweeps(v, rhs, scale);
      }
    }
    out.residual = res / scale;
    if (res > options_.accept_tolerance * scale) {
      std::ostringstream msg;
      msg << "implicit step failed to converge; last relative residual " << out.residual;
      throw NumericalError(msg.str());
    }
    out.w = power_map(v, 1.0 / m_);
    return out;
  }

  /// Relative residual of a candidate w for the step equation.
  double residual(const Vector& w, const Vector& w_prev, const Vector& f_next) const {
    const Vector rhs = w_prev + dt_ * f_next;
    const double scale = std::max(1.0, std::sqrt(vol_) * rhs.norm());
    return residual_norm(power_map(w, m_), rhs) / scale;
  }

  double dt() const { return dt_; }
  double stiffness() const { return kappa_; }

 private:
  Vector equation(const Vector& v, const Vector& rhs) const {
    return (diag_.array() * power_map(v, 1.0 / m_).array()).matrix() + block_ * v - rhs;
  }

  double residual_norm(const Vector& v, const Vector& rhs) const {
    return std::sqrt(vol_) * equation(v, rhs).norm();
  }

  static void check_finite(double r, int iteration) {
    if (!std::isfinite(r)) {
      std::ostringstream msg;
      msg << "non-finite residual in implicit step at Newton iteration " << iteration;
      throw NumericalError(msg.str());
    }
  }

  // Damped Newton on  D w + B w^m = rhs  in the w-variable; updates v in place.
  double newton_w(Vector& v, const Vector& rhs, double scale, double res, int& iterations) const {
    Vector w = power_map(v, 1.0 / m_);
    Eigen::PartialPivLU<Matrix> lu;
    for (int it = 0; it < options_.max_newton && res > options_.target_tolerance * scale; ++it) {
      ++iterations;
      const Vector vw = power_map(w, m_);
      const Vector F = (diag_.array() * w.array()).matrix() + block_ * vw - rhs;
      Matrix J = block_ * (m_ * w.array().abs().pow(m_ - 1.0)).matrix().asDiagonal();
      J.diagonal() += diag_;
      lu.compute(J);
      const Vector dw = lu.solve(-F);
      if (!dw.allFinite()) break;
      double t = 1.0;
      bool improved = false;
      for (int k = 0; k <= options_.max_halvings; ++k, t *= 0.5) {
        const Vector trial = w + t * dw;
        const double r = residual_norm(power_map(trial, m_), rhs);
        check_finite(r, iterations);
        if (r < res) {
          w = trial;
          res = r;
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    v = power_map(w, m_);
    return residual_norm(v, rhs);
  }

  // Each unknown solves its scalar monotone equation with the others frozen;
  // the update is under-relaxed.
  double jacobi_sweeps(Vector& v, const Vector& rhs, double scale) const {
    const Index n = v.size();
    double res = residual_norm(v, rhs);
    Vector next(n);
    for (int sweep = 0; sweep < options_.max_sweeps && res > options_.target_tolerance * scale; ++sweep) {
      const Vector Av = block_ * v;
      for (Index i = 0; i < n; ++i) {
        const double a = block_(i, i);
        const double b = rhs(i) - (Av(i) - a * v(i));
        next(i) = scalar_root(diag_(i), a, b);
      }
      v = (1.0 - options_.relaxation) * v + options_.relaxation * next;
      res = residual_norm(v, rhs);
      check_finite(res, sweep);
    }
    return res;
  }

  // Root of  d |x|^{1/m} sgn(x) + a x = b  (strictly increasing in x).
  double scalar_root(double d, double a, double b) const {
    auto phi = [&](double x) {
      return d * std::copysign(std::pow(std::abs(x), 1.0 / m_), x) + a * x - b;
    };
    double lo = -1.0, hi = 1.0;
    while (phi(lo) > 0.0) lo *= 2.0;
    while (phi(hi) < 0.0) hi *= 2.0;
    for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
      const double mid = 0.5 * (lo + hi);
      (phi(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  }

  double vol_;
  double m_;
  double dt_;
  double kappa_;
  Vector lambda_;
  Vector diag_;
  Matrix block_;
  StepOptions options_;
};

inline StepResult step_implicit(const OperatorPack& pack, const SimulationParameters& params, const Vector& w_k,
                                double dt, const Vector& f_next, double stiffness = 1.0) {
  const DomainLayout& L = pack.layout();
  const Vector lambda = L.restrict_to(pack.coefficients().lambda, L.mask_omega);
  return ImplicitStepper(pack, lambda, params.m, dt, stiffness).step(w_k, f_next);
}

enum class Variable { u, w, v };

struct SolverMeta {
  int steps = 0;
  double dt = 0.0;
  double stiffness = 1.0;
  long newton_iterations = 0;
  double max_residual = 0.0;
  int fallback_steps = 0;
};

/// Grid function sampled on a uniform time mesh; slices are full-grid vectors.
struct TimeSeriesField {
  std::vector<double> times;
  std::vector<Vector> slices;
  Variable variable = Variable::u;
  SolverMeta meta;
};

inline std::vector<double> uniform_mesh(double T, int n_steps) {
  std::vector<double> t(static_cast<std::size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) t[static_cast<std::size_t>(k)] = T * k / n_steps;
  t.back() = T;
  return t;
}

/// Called with the step index, time, and the full-grid u-slice.
using StepObserver = std::function<void(int, double, const Vector&)>;

/// Runs the initial-exterior problem for a time-independent datum and streams
/// every u-slice (t_0 included) to `observer`.
///
/// The solve uses the rescaled unknown u / h^{1/m}, which satisfies the same
/// problem with datum g0 and the operator multiplied by h^{1-1/m}.
inline SolverMeta integrate_ivp(const OperatorPack& pack, const SimulationParameters& params,
                                const ExteriorDatum& datum, int n_steps, const StepObserver& observer,
                                StepOptions options = {}) {
  const DomainLayout& L = pack.layout();
  check_datum_support(L, datum);
  if (n_steps < 1) throw ConfigError("n_steps must be positive");
  const double m = params.m;
  const double kappa = std::pow(datum.h, 1.0 - 1.0 / m);
  const double amp = std::pow(datum.h, 1.0 / m);
  const double dt = params.T / n_steps;
  const Vector lambda = L.restrict_to(pack.coefficients().lambda, L.mask_omega);
  const ImplicitStepper stepper(pack, lambda, m, dt, kappa, options);

  // f := -kappa (Ls g0)|_omega, the exterior datum moved to the right-hand side.
  const Vector f = -kappa * L.restrict_to(pack.apply(datum.g0), L.mask_omega);
  const Vector u_exterior = power_map(datum.v_exterior(), 1.0 / m);
  const std::vector<double> times = uniform_mesh(params.T, n_steps);

  auto emit = [&](int k, const Vector& w_scaled) {
    Vector u = u_exterior;
    for (std::size_t q = 0; q < L.mask_omega.size(); ++q)
      u(L.mask_omega[q]) = amp * w_scaled(static_cast<Index>(q));
    observer(k, times[static_cast<std::size_t>(k)], u);
  };

  SolverMeta meta;
  meta.dt = dt;
  meta.stiffness = kappa;
  Vector w = Vector::Zero(static_cast<Index>(L.mask_omega.size()));
  emit(0, w);
  for (int k = 1; k <= n_steps; ++k) {
    StepResult r = stepper.step(w, f);
    w = std::move(r.w);
    meta.newton_iterations += r.newton_iterations;
    meta.max_residual = std::max(meta.max_residual, r.residual);
    meta.fallback_steps += r.used_fallback ? 1 : 0;
    ++meta.steps;
    emit(k, w);
  }
  return meta;
}

/// Full solution history in the u-variable.
inline TimeSeriesField solve_ivp(const OperatorPack& pack, const SimulationParameters& params,
                                 const ExteriorDatum& datum, int n_steps, StepOptions options = {}) {
  if (n_steps < 8) throw ConfigError("solve_ivp needs at least 8 time steps");
  TimeSeriesField out;
  out.variable = Variable::u;
  out.meta = integrate_ivp(
      pack, params, datum, n_steps,
      [&](int, double t, const Vector& u) {
        out.times.push_back(t);
        out.slices.push_back(u);
      },
      options);
  return out;
}

/// Pointwise change of variable u -> v = u^m (or back).
inline TimeSeriesField to_variable(const TimeSeriesField& in, Variable target, double m) {
  if (in.variable == target) return in;
  TimeSeriesField out = in;
  out.variable = target;
  const double p = target == Variable::v ? m : 1.0 / m;
  if (!((in.variable == Variable::u && target == Variable::v) || (in.variable == Variable::v && target == Variable::u)))
    throw ConfigError("only u <-> v conversions are supported");
  for (auto& s : out.slices) s = power_map(s, p);
  return out;
}

enum class MapKind {
  u_form,  // g -> Ls(u^m)|_{W2}
  v_form,  // g~ -> Ls v|_{W2}
};

struct MeasurementRecord {
  ExteriorDatum datum;
  MapKind kind = MapKind::u_form;
  std::vector<double> times;
  std::vector<Vector> values;  // one vector on mask_w2 per time node
  SolverMeta meta;
};

/// (Ls v)|_{W2} for one full-grid v-slice, using only the W2 rows of Ls.
inline Vector dn_slice(const OperatorPack& pack, const Vector& v_full) {
  const auto& w2 = pack.layout().mask_w2;
  return pack.Ls()(w2, Eigen::all) * v_full;
}

inline MeasurementRecord nonlinear_dn_map(const OperatorPack& pack, const TimeSeriesField& solution, double m,
                                          const ExteriorDatum& datum) {
  if (solution.variable == Variable::w) throw ConfigError("DN map needs the u- or v-variable");
  MeasurementRecord rec;
  rec.datum = datum;
  rec.kind = solution.variable == Variable::u ? MapKind::u_form : MapKind::v_form;
  rec.times = solution.times;
  rec.meta = solution.meta;
  for (const auto& slice : solution.slices) {
    const Vector v = solution.variable == Variable::u ? power_map(slice, m) : slice;
    Vector val = dn_slice(pack, v);
    if (!val.allFinite()) throw NumericalError("non-finite DN measurement");
    rec.values.push_back(std::move(val));
  }
  return rec;
}

}  // namespace fpme
