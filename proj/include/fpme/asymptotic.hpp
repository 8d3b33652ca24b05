#pragma once

#include "fpme/elliptic.hpp"
#include "fpme/pme.hpp"
#include "fpme/sobolev.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <string>
#include <vector>

namespace fpme {

/// Node weights of  int_0^T (T - t)^beta f(t) dt  for f piecewise linear on
/// `times`: the weight is integrated exactly on every subinterval, so the rule
/// stays accurate for beta in (-1, 0) where (T - t)^beta is singular at T.
inline std::vector<double> product_trapezoid_weights(const std::vector<double>& times, double T, double beta) {
  if (!(beta > -1.0)) throw ConfigError("weight exponent must exceed -1");
  std::vector<double> w(times.size(), 0.0);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double d = times[k + 1] - times[k];
    const double a = T - times[k];
    double b = std::max(T - times[k + 1], 0.0);
    // A last node a rounding error short of T would leave b^{beta+1} ~ sqrt(eps) for beta = -1/2.
    if (b <= 4.0 * std::numeric_limits<double>::epsilon() * T) b = 0.0;
    const double i1 = (std::pow(a, beta + 1.0) - std::pow(b, beta + 1.0)) / (beta + 1.0);
    const double i2 = (std::pow(a, beta + 2.0) - std::pow(b, beta + 2.0)) / (beta + 2.0);
    w[k] += (i2 - b * i1) / d;
    w[k + 1] += (a * i1 - i2) / d;
  }
  return w;
}

/// V(x) = int_0^T (T - t)^alpha v(x, t) dt.
inline Vector time_integral_transform(const TimeSeriesField& series, double alpha, double T) {
  if (series.variable != Variable::v) throw ConfigError("time-integral transform expects the v-variable");
  if (series.slices.empty()) throw ConfigError("empty time series");
  if (std::abs(series.times.back() - T) > 1e-12 * T || series.times.front() != 0.0)
    throw ConfigError("time series must cover [0, T]");
  const auto w = product_trapezoid_weights(series.times, T, alpha);
  Vector V = Vector::Zero(series.slices.front().size());
  for (std::size_t k = 0; k < w.size(); ++k) V += w[k] * series.slices[k];
  return V;
}

/// Same transform for a DN record on W2.
inline Vector transform_record(const MeasurementRecord& rec, double alpha, double T) {
  const auto w = product_trapezoid_weights(rec.times, T, alpha);
  Vector out = Vector::Zero(rec.values.front().size());
  for (std::size_t k = 0; k < w.size(); ++k) out += w[k] * rec.values[k];
  return out;
}

struct Moments {
  Vector M;
  Vector N;
};

inline void require_alpha(const SimulationParameters& p) {
  if (!(p.alpha > p.m_conj - 1.0)) throw ConfigError("alpha must exceed m' - 1");
}

/// M = alpha int (T-t)^{alpha-1} v^{1/m} dt,  N = lambda int (T-t)^alpha v^{1/m} dt.
inline Moments moment_fields(const TimeSeriesField& series, const Vector& lambda, const SimulationParameters& p) {
  require_alpha(p);
  if (series.variable != Variable::v) throw ConfigError("moment fields expect the v-variable");
  const auto wa = product_trapezoid_weights(series.times, p.T, p.alpha);
  const auto wm = product_trapezoid_weights(series.times, p.T, p.alpha - 1.0);
  const Index n = series.slices.front().size();
  Vector ia = Vector::Zero(n), im = Vector::Zero(n);
  for (std::size_t k = 0; k < series.slices.size(); ++k) {
    const Vector u = power_map(series.slices[k], 1.0 / p.m);
    ia += wa[k] * u;
    im += wm[k] * u;
  }
  return {p.alpha * im, (lambda.array() * ia.array()).matrix()};
}

/// Streaming version of the transform and both moments, fed one u-slice at a
/// time so long time meshes need not be stored.
class TransformAccumulator {
 public:
  TransformAccumulator(const std::vector<double>& times, const SimulationParameters& p, Vector lambda)
      : p_(p),
        wa_(product_trapezoid_weights(times, p.T, p.alpha)),
        wm_(product_trapezoid_weights(times, p.T, p.alpha - 1.0)),
        lambda_(std::move(lambda)) {
    require_alpha(p);
    const Index n = lambda_.size();
    V_ = Vector::Zero(n);
    Vabs_ = Vector::Zero(n);
    ia_ = Vector::Zero(n);
    im_ = Vector::Zero(n);
  }

  void add(int k, const Vector& u) {
    const auto kk = static_cast<std::size_t>(k);
    const Vector v = power_map(u, p_.m);
    V_ += wa_[kk] * v;
    Vabs_ += wa_[kk] * v.cwiseAbs();
    ia_ += wa_[kk] * u;
    im_ += wm_[kk] * u;
    if ((v.array() < 0.0).any()) sign_changing_ = true;
  }

  const Vector& V() const { return V_; }
  const Vector& V_abs() const { return Vabs_; }
  Vector M() const { return p_.alpha * im_; }
  Vector N() const { return (lambda_.array() * ia_.array()).matrix(); }
  bool sign_changing() const { return sign_changing_; }

 private:
  SimulationParameters p_;
  std::vector<double> wa_, wm_;
  Vector lambda_;
  Vector V_, Vabs_, ia_, im_;
  bool sign_changing_ = false;
};

struct TransformBundle {
  Vector V, M, N, V0, R;
  Vector V_abs;  // int (T-t)^alpha |v| dt, used when v changes sign
  bool sign_changing = false;
  double C_alpha = 0.0;
  double h = 1.0;
  double alpha = 0.0;
  double T = 0.0;
  double exterior_deviation = 0.0;      // max |R| on the exterior, relative to max |C T^{1+a} h g0|
  double residual_minus = 0.0;          // |(Ls R)|_o + (M+N)| / |M+N|
  double residual_plus = 0.0;           // |(Ls R)|_o - (M+N)| / |M+N|
  int closing_sign = -1;                // sign s with (Ls R)|_o ~ s (M+N)
  bool exterior_consistent = true;
};

/// Splits V^(h) = C_alpha T^{1+alpha} h V0 + R and checks both sign conventions
/// of the interior equation for R.
inline TransformBundle decompose(const OperatorPack& pack, const Vector& V, const Vector& M, const Vector& N,
                                 const ExteriorDatum& datum, const SimulationParameters& p,
                                 double exterior_tolerance = 1e-8) {
  const DomainLayout& L = pack.layout();
  TransformBundle b;
  b.V = V;
  b.M = M;
  b.N = N;
  b.h = datum.h;
  b.alpha = p.alpha;
  b.T = p.T;
  b.C_alpha = p.c_alpha();
  b.V0 = solve_exterior(pack, Vector::Zero(L.size()), datum.g0).u;
  const double lead = b.C_alpha * std::pow(p.T, 1.0 + p.alpha) * datum.h;
  b.R = V - lead * b.V0;

  const double ext_scale = lead * datum.g0.cwiseAbs().maxCoeff();
  double ext_dev = 0.0;
  for (Index i : L.mask_exterior) ext_dev = std::max(ext_dev, std::abs(b.R(i)));
  b.exterior_deviation = ext_scale > 0.0 ? ext_dev / ext_scale : ext_dev;
  b.exterior_consistent = b.exterior_deviation <= exterior_tolerance;

  const Vector LsR = L.restrict_to(pack.apply(b.R), L.mask_omega);
  const Vector MN = L.restrict_to(M + N, L.mask_omega);
  const double denom = MN.norm();
  if (denom > 0.0) {
    b.residual_minus = (LsR + MN).norm() / denom;
    b.residual_plus = (LsR - MN).norm() / denom;
  }
  b.closing_sign = b.residual_minus <= b.residual_plus ? -1 : +1;
  return b;
}

/// Relative deviation of V from C_alpha T^{1+alpha} h g0 on the exterior.
inline double exterior_transform_deviation(const DomainLayout& L, const Vector& V, const ExteriorDatum& datum,
                                           const SimulationParameters& p) {
  const double lead = p.c_alpha() * std::pow(p.T, 1.0 + p.alpha) * datum.h;
  const double scale = lead * datum.g0.cwiseAbs().maxCoeff();
  double dev = 0.0;
  for (Index i : L.mask_exterior) dev = std::max(dev, std::abs(V(i) - lead * datum.g0(i)));
  return scale > 0.0 ? dev / scale : dev;
}

namespace detail {

inline double omega_l2(const DomainLayout& L, const Vector& f) {
  return L.weighted_norm(L.restrict_to(f, L.mask_omega));
}

}  // namespace detail

/// Empirical constants of the pointwise and L2 bounds on M and N in terms of V.
///
/// N-bounds are evaluated with the exponent (alpha+1)/m' obtained from the
/// Hölder step and, for comparison, with the printed alpha + m'.
inline std::vector<EstimateWitness> verify_pointwise_estimates(const DomainLayout& L, const TransformBundle& b,
                                                               const Vector& lambda, const SimulationParameters& p) {
  const double m = p.m, mc = p.m_conj, a = p.alpha, T = b.T;
  const double tM = std::pow(T, a / mc - 1.0 / m);
  const double tN_derived = std::pow(T, (a + 1.0) / mc);
  const double tN_printed = std::pow(T, a + mc);
  const Vector& Vref = b.sign_changing ? b.V_abs : b.V;
  const std::string tag = b.sign_changing ? " (|v|-majorized)" : "";

  auto pointwise = [&](const std::string& name, const Vector& num, double tpow, bool with_lambda) {
    EstimateWitness w;
    w.name = name + tag;
    for (Index i : L.mask_omega) {
      const double den = tpow * std::pow(std::abs(Vref(i)), 1.0 / m) * (with_lambda ? std::abs(lambda(i)) : 1.0);
      if (den == 0.0) continue;
      ++w.sample_size;
      const double ratio = std::abs(num(i)) / den;
      if (ratio > w.empirical_constant) {
        w.empirical_constant = ratio;
        w.worst_case_input = "x=" + std::to_string(L.coords(i, 0));
      }
    }
    w.vacuous = w.sample_size == 0;
    return w;
  };
  auto l2 = [&](const std::string& name, const Vector& num, double tpow) {
    EstimateWitness w;
    w.name = name + tag;
    const double den = tpow * std::pow(detail::omega_l2(L, Vref), 1.0 / m);
    w.sample_size = 1;
    w.vacuous = den == 0.0;
    w.empirical_constant = w.vacuous ? 0.0 : detail::omega_l2(L, num) / den;
    w.worst_case_input = "omega";
    return w;
  };

  return {pointwise("M_pointwise", b.M, tM, false),
          pointwise("N_pointwise_derived", b.N, tN_derived, true),
          pointwise("N_pointwise_printed", b.N, tN_printed, true),
          l2("M_L2", b.M, tM),
          l2("N_L2_derived", b.N, tN_derived),
          l2("N_L2_printed", b.N, tN_printed)};
}

struct AsymptoticSample {
  double h = 0.0;
  Vector V, M, N, V_abs;
  bool sign_changing = false;
  MeasurementRecord record;  // Ls v on W2 over time
  SolverMeta meta;
  double error_homogeneous = 0.0;    // weight lambda^{-s}
  double error_inhomogeneous = 0.0;  // weight (1+lambda)^{-s}
};

/// One amplitude of the large-h pipeline: forward solve in the rescaled
/// variable, streaming transform, W2 record and the H^{-s} error of
/// h^{-1} Ls V^(h) - C_alpha T^{1+alpha} Ls V0.
inline AsymptoticSample run_asymptotic_sample(const OperatorPack& pack, const SimulationParameters& p,
                                              const Vector& g0, const Vector& LsV0, double h, int n_steps,
                                              StepOptions options = {}) {
  ExteriorDatum datum{g0, h, 1};
  const auto times = uniform_mesh(p.T, n_steps);
  TransformAccumulator acc(times, p, pack.coefficients().lambda);
  AsymptoticSample out;
  out.h = h;
  out.record.datum = datum;
  out.record.kind = MapKind::v_form;
  out.record.times = times;
  out.record.values.reserve(times.size());
  out.meta = integrate_ivp(
      pack, p, datum, n_steps,
      [&](int k, double, const Vector& u) {
        acc.add(k, u);
        out.record.values.push_back(dn_slice(pack, power_map(u, p.m)));
      },
      options);
  out.record.meta = out.meta;
  out.V = acc.V();
  out.M = acc.M();
  out.N = acc.N();
  out.V_abs = acc.V_abs();
  out.sign_changing = acc.sign_changing();
  const Vector diff = pack.apply(out.V) / h - p.c_alpha() * std::pow(p.T, 1.0 + p.alpha) * LsV0;
  out.error_homogeneous = sobolev_norm(pack, -pack.s(), diff, NormWeight::homogeneous);
  out.error_inhomogeneous = sobolev_norm(pack, -pack.s(), diff, NormWeight::inhomogeneous);
  return out;
}

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> pair_slopes;
  bool monotone = true;
  std::string warning;
};

/// Least-squares slope of log(error) against log(h) with a 95% confidence
/// interval.
inline RateFit rate_fit(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size()) throw ConfigError("rate_fit needs one error per h");
  if (h.size() < 4) throw ConfigError("rate_fit needs at least 4 values of h");
  const auto [hmin, hmax] = std::minmax_element(h.begin(), h.end());
  if (std::log10(*hmax / *hmin) < 3.0 - 1e-12) throw ConfigError("h values must span at least 3 decades");
  for (double e : err)
    if (!(e > 0.0) || !std::isfinite(e)) throw NumericalError("rate_fit needs positive finite errors");

  const std::size_t n = h.size();
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::log(h[i]);
    y[i] = std::log(err[i]);
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  const boost::math::students_t dist(static_cast<double>(n - 2));
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  f.ci_low = f.slope - q * se;
  f.ci_high = f.slope + q * se;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    f.pair_slopes.push_back((y[i + 1] - y[i]) / (x[i + 1] - x[i]));
    if (err[i + 1] >= err[i]) f.monotone = false;
  }
  if (!f.monotone) f.warning = "error sequence is not monotonically decreasing in h";
  return f;
}

struct RateStudy {
  std::vector<AsymptoticSample> samples;
  RateFit fit;
  double expected_slope = 0.0;
  double tolerance = 0.15;
  bool pass = false;
};

/// Runs the pipeline for every h (concurrently when jobs > 1) and fits the rate.
inline RateStudy run_rate_study(const OperatorPack& pack, const SimulationParameters& p, const Vector& g0,
                                const std::vector<double>& h_list, int n_steps, int jobs = 1,
                                double tolerance = 0.15) {
  const DomainLayout& L = pack.layout();
  const Vector V0 = solve_exterior(pack, Vector::Zero(L.size()), g0).u;
  const Vector LsV0 = pack.apply(V0);
  RateStudy study;
  study.samples.resize(h_list.size());
  std::size_t next = 0;
  while (next < h_list.size()) {
    std::vector<std::future<AsymptoticSample>> batch;
    std::vector<std::size_t> slots;
    for (int j = 0; j < std::max(1, jobs) && next < h_list.size(); ++j, ++next) {
      const double h = h_list[next];
      slots.push_back(next);
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 [&, h] { return run_asymptotic_sample(pack, p, g0, LsV0, h, n_steps); }));
    }
    for (std::size_t j = 0; j < batch.size(); ++j) study.samples[slots[j]] = batch[j].get();
  }
  std::vector<double> errs;
  for (const auto& s : study.samples) errs.push_back(s.error_homogeneous);
  study.fit = rate_fit(h_list, errs);
  study.expected_slope = 1.0 / p.m - 1.0;
  study.tolerance = tolerance;
  study.pass = std::abs(study.fit.slope - study.expected_slope) <= tolerance;
  return study;
}

/// Empirical constants C1 of  |V|_{H^s} <= C1((T^a + T^b)|V|^{1/m} + T^{1+alpha} h |g0|)
/// and of  |V|_{H^s} <= C T^{1+alpha} h |g0|, with the smallness test
/// 1 - C1 (T^a + T^b) >= 1/2, a = alpha/m' - 1/m, b = alpha + m'.
struct SmallnessCheck {
  double C1 = 0.0;
  double hsv_constant = 0.0;
  double lhs = 0.0;  // 1 - C1 (T^a + T^b)
  bool holds = false;
};

inline SmallnessCheck smallness_check(const OperatorPack& pack, const Vector& V, const ExteriorDatum& datum,
                                      const SimulationParameters& p) {
  const double a = p.alpha / p.m_conj - 1.0 / p.m;
  const double b = p.alpha + p.m_conj;
  const double tt = std::pow(p.T, a) + std::pow(p.T, b);
  const double nV = sobolev_norm(pack, pack.s(), V);
  const double ng = sobolev_norm(pack, pack.s(), datum.g0);
  const double lead = std::pow(p.T, 1.0 + p.alpha) * datum.h * ng;
  SmallnessCheck c;
  c.C1 = nV / (tt * std::pow(nV, 1.0 / p.m) + lead);
  c.hsv_constant = lead > 0.0 ? nV / lead : 0.0;
  c.lhs = 1.0 - c.C1 * tt;
  c.holds = c.lhs >= 0.5;
  return c;
}

struct HorizonWitnesses {
  double T = 0.0;
  std::vector<EstimateWitness> witnesses;  // pointwise/L2 bounds, then C1 and HsV
  SmallnessCheck smallness;
  double smallness_horizon = 0.0;  // first T/2^k at which the smallness test holds
  double n_scaling = 0.0;          // max |N| / (|lambda| |V|^{1/m}) without any T factor
};

struct EstimateStudy {
  std::vector<HorizonWitnesses> horizons;
  std::vector<std::pair<std::string, double>> spreads;  // max |c_T / c_ref - 1|
  double n_exponent_fit = 0.0;
  double n_exponent_derived = 0.0;
  double n_exponent_printed = 0.0;
  double stability_tolerance = 0.2;
  bool stable = false;
  bool n_exponent_consistent = false;
};

/// Witnesses for every horizon in `horizons`; the middle horizon is the
/// reference for the stability spread.
inline EstimateStudy estimate_study(const OperatorPack& pack, const SimulationParameters& base, const Vector& g0,
                                    double h, const std::vector<double>& horizons, int n_steps,
                                    double stability_tolerance = 0.2, double exponent_tolerance = 0.2) {
  const DomainLayout& L = pack.layout();
  const Vector& lambda = pack.coefficients().lambda;
  const Vector V0 = solve_exterior(pack, Vector::Zero(L.size()), g0).u;
  const Vector LsV0 = pack.apply(V0);
  EstimateStudy study;
  study.stability_tolerance = stability_tolerance;
  for (double T : horizons) {
    const SimulationParameters p = base.with_horizon(T);
    const AsymptoticSample s = run_asymptotic_sample(pack, p, g0, LsV0, h, n_steps);
    TransformBundle b;
    b.V = s.V;
    b.M = s.M;
    b.N = s.N;
    b.V_abs = s.V_abs;
    b.sign_changing = s.sign_changing;
    b.T = T;
    b.alpha = p.alpha;
    b.h = h;
    HorizonWitnesses hw;
    hw.T = T;
    hw.witnesses = verify_pointwise_estimates(L, b, lambda, p);
    const ExteriorDatum datum{g0, h, 1};
    hw.smallness = smallness_check(pack, s.V, datum, p);
    hw.witnesses.push_back({"C1", hw.smallness.C1, 1, "H^s", false});
    hw.witnesses.push_back({"HsV", hw.smallness.hsv_constant, 1, "H^s", false});

    hw.smallness_horizon = T;
    if (!hw.smallness.holds) {
      // Shrink the horizon until the smallness condition is met.
      double Tk = T;
      for (int k = 0; k < 8; ++k) {
        Tk *= 0.5;
        const SimulationParameters pk = base.with_horizon(Tk);
        const AsymptoticSample sk = run_asymptotic_sample(pack, pk, g0, LsV0, h, n_steps);
        if (smallness_check(pack, sk.V, datum, pk).holds) break;
      }
      hw.smallness_horizon = Tk;
    }

    const Vector& Vref = s.sign_changing ? s.V_abs : s.V;
    for (Index i : L.mask_omega) {
      const double den = std::abs(lambda(i)) * std::pow(std::abs(Vref(i)), 1.0 / p.m);
      if (den > 0.0) hw.n_scaling = std::max(hw.n_scaling, std::abs(s.N(i)) / den);
    }
    study.horizons.push_back(std::move(hw));
  }

  const std::size_t ref = study.horizons.size() / 2;
  study.stable = true;
  for (std::size_t w = 0; w < study.horizons[ref].witnesses.size(); ++w) {
    const auto& name = study.horizons[ref].witnesses[w].name;
    // The printed-exponent N bounds are reported but are not expected to be T-stable.
    const bool tracked = name.find("printed") == std::string::npos;
    const double c_ref = study.horizons[ref].witnesses[w].empirical_constant;
    double spread = 0.0;
    bool finite = std::isfinite(c_ref);
    for (const auto& hw : study.horizons) {
      const double c = hw.witnesses[w].empirical_constant;
      finite = finite && std::isfinite(c);
      if (c_ref > 0.0) spread = std::max(spread, std::abs(c / c_ref - 1.0));
    }
    if (!finite) spread = std::numeric_limits<double>::infinity();
    study.spreads.emplace_back(name, spread);
    if (tracked && (spread > stability_tolerance || !finite)) study.stable = false;
  }

  std::vector<double> lx, ly;
  for (const auto& hw : study.horizons) {
    if (hw.n_scaling > 0.0) {
      lx.push_back(std::log(hw.T));
      ly.push_back(std::log(hw.n_scaling));
    }
  }
  if (lx.size() >= 2) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(lx.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    study.n_exponent_fit = sxy / sxx;
  }
  study.n_exponent_derived = (base.alpha + 1.0) / base.m_conj;
  study.n_exponent_printed = base.alpha + base.m_conj;
  study.n_exponent_consistent = std::abs(study.n_exponent_fit - study.n_exponent_derived) <= exponent_tolerance;
  return study;
}

}  // namespace fpme
