#pragma once

// Numerical checks shared by the command-line stages and the test suites.

#include "fpme/fourier_oracle.hpp"
#include "fpme/kernels.hpp"
#include "fpme/recovery.hpp"

#include <numbers>
#include <random>

namespace fpme {

struct FidelityResult {
  double omega_lattice = 0.0;   // relative l2 on omega against the lattice symbol
  double box_lattice = 0.0;     // same over all unknowns
  double box_continuum = 0.0;   // all unknowns, continuum symbol |xi|^{2s}
};

namespace detail {

inline double relative_on(const Vector& a, const Vector& b, const std::vector<Index>* mask) {
  double num = 0.0, den = 0.0;
  auto add = [&](Index i) {
    num += (a(i) - b(i)) * (a(i) - b(i));
    den += b(i) * b(i);
  };
  if (mask) {
    for (Index i : *mask) add(i);
  } else {
    for (Index i = 0; i < a.size(); ++i) add(i);
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace detail

/// gamma = 1 operator on `L` applied to `bump` against the periodic Fourier oracle.
inline FidelityResult operator_fidelity(const DomainLayout& L, double s, const FieldSpec& bump) {
  const OperatorPack pack(L, unit_coefficients(L), s);
  const Vector Lf = pack.apply(bump.sample(L));
  const Vector lat = fourier_fractional_laplacian(L, bump, s, 8, FourierSymbol::lattice);
  const Vector con = fourier_fractional_laplacian(L, bump, s, 8, FourierSymbol::continuum);
  return {detail::relative_on(Lf, lat, &L.mask_omega), detail::relative_on(Lf, lat, nullptr),
          detail::relative_on(Lf, con, nullptr)};
}

/// Same spacing, box widened by `factor` about the centre of omega.
inline LayoutConfig widened_box(const LayoutConfig& c, int factor) {
  LayoutConfig out = c;
  const double h = c.box[0].length() / (c.n_grid - 1);
  const long cells = static_cast<long>(c.n_grid - 1) * factor;
  for (std::size_t a = 0; a < c.box.size(); ++a) {
    const double mid = 0.5 * (c.omega[a].lo + c.omega[a].hi);
    out.box[a] = {mid - 0.5 * h * static_cast<double>(cells), mid + 0.5 * h * static_cast<double>(cells)};
  }
  out.n_grid = static_cast<int>(cells + 1);
  return out;
}

inline double max_asymmetry(const Matrix& A) {
  const double scale = std::max(A.cwiseAbs().maxCoeff(), 1e-300);
  return (A - A.transpose()).cwiseAbs().maxCoeff() / scale;
}

/// Empirical constant of  |u|_{H^s} <= C (|f|_{H^{-s}} + |g|_{H^s})  over random data.
inline EstimateWitness elliptic_stability_witness(const OperatorPack& pack, int samples, std::uint64_t seed,
                                                  double* max_residual = nullptr) {
  const DomainLayout& L = pack.layout();
  const ExteriorSolver solver(pack);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  EstimateWitness w;
  w.name = "exterior_problem_stability";
  double worst_res = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vector f = Vector::Zero(L.size()), g = Vector::Zero(L.size());
    // Smooth random data: a few random bumps in omega and in the exterior.
    for (int b = 0; b < 3; ++b) {
      std::vector<double> cf, cg;
      for (int a = 0; a < L.dimension; ++a) {
        const auto& o = L.config.omega[static_cast<std::size_t>(a)];
        const auto& w1 = L.config.w1[static_cast<std::size_t>(a)];
        std::uniform_real_distribution<double> uo(o.lo, o.hi), uw(w1.lo, w1.hi);
        cf.push_back(uo(rng));
        cg.push_back(uw(rng));
      }
      const double rf = 0.25 * L.config.omega[0].length(), rg = 0.5 * L.config.w1[0].length();
      f += FieldSpec::bump(cf, rf, normal(rng)).sample(L);
      g += FieldSpec::bump(cg, rg, normal(rng)).sample(L);
    }
    for (Index i : L.mask_exterior) f(i) = 0.0;
    for (Index i : L.mask_omega) g(i) = 0.0;
    const ExteriorSolution sol = solver.solve(f, g);
    worst_res = std::max(worst_res, sol.residual);
    const double den = sobolev_norm(pack, -pack.s(), f) + sobolev_norm(pack, pack.s(), g);
    if (den == 0.0) continue;
    ++w.sample_size;
    const double ratio = sobolev_norm(pack, pack.s(), sol.u) / den;
    if (ratio > w.empirical_constant) {
      w.empirical_constant = ratio;
      w.worst_case_input = "sample " + std::to_string(k);
    }
  }
  w.vacuous = w.sample_size == 0;
  if (max_residual) *max_residual = worst_res;
  return w;
}

struct OrderStudy {
  std::vector<int> steps;
  std::vector<double> errors;
  double order = 0.0;  // least-squares slope of -log2(error) in log2(K)
};

/// Backward Euler on omega with zero exterior and a forcing chosen so that
/// u*(x, t) = (1 + t) sin(pi t) phi(x) solves the semi-discrete equation exactly.
inline OrderStudy manufactured_temporal_order(const OperatorPack& pack, double m, double T,
                                              const std::vector<int>& steps) {
  const DomainLayout& L = pack.layout();
  const Vector lambda = L.restrict_to(pack.coefficients().lambda, L.mask_omega);
  Vector phi(static_cast<Index>(L.mask_omega.size()));
  for (std::size_t k = 0; k < L.mask_omega.size(); ++k) {
    double v = 1.0;
    for (int a = 0; a < L.dimension; ++a) {
      const auto& o = L.config.omega[static_cast<std::size_t>(a)];
      const double x = L.coords(L.mask_omega[k], a);
      v *= std::sin(std::numbers::pi * (x - o.lo) / o.length());
    }
    phi(static_cast<Index>(k)) = v;
  }
  auto exact = [&](double t) -> Vector { return (1.0 + t) * std::sin(std::numbers::pi * t) * phi; };
  auto dexact = [&](double t) -> Vector {
    return (std::sin(std::numbers::pi * t) + (1.0 + t) * std::numbers::pi * std::cos(std::numbers::pi * t)) * phi;
  };
  auto forcing = [&](double t) -> Vector {
    const Vector u = exact(t);
    return dexact(t) + pme_apply(pack, u, m) + (lambda.array() * u.array()).matrix();
  };

  OrderStudy out;
  for (int K : steps) {
    const double dt = T / K;
    const ImplicitStepper stepper(pack, lambda, m, dt);
    Vector w = exact(0.0);
    for (int k = 1; k <= K; ++k) w = stepper.step(w, forcing(k * dt)).w;
    out.steps.push_back(K);
    out.errors.push_back(L.weighted_norm(w - exact(T)));
  }
  const std::size_t n = steps.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log2(static_cast<double>(steps[i]));
    my += -std::log2(out.errors[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log2(static_cast<double>(steps[i])) - mx;
    sxx += x * x;
    sxy += x * (-std::log2(out.errors[i]) - my);
  }
  out.order = sxy / sxx;
  return out;
}

struct DissipationCheck {
  int trials = 0;
  long steps = 0;
  long violations = 0;
  double worst_increase = 0.0;  // largest E_k - E_{k-1} seen, relative to E_0
};

/// Energy of the zero-forcing, zero-exterior flow from random initial states
/// must not increase at any step.
inline DissipationCheck energy_dissipation(const OperatorPack& pack, double m, double T, int n_steps, int trials,
                                           std::uint64_t seed) {
  const DomainLayout& L = pack.layout();
  const Vector lambda = L.restrict_to(pack.coefficients().lambda, L.mask_omega);
  const Index n = lambda.size();
  const ImplicitStepper stepper(pack, lambda, m, T / n_steps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  DissipationCheck d;
  d.worst_increase = -std::numeric_limits<double>::infinity();
  const Vector zero = Vector::Zero(n);
  for (int t = 0; t < trials; ++t) {
    Vector w(n);
    for (Index i = 0; i < n; ++i) w(i) = normal(rng);
    double E = energy_functional(L, w, m);
    const double E0 = E;
    for (int k = 0; k < n_steps; ++k) {
      w = stepper.step(w, zero).w;
      const double En = energy_functional(L, w, m);
      d.worst_increase = std::max(d.worst_increase, (En - E) / E0);
      if (En > E) ++d.violations;
      E = En;
      ++d.steps;
    }
    ++d.trials;
  }
  return d;
}

/// Largest |u - (h g0)^{1/m}| on the exterior over all slices.
inline double exterior_pinning_error(const DomainLayout& L, const TimeSeriesField& sol, const ExteriorDatum& d,
                                     double m) {
  const Vector target = power_map(d.v_exterior(), 1.0 / m);
  double worst = 0.0;
  for (const auto& s : sol.slices)
    for (Index i : L.mask_exterior) worst = std::max(worst, std::abs(s(i) - target(i)));
  return worst;
}

/// Relative l2 error of a reduction estimate against the direct linear DN map.
inline double reduction_error(const Vector& estimate, const Vector& direct) {
  return (estimate - direct).norm() / std::max(direct.norm(), 1e-300);
}

}  // namespace fpme
