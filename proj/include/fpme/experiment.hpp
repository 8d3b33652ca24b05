#pragma once

// Configuration-driven stages of the command-line tool. Every stage writes into
// its own directory below the output root: CSV tables plus a manifest.json.

#include "fpme/checks.hpp"
#include "fpme/io.hpp"

#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>

namespace fpme {

struct RunOptions {
  std::filesystem::path out;
  int jobs = 1;
  bool strict = false;
};

struct StageResult {
  std::string stage;
  bool pass = true;
  std::vector<std::string> warnings;
  json results = json::object();
};

/// Exit status of a set of stages: 0 pass, 1 numerical failure (including
/// warnings under --strict).
inline int exit_status(const std::vector<StageResult>& stages, bool strict) {
  for (const auto& s : stages) {
    if (!s.pass) return 1;
    if (strict && !s.warnings.empty()) return 1;
  }
  return 0;
}

/// Runs `tasks` with at most `jobs` of them in flight; results keep task order.
template <class R>
std::vector<R> run_batched(const std::vector<std::function<R()>>& tasks, int jobs) {
  std::vector<R> out(tasks.size());
  std::size_t next = 0;
  while (next < tasks.size()) {
    std::vector<std::pair<std::size_t, std::future<R>>> batch;
    for (int j = 0; j < std::max(1, jobs) && next < tasks.size(); ++j, ++next)
      batch.emplace_back(next, std::async(jobs > 1 ? std::launch::async : std::launch::deferred, tasks[next]));
    for (auto& [slot, fut] : batch) out[slot] = fut.get();
  }
  return out;
}

/// Layout, coefficient fields and operators built once per configuration.
class ExperimentContext {
 public:
  ExperimentContext(ExperimentConfig cfg, RunOptions opts) : cfg_(std::move(cfg)), opts_(std::move(opts)) {
    layout_ = build_layout(cfg_.layout);
    for (const auto& pair : cfg_.coefficients)
      coeffs_.push_back(make_coefficients(layout_, pair.gamma, pair.lambda));
    std::filesystem::create_directories(opts_.out);
    if (!cfg_.operator_cache.empty()) cache_dir_ = (opts_.out / cfg_.operator_cache).string();
    std::ofstream(opts_.out / "config.json") << cfg_.raw.dump(2) << '\n';
  }

  const ExperimentConfig& config() const { return cfg_; }
  const RunOptions& options() const { return opts_; }
  const DomainLayout& layout() const { return layout_; }

  const OperatorPack& pack(std::size_t pair) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = packs_.find(pair);
    if (it == packs_.end())
      it = packs_.emplace(pair, cached_operator(cache_dir_, layout_, coeffs_.at(pair), cfg_.params.s)).first;
    return it->second;
  }

  Vector datum_profile() const {
    return make_datum(layout_, cfg_.datum_shape, 1.0, 1).g0;
  }

  std::filesystem::path stage_dir(const std::string& name) const {
    auto d = opts_.out / name;
    std::filesystem::create_directories(d);
    return d;
  }

  /// Asymptotic samples of the reference pair over h_list, computed once.
  const std::vector<AsymptoticSample>& asymptotic_samples() {
    if (!samples_) {
      const OperatorPack& P = pack(0);
      const Vector g0 = datum_profile();
      const Vector V0 = solve_exterior(P, Vector::Zero(layout_.size()), g0).u;
      const Vector LsV0 = P.apply(V0);
      std::vector<std::function<AsymptoticSample()>> tasks;
      for (double h : cfg_.h_list)
        tasks.push_back([&, h] { return run_asymptotic_sample(P, cfg_.params, g0, LsV0, h, cfg_.asymptotic_n_steps); });
      samples_ = std::make_unique<std::vector<AsymptoticSample>>(run_batched(tasks, opts_.jobs));
    }
    return *samples_;
  }

 private:
  ExperimentConfig cfg_;
  RunOptions opts_;
  DomainLayout layout_;
  std::vector<CoefficientFields> coeffs_;
  std::map<std::size_t, OperatorPack> packs_;
  std::string cache_dir_;
  std::mutex mutex_;
  std::unique_ptr<std::vector<AsymptoticSample>> samples_;
};

namespace detail {

inline std::vector<std::string> coord_columns(const DomainLayout& L) {
  return L.dimension == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
}

inline std::string coord_text(const DomainLayout& L, Index i) {
  if (L.dimension == 1) return fmt::format("{:.17g}", L.coords(i, 0));
  return fmt::format("{:.17g},{:.17g}", L.coords(i, 0), L.coords(i, 1));
}

inline std::vector<std::string> columns(std::vector<std::string> head, const DomainLayout& L,
                                        std::vector<std::string> tail) {
  for (auto& c : coord_columns(L)) head.push_back(c);
  for (auto& c : tail) head.push_back(c);
  return head;
}

struct Check {
  std::string name;
  double value;
  double tolerance;
  bool hard;
  bool pass;
};

inline void write_checks(const std::filesystem::path& dir, const std::vector<Check>& checks) {
  CsvWriter csv(dir / "checks.csv", {"check", "value", "tolerance", "hard", "pass"});
  for (const auto& c : checks)
    csv.row(c.name, c.value, c.tolerance, std::string(c.hard ? "1" : "0"), std::string(c.pass ? "1" : "0"));
}

inline void write_witnesses(const std::filesystem::path& path, const std::vector<EstimateWitness>& ws,
                            const std::vector<double>* horizons = nullptr, std::size_t per_horizon = 0) {
  std::vector<std::string> cols{"name", "empirical_constant", "sample_size", "worst_case_input", "vacuous"};
  if (horizons) cols.insert(cols.begin(), "T");
  CsvWriter csv(path, cols);
  for (std::size_t k = 0; k < ws.size(); ++k) {
    const auto& w = ws[k];
    if (horizons)
      csv.row((*horizons)[k / per_horizon], w.name, w.empirical_constant, w.sample_size, w.worst_case_input,
              std::string(w.vacuous ? "1" : "0"));
    else
      csv.row(w.name, w.empirical_constant, w.sample_size, w.worst_case_input, std::string(w.vacuous ? "1" : "0"));
  }
}

inline bool geometric(const std::vector<double>& h) {
  if (h.size() < 2) return false;
  const double r = h[1] / h[0];
  if (!(r > 1.0)) return false;
  for (std::size_t k = 2; k < h.size(); ++k)
    if (std::abs(h[k] / h[k - 1] - r) > 1e-9 * r) return false;
  return true;
}

}  // namespace detail

/// Operator invariants for the reference pair: symmetry, positivity, kernel
/// laws, the gamma = 1 Fourier oracle, Gaussian bounds and the exterior-problem
/// stability witness.
inline StageResult cmd_verify_operator(ExperimentContext& ctx) {
  const auto& cfg = ctx.config();
  const DomainLayout& L = ctx.layout();
  const OperatorPack& P = ctx.pack(0);
  const auto dir = ctx.stage_dir("verify-operator");
  StageResult r;
  r.stage = "verify-operator";
  std::vector<detail::Check> checks;
  auto add = [&](std::string name, double value, double tol, bool ok, bool hard = true) {
    checks.push_back({std::move(name), value, tol, hard, ok});
    if (!ok && hard) r.pass = false;
    if (!ok && !hard) r.warnings.push_back(checks.back().name + " outside tolerance");
  };

  add("Ls_symmetry", max_asymmetry(P.Ls()), 1e-12, max_asymmetry(P.Ls()) <= 1e-12);
  add("L_min_eigenvalue", P.eigenvalues()(0), 0.0, P.eigenvalues()(0) > 0.0);

  const KernelMatrix K = jump_kernel(P);
  add("kernel_symmetry", max_asymmetry(K.values), 1e-12, max_asymmetry(K.values) <= 1e-12);
  add("kernel_quadrature_error", K.quadrature_error_estimate, 1e-8, !K.quadrature_flagged, false);
  const double quarter = 0.25 * L.box_extent();
  // On coarse grids ten spacings can exceed a quarter of the box; the window
  // then starts at two spacings.
  double min_sep = 10.0 * L.spacing;
  if (min_sep >= quarter) {
    min_sep = 2.0 * L.spacing;
    r.warnings.push_back("kernel band window starts at 2 spacings on this coarse grid");
  }
  const KernelBand band = kernel_band(P, K, min_sep, quarter, quarter);
  add("kernel_band_ratio", band.ratio(), 3.0, band.pairs > 0 && band.ratio() <= 3.0);
  add("kernel_calibration_constant", K.calibration_constant, K.analytic_constant, true, false);
  add("kernel_bilinear_residual", K.bilinear_residual, 0.0, true, false);

  if (L.dimension == 1) {
    const auto& o = cfg.layout.omega[0];
    const FieldSpec bump = FieldSpec::bump({0.5 * (o.lo + o.hi)}, 0.5 * o.length(), 1.0);
    const FidelityResult fid = operator_fidelity(L, cfg.params.s, bump);
    add("fidelity_omega_lattice", fid.omega_lattice, 0.02, fid.omega_lattice <= 0.02);
    add("fidelity_box_lattice", fid.box_lattice, 0.0, true, false);
    add("fidelity_box_continuum", fid.box_continuum, 0.0, true, false);
  }

  const GaussianSandwich gs = fit_gaussian_sandwich(P, {0.01, 0.03, 0.1, 0.3, 1.0}, quarter);
  add("gaussian_sandwich_finite", gs.finite() ? 1.0 : 0.0, 1.0, gs.finite());
  add("gaussian_c1", gs.c1, 0.0, true, false);
  add("gaussian_c1_rate", gs.c1_rate, 0.0, true, false);
  add("gaussian_c2", gs.c2, 0.0, true, false);
  add("gaussian_c2_rate", gs.c2_rate, 0.0, true, false);

  double res = 0.0;
  const EstimateWitness stab = elliptic_stability_witness(P, 100, cfg.seed, &res);
  add("exterior_problem_residual", res, 1e-10, res <= 1e-10);
  add("exterior_problem_stability", stab.empirical_constant, 0.0, std::isfinite(stab.empirical_constant));

  detail::write_checks(dir, checks);
  detail::write_witnesses(dir / "witnesses.csv", {stab});
  for (const auto& c : checks) r.results[c.name] = c.value;
  write_manifest(dir, r.stage, cfg,
                 {{"Ls_symmetry", 1e-12}, {"kernel_symmetry", 1e-12}, {"kernel_band_ratio", 3.0},
                  {"fidelity_omega_lattice", 0.02}, {"exterior_problem_residual", 1e-10},
                  {"kernel_quadrature_error", 1e-8}},
                 r.results, r.warnings, r.pass);
  return r;
}

/// Forward solve of the reference pair with the configured datum: solution and
/// DN measurement tables plus a time-refinement order estimate.
inline StageResult cmd_forward(ExperimentContext& ctx) {
  const auto& cfg = ctx.config();
  const DomainLayout& L = ctx.layout();
  const OperatorPack& P = ctx.pack(0);
  const auto dir = ctx.stage_dir("forward");
  StageResult r;
  r.stage = "forward";
  const json tol = {{"step_target", StepOptions{}.target_tolerance},
                    {"step_accept", StepOptions{}.accept_tolerance},
                    {"richardson_order", 1.0},
                    {"richardson_order_band", 0.15}};
  // A zero amplitude is run as the zero datum at h = 1.
  ExteriorDatum used = make_datum(L, cfg.datum_shape, cfg.amplitude > 0.0 ? cfg.amplitude : 1.0, 1);
  if (cfg.amplitude == 0.0) used.g0.setZero();

  try {
    std::vector<std::function<TimeSeriesField()>> tasks;
    for (int f : {1, 2, 4})
      tasks.push_back([&, f] { return solve_ivp(P, cfg.params, used, f * cfg.n_steps); });
    const auto sols = run_batched(tasks, ctx.options().jobs);
    const TimeSeriesField& sol = sols[0];
    const MeasurementRecord rec = nonlinear_dn_map(P, sol, cfg.params.m, used);

    {
      CsvWriter csv(dir / "solution.csv", detail::columns({"k", "t", "index"}, L, {"u"}));
      for (std::size_t k = 0; k < sol.times.size(); ++k)
        for (Index i : L.mask_omega)
          csv.row(static_cast<long>(k), sol.times[k], static_cast<long>(i), detail::coord_text(L, i), sol.slices[k](i));
    }
    {
      CsvWriter csv(dir / "measurement.csv", detail::columns({"k", "t", "index"}, L, {"Ls_um"}));
      for (std::size_t k = 0; k < rec.times.size(); ++k)
        for (std::size_t q = 0; q < L.mask_w2.size(); ++q)
          csv.row(static_cast<long>(k), rec.times[k], static_cast<long>(L.mask_w2[q]),
                  detail::coord_text(L, L.mask_w2[q]), rec.values[k](static_cast<Index>(q)));
    }

    const double e1 = L.weighted_norm(sols[0].slices.back() - sols[1].slices.back());
    const double e2 = L.weighted_norm(sols[1].slices.back() - sols[2].slices.back());
    const bool trivial = e1 == 0.0 && e2 == 0.0;
    const double order = trivial ? 0.0 : std::log2(e1 / e2);
    r.results["richardson_order"] = order;
    r.results["richardson_differences"] = {e1, e2};
    r.results["n_steps"] = cfg.n_steps;
    r.results["newton_iterations"] = sol.meta.newton_iterations;
    r.results["max_residual"] = sol.meta.max_residual;
    r.results["fallback_steps"] = sol.meta.fallback_steps;
    r.results["exterior_pinning_error"] = exterior_pinning_error(L, sol, used, cfg.params.m);
    if (!trivial && std::abs(order - 1.0) > 0.15)
      r.warnings.push_back(fmt::format("time-refinement order {:.3f} outside 1 +- 0.15", order));
    if (sol.meta.fallback_steps > 0)
      r.warnings.push_back(fmt::format("{} steps needed the Jacobi fallback", sol.meta.fallback_steps));
  } catch (const NumericalError& e) {
    r.pass = false;
    r.results["error"] = e.what();
  }
  write_manifest(dir, r.stage, cfg, tol, r.results, r.warnings, r.pass);
  return r;
}

/// Large-h pipeline over h_list, rate fit, exterior transform identity and
/// the estimate witnesses across horizons.
inline StageResult cmd_asymptotics(ExperimentContext& ctx) {
  const auto& cfg = ctx.config();
  const DomainLayout& L = ctx.layout();
  const OperatorPack& P = ctx.pack(0);
  const auto dir = ctx.stage_dir("asymptotics");
  StageResult r;
  r.stage = "asymptotics";
  if (cfg.h_list.size() < 4) throw ConfigError("params.h_list needs at least 4 values");
  if (!detail::geometric(cfg.h_list)) throw ConfigError("params.h_list must be an increasing geometric sequence");
  const double rate_tol = 0.15;
  const json tol = {{"rate_slope_band", rate_tol},
                    {"exterior_transform", 1e-6},
                    {"witness_stability", 0.2},
                    {"n_exponent_band", 0.2}};
  const Vector g0 = ctx.datum_profile();

  std::vector<AsymptoticSample> samples;
  try {
    samples = ctx.asymptotic_samples();
  } catch (const NumericalError& e) {
    r.pass = false;
    r.results["error"] = e.what();
    write_manifest(dir, r.stage, cfg, tol, r.results, r.warnings, r.pass);
    return r;
  }

  std::vector<double> errs;
  {
    CsvWriter csv(dir / "rates.csv", {"h", "error_homogeneous", "error_inhomogeneous", "newton_iterations",
                                      "max_residual", "fallback_steps"});
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      errs.push_back(s.error_homogeneous);
      csv.row(s.h, s.error_homogeneous, s.error_inhomogeneous, s.meta.newton_iterations, s.meta.max_residual,
              s.meta.fallback_steps);
      const auto jd = dir / fmt::format("h_{}", k);
      std::filesystem::create_directories(jd);
      const Vector tr = transform_record(s.record, cfg.params.alpha, cfg.params.T);
      CsvWriter tcsv(jd / "transformed_record.csv", detail::columns({"index"}, L, {"transformed"}));
      for (std::size_t q = 0; q < L.mask_w2.size(); ++q)
        tcsv.row(static_cast<long>(L.mask_w2[q]), detail::coord_text(L, L.mask_w2[q]), tr(static_cast<Index>(q)));
    }
  }
  const RateFit fit = rate_fit(cfg.h_list, errs);
  const double expected = 1.0 / cfg.params.m - 1.0;
  const bool rate_ok = std::abs(fit.slope - expected) <= rate_tol;
  if (!rate_ok) r.pass = false;
  if (!fit.warning.empty()) r.warnings.push_back(fit.warning);
  r.results["rate"] = {{"slope", fit.slope},     {"intercept", fit.intercept}, {"ci_low", fit.ci_low},
                       {"ci_high", fit.ci_high}, {"pair_slopes", fit.pair_slopes}, {"expected", expected},
                       {"pass", rate_ok}};

  // Exterior line of the transform at the forward-solve resolution.
  {
    const OperatorPack& Pk = P;
    const Vector V0 = solve_exterior(Pk, Vector::Zero(L.size()), g0).u;
    const double h = cfg.h_list.front();
    const AsymptoticSample s = run_asymptotic_sample(Pk, cfg.params, g0, Pk.apply(V0), h, cfg.n_steps);
    const double dev = exterior_transform_deviation(L, s.V, {g0, h, 1}, cfg.params);
    const TransformBundle b = decompose(Pk, s.V, s.M, s.N, {g0, h, 1}, cfg.params);
    r.results["exterior_transform_deviation"] = dev;
    r.results["moment_equation"] = {{"residual_minus", b.residual_minus},
                                    {"residual_plus", b.residual_plus},
                                    {"closing_sign", b.closing_sign}};
    if (dev > 1e-6) r.pass = false;
  }

  const EstimateStudy est = estimate_study(P, cfg.params, g0, cfg.estimate_h, cfg.horizons, cfg.asymptotic_n_steps);
  {
    std::vector<EstimateWitness> all;
    for (const auto& hw : est.horizons) all.insert(all.end(), hw.witnesses.begin(), hw.witnesses.end());
    detail::write_witnesses(dir / "estimates.csv", all, &cfg.horizons, est.horizons.front().witnesses.size());
    CsvWriter csv(dir / "smallness.csv", {"T", "C1", "hsv_constant", "lhs", "holds", "smallness_horizon"});
    for (const auto& hw : est.horizons)
      csv.row(hw.T, hw.smallness.C1, hw.smallness.hsv_constant, hw.smallness.lhs,
              std::string(hw.smallness.holds ? "1" : "0"), hw.smallness_horizon);
  }
  json spreads = json::object();
  for (const auto& [name, v] : est.spreads) spreads[name] = v;
  r.results["estimates"] = {{"stable", est.stable},
                            {"spreads", spreads},
                            {"n_exponent_fit", est.n_exponent_fit},
                            {"n_exponent_derived", est.n_exponent_derived},
                            {"n_exponent_printed", est.n_exponent_printed},
                            {"n_exponent_consistent", est.n_exponent_consistent}};
  if (!est.stable || !est.n_exponent_consistent) r.pass = false;

  write_manifest(dir, r.stage, cfg, tol, r.results, r.warnings, r.pass);
  return r;
}

/// Lambda recovery, DN distances across coefficient pairs, the reduction to
/// the linear DN map and the continuation diagnostic.
inline StageResult cmd_recover(ExperimentContext& ctx) {
  const auto& cfg = ctx.config();
  const DomainLayout& L = ctx.layout();
  const OperatorPack& P = ctx.pack(0);
  const auto dir = ctx.stage_dir("recover");
  StageResult r;
  r.stage = "recover";
  const json tol = {{"lambda_max_relative_error", 0.05},
                    {"recovery_threshold", cfg.recovery_threshold},
                    {"identical_pair_factor", 10.0},
                    {"distinct_pair_factor", 10.0},
                    {"reduction_relative_error", 0.05}};
  const double h = cfg.amplitude;
  if (!(h > 0.0)) throw ConfigError("recovery needs a positive datum.amplitude");

  // Lambda.
  try {
    const ExteriorDatum datum = make_datum(L, cfg.datum_shape, h, 1);
    const TimeSeriesField sol = solve_ivp(P, cfg.params, datum, cfg.n_steps);
    const Vector truth = ctx.pack(0).coefficients().lambda;
    const RecoveryReport rep = recover_lambda(P, sol, cfg.params, cfg.recovery_threshold, &truth);
    std::vector<char> valid(static_cast<std::size_t>(L.size()), 0);
    for (Index i : rep.valid_mask) valid[static_cast<std::size_t>(i)] = 1;
    CsvWriter csv(dir / "lambda.csv", detail::columns({"index"}, L, {"lambda_hat", "truth", "rel_error", "valid"}));
    for (Index i : L.mask_omega)
      csv.row(static_cast<long>(i), detail::coord_text(L, i), rep.lambda_hat(i), truth(i), rep.pointwise_error(i),
              std::string(valid[static_cast<std::size_t>(i)] ? "1" : "0"));
    r.results["lambda"] = {{"max_relative_error", rep.max_error},
                           {"valid_points", rep.valid_mask.size()},
                           {"omega_points", L.mask_omega.size()},
                           {"threshold", rep.threshold},
                           {"time_difference_bound", rep.time_difference_bound}};
    if (rep.max_error > 0.05) r.pass = false;
  } catch (const NumericalError& e) {
    r.pass = false;
    r.results["lambda"] = {{"error", e.what()}};
  }

  // DN distances: every pair against the reference, probe by probe. The
  // reference is solved twice independently for the identical-pair row.
  const auto probes = probe_battery(L);
  const std::size_t npairs = cfg.coefficients.size();
  for (std::size_t p = 0; p < npairs; ++p) ctx.pack(p);
  std::vector<std::function<MeasurementRecord()>> tasks;
  for (const auto& probe : probes)
    for (std::size_t p = 0; p <= npairs; ++p) {
      const std::size_t pair = p == npairs ? 0 : p;
      tasks.push_back([&, probe, pair] {
        const ExteriorDatum d = make_datum(L, probe, h, 1);
        const OperatorPack& Pp = ctx.pack(pair);
        return nonlinear_dn_map(Pp, solve_ivp(Pp, cfg.params, d, cfg.n_steps), cfg.params.m, d);
      });
    }
  const auto recs = run_batched(tasks, ctx.options().jobs);
  {
    CsvWriter csv(dir / "distances.csv", {"probe", "pair_a", "pair_b", "distance", "floor", "ratio"});
    const double vol = L.volume_element();
    std::vector<double> best(npairs, 0.0);
    double identical_worst = 0.0;
    for (std::size_t q = 0; q < probes.size(); ++q) {
      const MeasurementRecord& ref = recs[q * (npairs + 1) + npairs];
      for (std::size_t p = 0; p < npairs; ++p) {
        const MeasurementRecord& other = recs[q * (npairs + 1) + p];
        const double dist = dn_distance(ref, other, vol);
        const double floor = dn_floor(ref, other, vol);
        const double ratio = dist / floor;
        csv.row(static_cast<long>(q), cfg.coefficients[0].name, cfg.coefficients[p].name, dist, floor, ratio);
        if (p == 0)
          identical_worst = std::max(identical_worst, ratio);
        else
          best[p] = std::max(best[p], ratio);
      }
    }
    json pairs = json::object();
    bool distinct_ok = true;
    for (std::size_t p = 1; p < npairs; ++p) {
      pairs[cfg.coefficients[p].name] = best[p];
      if (best[p] < 10.0) distinct_ok = false;
    }
    r.results["dn_distance"] = {{"identical_worst_ratio", identical_worst},
                                {"distinct_best_ratio", pairs},
                                {"identical_ok", identical_worst <= 10.0},
                                {"distinct_ok", distinct_ok}};
    if (identical_worst > 10.0 || !distinct_ok) r.pass = false;
  }

  // Reduction of the nonlinear records to the linear DN map.
  try {
    const auto& samples = ctx.asymptotic_samples();
    const Vector g0 = ctx.datum_profile();
    const Vector direct = linear_dn_map(P, {g0, 1.0, 1});
    std::vector<double> errors;
    Reduction last;
    for (std::size_t k = 1; k < samples.size(); ++k) {
      std::vector<MeasurementRecord> recsk;
      for (std::size_t j = 0; j <= k; ++j) recsk.push_back(samples[j].record);
      last = reduce_to_linear_dn(recsk, cfg.params);
      errors.push_back(reduction_error(last.estimate, direct));
    }
    std::vector<double> unextrapolated;
    for (const auto& v : last.scaled) unextrapolated.push_back(reduction_error(v, direct));
    CsvWriter csv(dir / "reduction.csv", detail::columns({"index"}, L, {"reduced", "direct"}));
    for (std::size_t q = 0; q < L.mask_w2.size(); ++q)
      csv.row(static_cast<long>(L.mask_w2[q]), detail::coord_text(L, L.mask_w2[q]),
              last.estimate(static_cast<Index>(q)), direct(static_cast<Index>(q)));
    bool monotone = true;
    for (std::size_t k = 1; k < errors.size(); ++k) monotone = monotone && errors[k] < errors[k - 1];
    r.results["reduction"] = {{"relative_error_by_hmax", errors},
                              {"unextrapolated_relative_error", unextrapolated},
                              {"monotone", monotone},
                              {"pair_disagreement", last.pair_disagreement}};
    if (!last.warning.empty()) r.warnings.push_back(last.warning);
    if (errors.back() > 0.05 || !monotone) r.pass = false;
  } catch (const NumericalError& e) {
    r.pass = false;
    r.results["reduction"] = {{"error", e.what()}};
  }

  // Continuation diagnostic on nested observation sets inside W2.
  {
    std::vector<std::pair<std::string, std::vector<Index>>> masks;
    std::vector<Index> all(static_cast<std::size_t>(L.size()));
    for (Index i = 0; i < L.size(); ++i) all[static_cast<std::size_t>(i)] = i;
    masks.emplace_back("full_grid", all);
    std::vector<Index> w = L.mask_w2;
    for (int level = 0; level < 3 && !w.empty(); ++level) {
      masks.emplace_back(fmt::format("w2_part{}", level), w);
      w.resize(std::max<std::size_t>(1, w.size() / 2));
      if (masks.back().second.size() == 1) break;
    }
    CsvWriter csv(dir / "ucp.csv", {"mask", "points", "s", "subspace", "modes", "proxy", "amplification",
                                    "random_probe_min", "below_rounding", "full_space_proxy"});
    json diag = json::array();
    const OperatorPack local = P.with_power(1.0);
    for (const auto& [name, mask] : masks)
      for (const OperatorPack* op : {&P, &local})
        for (UcpSubspace sub : {UcpSubspace::omega_supported, UcpSubspace::band_limited}) {
          const UcpReport u = ucp_diagnostic(*op, mask, cfg.ucp_probes, cfg.seed, 4, sub);
          const std::string sname = sub == UcpSubspace::omega_supported ? "omega_supported" : "band_limited";
          csv.row(name, mask.size(), op->s(), sname, u.modes, u.proxy, u.amplification, u.random_probe_min,
                  std::string(u.below_rounding ? "1" : "0"), u.full_space_proxy);
          diag.push_back({{"mask", name}, {"s", op->s()}, {"subspace", sname}, {"proxy", u.proxy}});
        }
    r.results["ucp_diagnostic"] = diag;
  }

  write_manifest(dir, r.stage, cfg, tol, r.results, r.warnings, r.pass);
  return r;
}

inline std::vector<StageResult> cmd_all(ExperimentContext& ctx) {
  return {cmd_verify_operator(ctx), cmd_forward(ctx), cmd_asymptotics(ctx), cmd_recover(ctx)};
}

}  // namespace fpme
