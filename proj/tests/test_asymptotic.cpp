#include "support.hpp"

#include <gtest/gtest.h>

using namespace fpme;

namespace {

double weighted_sum(const std::vector<double>& w, const std::vector<double>& f) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * f[k];
  return s;
}

std::vector<double> sampled(const std::vector<double>& t, double (*f)(double)) {
  std::vector<double> out;
  for (double x : t) out.push_back(f(x));
  return out;
}

}  // namespace

TEST(ProductTrapezoid, ExactOnPiecewiseLinearIntegrands) {
  const double T = 1.7;
  const auto t = uniform_mesh(T, 13);
  for (double a : {-0.5, 0.0, 1.0, 3.0}) {
    const auto w = product_trapezoid_weights(t, T, a);
    EXPECT_NEAR(weighted_sum(w, sampled(t, [](double) { return 1.0; })), std::pow(T, a + 1) / (a + 1), 1e-12);
    EXPECT_NEAR(weighted_sum(w, sampled(t, [](double x) { return x; })),
                std::pow(T, a + 2) / ((a + 1) * (a + 2)), 1e-12);
  }
  // Singular weight: int_0^T (T - t)^{-1/2} dt = 2 sqrt(T).
  EXPECT_NEAR(weighted_sum(product_trapezoid_weights(t, T, -0.5), std::vector<double>(t.size(), 1.0)),
              2.0 * std::sqrt(T), 1e-12);
  EXPECT_THROW(product_trapezoid_weights(t, T, -1.0), ConfigError);
}

TEST(Moments, ClosedFormsForConstantFields) {
  const DomainLayout L = build_layout(test::config_1d(20));
  const SimulationParameters p = SimulationParameters::make(0.5, 2.0, 2.0, 1.5);
  TimeSeriesField s;
  s.variable = Variable::v;
  s.times = uniform_mesh(p.T, 10);
  s.slices.assign(s.times.size(), Vector::Ones(L.size()));
  const Vector lambda = Vector::Constant(L.size(), 3.0);
  const Moments mo = moment_fields(s, lambda, p);
  // u = v^{1/m} = 1:  M = alpha int (T-t)^{alpha-1} = T^alpha,  N = lambda T^{1+alpha}/(1+alpha).
  EXPECT_NEAR(mo.M(0), p.T * p.T, 1e-12);
  EXPECT_NEAR(mo.N(0), 3.0 * std::pow(p.T, 3.0) / 3.0, 1e-12);
  EXPECT_NEAR(time_integral_transform(s, p.alpha, p.T)(4), std::pow(p.T, 3.0) / 3.0, 1e-12);
}

TEST(Moments, AlphaBelowThresholdIsRejected) {
  SimulationParameters p = SimulationParameters::make(0.5, 2.0, 3.0, 1.0);
  p.alpha = 0.5;
  EXPECT_THROW(require_alpha(p), ConfigError);
}

TEST(TransformAccumulator, MatchesBatchComputation) {
  const DomainLayout L = build_layout(test::config_1d(64));
  const OperatorPack P = test::reference_pack(L);
  const SimulationParameters p = SimulationParameters::make(0.5, 2.0, 3.0, 1.0);
  const ExteriorDatum d = make_datum(L, test::datum_bump(), 10.0);
  const TimeSeriesField u = solve_ivp(P, p, d, 32);
  TransformAccumulator acc(u.times, p, P.coefficients().lambda);
  for (std::size_t k = 0; k < u.slices.size(); ++k) acc.add(static_cast<int>(k), u.slices[k]);

  const TimeSeriesField v = to_variable(u, Variable::v, p.m);
  const Vector V = time_integral_transform(v, p.alpha, p.T);
  const Moments mo = moment_fields(v, P.coefficients().lambda, p);
  EXPECT_LT((acc.V() - V).norm(), 1e-12 * V.norm());
  EXPECT_LT((acc.M() - mo.M).norm(), 1e-12 * mo.M.norm());
  EXPECT_LT((acc.N() - mo.N).norm(), 1e-12 * mo.N.norm());
  EXPECT_FALSE(acc.sign_changing());
}

TEST(Decomposition, ExteriorPartIsExactAndInteriorEquationCloses) {
  const DomainLayout L = build_layout(test::config_1d(128));
  const OperatorPack P = test::reference_pack(L);
  const SimulationParameters p = SimulationParameters::make(0.5, 2.0, 3.0, 1.0);
  const ExteriorDatum d = make_datum(L, test::datum_bump(), 1e4);
  const int K = 1024;
  TransformAccumulator acc(uniform_mesh(p.T, K), p, P.coefficients().lambda);
  integrate_ivp(P, p, d, K, [&](int k, double, const Vector& u) { acc.add(k, u); });
  const TransformBundle b = decompose(P, acc.V(), acc.M(), acc.N(), d, p, 1e-6);
  EXPECT_LE(b.exterior_deviation, 1e-6);
  EXPECT_TRUE(b.exterior_consistent);
  EXPECT_EQ(b.closing_sign, -1);
  EXPECT_LE(b.residual_minus, 0.05);
  EXPECT_LE(exterior_transform_deviation(L, acc.V(), d, p), 1e-6);
}

TEST(RateFit, ExactOnSyntheticPowerLaw) {
  const std::vector<double> h{1e2, 1e3, 1e4, 1e5};
  std::vector<double> e;
  for (double x : h) e.push_back(3.0 * std::pow(x, -0.5));
  const RateFit f = rate_fit(h, e);
  EXPECT_NEAR(f.slope, -0.5, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-10);
  EXPECT_NEAR(f.ci_low, -0.5, 1e-8);
  EXPECT_NEAR(f.ci_high, -0.5, 1e-8);
  EXPECT_TRUE(f.monotone);
  for (double s : f.pair_slopes) EXPECT_NEAR(s, -0.5, 1e-12);
}

TEST(RateFit, FlagsNonMonotoneAndRejectsBadInput) {
  const std::vector<double> h{1e2, 1e3, 1e4, 1e5};
  const RateFit f = rate_fit(h, {1.0, 0.5, 0.6, 0.1});
  EXPECT_FALSE(f.monotone);
  EXPECT_FALSE(f.warning.empty());
  EXPECT_THROW(rate_fit({1e2, 1e3, 1e4}, {1.0, 0.5, 0.2}), ConfigError);
  EXPECT_THROW(rate_fit({1.0, 2.0, 4.0, 8.0}, {1.0, 0.5, 0.2, 0.1}), ConfigError);
  EXPECT_THROW(rate_fit(h, {1.0, 0.0, 0.2, 0.1}), NumericalError);
  EXPECT_THROW(rate_fit(h, {1.0, 0.5}), ConfigError);
}

TEST(RateStudy, ErrorDecaysNearTheExpectedRate) {
  const DomainLayout L = build_layout(test::config_1d(128));
  const OperatorPack P = test::reference_pack(L);
  const SimulationParameters p = SimulationParameters::make(0.5, 2.0, 3.0, 1.0);
  const Vector g0 = make_datum(L, test::datum_bump(), 1.0).g0;
  const RateStudy s = run_rate_study(P, p, g0, {1e2, 1e3, 1e4, 1e5}, 2048, 2);
  EXPECT_DOUBLE_EQ(s.expected_slope, -0.5);
  EXPECT_TRUE(s.fit.monotone);
  EXPECT_TRUE(s.pass) << "slope " << s.fit.slope;
}

TEST(Estimates, WitnessesAreFiniteAndNExponentMatches) {
  const DomainLayout L = build_layout(test::config_1d(96));
  const OperatorPack P = test::reference_pack(L);
  const SimulationParameters p = SimulationParameters::make(0.5, 2.0, 3.0, 1.0);
  const Vector g0 = make_datum(L, test::datum_bump(), 1.0).g0;
  const EstimateStudy st = estimate_study(P, p, g0, 1e4, {0.5, 1.0, 2.0}, 512);
  ASSERT_EQ(st.horizons.size(), 3u);
  for (const auto& hw : st.horizons)
    for (const auto& w : hw.witnesses) {
      EXPECT_TRUE(std::isfinite(w.empirical_constant)) << w.name;
      EXPECT_FALSE(w.vacuous) << w.name;
    }
  EXPECT_DOUBLE_EQ(st.n_exponent_derived, 2.0);
  EXPECT_TRUE(st.n_exponent_consistent) << "fit " << st.n_exponent_fit;
}
