#include "support.hpp"

#include <gtest/gtest.h>

using namespace fpme;

namespace {

const DomainLayout& layout_128() {
  static const DomainLayout L = build_layout(test::config_1d(128));
  return L;
}

SimulationParameters params() { return SimulationParameters::make(0.5, 2.0, 3.0, 1.0); }

MeasurementRecord measure(const OperatorPack& P, const ExteriorDatum& d, int K) {
  return nonlinear_dn_map(P, solve_ivp(P, params(), d, K), params().m, d);
}

std::vector<Index> centred_subset(const std::vector<Index>& W, double keep) {
  const std::size_t n = W.size(), k = std::max<std::size_t>(1, static_cast<std::size_t>(keep * n));
  const std::size_t start = (n - k) / 2;
  return {W.begin() + static_cast<long>(start), W.begin() + static_cast<long>(start + k)};
}

}  // namespace

TEST(Reduction, ZeroDatumGivesZero) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  std::vector<MeasurementRecord> recs;
  for (double h : {1.0, 10.0}) {
    const ExteriorDatum d{Vector::Zero(L.size()), h, 1};
    recs.push_back(measure(P, d, 16));
  }
  const Reduction r = reduce_to_linear_dn(recs, params());
  EXPECT_EQ(r.estimate.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Reduction, RecoversTheLinearDnMap) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  const SimulationParameters p = params();
  const Vector g0 = make_datum(L, test::datum_bump(), 1.0).g0;
  const Vector LsV0 = P.apply(solve_exterior(P, Vector::Zero(L.size()), g0).u);
  std::vector<MeasurementRecord> recs;
  // Descending on purpose: the reduction sorts by amplitude.
  for (double h : {1e5, 1e4, 1e3, 1e2}) recs.push_back(run_asymptotic_sample(P, p, g0, LsV0, h, 2048).record);
  const Reduction r = reduce_to_linear_dn(recs, p);
  EXPECT_EQ(r.h.front(), 1e2);
  const Vector direct = linear_dn_map(P, make_datum(L, test::datum_bump(), 1.0));
  EXPECT_LE(reduction_error(r.estimate, direct), 0.05);
  // Extrapolation beats the raw largest-amplitude quotient.
  EXPECT_LT(reduction_error(r.estimate, direct), reduction_error(r.scaled.back(), direct));
}

TEST(Reduction, RejectsMismatchedData) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  const MeasurementRecord a = measure(P, make_datum(L, test::datum_bump(), 1.0), 16);
  const MeasurementRecord b = measure(P, make_datum(L, FieldSpec::bump({-0.5}, 0.2, 1.0), 2.0), 16);
  EXPECT_THROW(reduce_to_linear_dn({a, b}, params()), ConfigError);
  EXPECT_THROW(reduce_to_linear_dn({a}, params()), ConfigError);
  EXPECT_THROW(reduce_to_linear_dn({a, a}, params()), ConfigError);
}

TEST(LambdaRecovery, ManufacturedAbsorptionIsRecovered) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  const ExteriorDatum d = make_datum(L, test::datum_bump(), 1.0);
  const TimeSeriesField u = solve_ivp(P, params(), d, 256);
  const Vector truth = P.coefficients().lambda;
  const RecoveryReport r = recover_lambda(P, u, params(), 1e-3, &truth);
  EXPECT_EQ(r.valid_mask.size(), L.mask_omega.size());
  EXPECT_LE(r.max_error, 0.05);
  // Deterministic: a second run is bit-identical.
  const RecoveryReport again = recover_lambda(P, solve_ivp(P, params(), d, 256), params(), 1e-3, &truth);
  EXPECT_EQ((again.lambda_hat - r.lambda_hat).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LambdaRecovery, ZeroAbsorptionWithinTheDifferenceBound) {
  const DomainLayout& L = layout_128();
  const OperatorPack P(L, make_coefficients(L, test::gamma_bump(), FieldSpec::constant(0.0)), 0.5);
  const TimeSeriesField u = solve_ivp(P, params(), make_datum(L, test::datum_bump(), 1.0), 256);
  const RecoveryReport r = recover_lambda(P, u, params());
  for (Index i : r.valid_mask) EXPECT_LE(std::abs(r.lambda_hat(i)), r.time_difference_bound + 1e-8);
}

TEST(LambdaRecovery, EmptyValidSetIsAnError) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  const TimeSeriesField u = solve_ivp(P, params(), make_datum(L, test::datum_bump(), 1.0), 16);
  EXPECT_THROW(recover_lambda(P, u, params(), 2.0), NumericalError);
  EXPECT_THROW(recover_lambda(P, to_variable(u, Variable::v, 2.0), params()), ConfigError);
}

TEST(DnDistance, MetricProperties) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  const OperatorPack Q(L, make_coefficients(L, FieldSpec::bump({0.5}, 0.4, 0.8, 1.0), test::lambda_quadratic()), 0.5);
  const ExteriorDatum d = make_datum(L, test::datum_bump(), 1.0);
  const MeasurementRecord a = measure(P, d, 32), b = measure(Q, d, 32);
  const double vol = L.volume_element();
  EXPECT_EQ(dn_distance(a, a, vol), 0.0);
  EXPECT_EQ(dn_distance(a, b, vol), dn_distance(b, a, vol));
  EXPECT_GT(dn_distance(a, b, vol), 10.0 * dn_floor(a, b, vol));
  EXPECT_LE(dn_distance(a, b, vol), record_norm(a, vol) + record_norm(b, vol));

  EXPECT_THROW(dn_distance(a, measure(P, d, 16), vol), ConfigError);
  EXPECT_THROW(dn_distance(a, measure(P, make_datum(L, test::datum_bump(), 2.0), 32), vol), ConfigError);
}

TEST(ProbeBattery, FiveDistinctBumpsInsideW1) {
  const DomainLayout& L = layout_128();
  const auto probes = probe_battery(L);
  ASSERT_EQ(probes.size(), 5u);
  std::vector<Vector> sampled;
  for (const auto& f : probes) {
    const ExteriorDatum d = make_datum(L, f, 1.0);
    EXPECT_NO_THROW(check_datum_support(L, d));
    EXPECT_GT(d.g0.norm(), 0.0);
    sampled.push_back(d.g0);
  }
  for (std::size_t a = 0; a < sampled.size(); ++a)
    for (std::size_t b = a + 1; b < sampled.size(); ++b) EXPECT_GT((sampled[a] - sampled[b]).norm(), 0.0);
}

TEST(UniqueContinuation, ProxyShrinksWithTheObservationSet) {
  const DomainLayout& L = layout_128();
  const OperatorPack P = test::reference_pack(L);
  double prev = std::numeric_limits<double>::infinity();
  for (double keep : {1.0, 0.5, 0.25}) {
    const UcpReport r = ucp_diagnostic(P, centred_subset(L.mask_w2, keep), 16, 3);
    EXPECT_GT(r.proxy, 0.0);
    EXPECT_LT(r.proxy, prev);
    EXPECT_GE(r.random_probe_min, r.proxy * (1.0 - 1e-9));
    EXPECT_EQ(r.full_space_proxy, 0.0);
    prev = r.proxy;
  }
}

TEST(UniqueContinuation, LocalOperatorSeesNothing) {
  // For s = 1 the operator is local, so functions supported in omega are
  // invisible on a set W away from omega.
  const DomainLayout& L = layout_128();
  const UcpReport local = ucp_diagnostic(test::reference_pack(L, 1.0), L.mask_w2, 8, 1);
  const UcpReport fractional = ucp_diagnostic(test::reference_pack(L, 0.5), L.mask_w2, 8, 1);
  EXPECT_EQ(local.proxy, 0.0);
  EXPECT_GT(fractional.proxy, 0.0);
}
