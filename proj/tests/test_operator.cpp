#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace fpme;

TEST(Stiffness, UnitGammaIsTheThreePointLaplacian) {
  const DomainLayout L = build_layout(test::config_1d(40));
  const Matrix A = assemble_stiffness(L, Vector::Ones(L.size()));
  const double ih2 = 1.0 / (L.spacing * L.spacing);
  for (Index i = 0; i < L.size(); ++i)
    for (Index j = 0; j < L.size(); ++j) {
      const double expected = i == j ? 2.0 * ih2 : (std::abs(i - j) == 1 ? -ih2 : 0.0);
      EXPECT_NEAR(A(i, j), expected, 1e-9 * ih2);
    }
}

TEST(Stiffness, UsesHarmonicMeansAtMidpoints) {
  const DomainLayout L = build_layout(test::config_1d(64));
  const CoefficientFields c = make_coefficients(L, test::gamma_bump(), FieldSpec::constant(0.0));
  const Matrix A = assemble_stiffness(L, c.gamma);
  const double ih2 = 1.0 / (L.spacing * L.spacing);
  for (Index i = 0; i + 1 < L.size(); ++i) {
    const double g0 = c.gamma(i), g1 = c.gamma(i + 1);
    EXPECT_NEAR(A(i, i + 1), -2.0 * g0 * g1 / (g0 + g1) * ih2, 1e-10 * ih2);
    EXPECT_EQ(A(i, i + 1), A(i + 1, i));
  }
  // Row sums vanish away from the box boundary.
  for (Index i = 1; i + 1 < L.size(); ++i) EXPECT_NEAR(A.row(i).sum(), 0.0, 1e-9 * ih2);
}

TEST(Stiffness, TwoDimensionalUnitGammaIsFivePoint) {
  const DomainLayout L = build_layout(test::config_2d(10));
  const Matrix A = assemble_stiffness(L, Vector::Ones(L.size()));
  const double ih2 = 1.0 / (L.spacing * L.spacing);
  const Index ni = 8, k = 3 * ni + 4;
  EXPECT_NEAR(A(k, k), 4.0 * ih2, 1e-9 * ih2);
  EXPECT_NEAR(A(k, k + 1), -ih2, 1e-9 * ih2);
  EXPECT_NEAR(A(k, k + ni), -ih2, 1e-9 * ih2);
  EXPECT_EQ(A(k, k + 2), 0.0);
}

TEST(OperatorPack, UnitGammaEigenvaluesMatchClosedForm) {
  const DomainLayout L = build_layout(test::config_1d(50));
  const OperatorPack P = test::unit_pack(L);
  const Index N = L.size();
  for (Index k = 1; k <= N; ++k) {
    const double exact = 4.0 / (L.spacing * L.spacing) *
                         std::pow(std::sin(k * std::numbers::pi / (2.0 * static_cast<double>(N + 1))), 2);
    EXPECT_NEAR(P.eigenvalues()(k - 1), exact, 1e-9 * exact);
  }
}

TEST(OperatorPack, EigenvectorsAreScaledByPowers) {
  const DomainLayout L = build_layout(test::config_1d(80));
  const OperatorPack P = test::reference_pack(L, 0.3);
  for (Index k : {Index(0), Index(5), L.size() - 1}) {
    const Vector q = P.eigenvectors().col(k);
    const Vector Lq = P.apply(q);
    EXPECT_LT((Lq - std::pow(P.eigenvalues()(k), 0.3) * q).norm(), 1e-10 * std::pow(P.eigenvalues()(k), 0.3));
  }
}

TEST(OperatorPack, PowerOneIsTheStiffnessMatrix) {
  const DomainLayout L = build_layout(test::config_1d(60));
  const OperatorPack P = test::reference_pack(L, 1.0);
  EXPECT_EQ((P.Ls() - P.L()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(&P.Ls(), &P.L());
}

TEST(OperatorPack, ContinuousInS) {
  const DomainLayout L = build_layout(test::config_1d(60));
  const OperatorPack P = test::reference_pack(L, 0.5);
  const double base = P.Ls().norm();
  double prev = std::numeric_limits<double>::infinity();
  for (double d : {1e-2, 1e-3, 1e-4}) {
    const double diff = (P.with_power(0.5 + d).Ls() - P.Ls()).norm() / base;
    EXPECT_LT(diff, prev);
    prev = diff;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(OperatorPack, SymmetricPositiveDefinite) {
  const DomainLayout L = build_layout(test::config_1d(90));
  const OperatorPack P = test::reference_pack(L, 0.7);
  EXPECT_LE(max_asymmetry(P.Ls()), 1e-14);
  EXPECT_GT(P.eigenvalues()(0), 0.0);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Vector u = test::random_vector(L.size(), seed);
    EXPECT_GT(u.dot(P.apply(u)), 0.0);
  }
}

TEST(OperatorPack, WithPowerSharesTheEigensystem) {
  const DomainLayout L = build_layout(test::config_1d(40));
  const OperatorPack P = test::reference_pack(L, 0.5);
  const OperatorPack Q = P.with_power(0.25);
  EXPECT_EQ(&P.eigenvectors(), &Q.eigenvectors());
  const Vector u = test::random_vector(L.size(), 9);
  EXPECT_LT((Q.apply(Q.apply(u)) - P.apply(u)).norm(), 1e-10 * P.apply(u).norm());
}

TEST(OperatorPack, NormalizationConstant) {
  const DomainLayout L = build_layout(test::config_1d(20));
  const OperatorPack P = test::unit_pack(L, 0.5);
  // Gamma(-1/2) = -2 sqrt(pi).
  EXPECT_NEAR(P.normalization_constant(), -1.0 / (2.0 * std::sqrt(std::numbers::pi)), 1e-14);
  EXPECT_THROW(P.with_power(0.0), ConfigError);
}

TEST(Sobolev, ParsevalAndPowerIdentities) {
  const DomainLayout L = build_layout(test::config_1d(100));
  const OperatorPack P = test::reference_pack(L, 0.5);
  const Vector u = test::random_vector(L.size(), 11);
  EXPECT_NEAR(sobolev_norm(P, 0.0, u), L.weighted_norm(u), 1e-12 * L.weighted_norm(u));
  const double hs2 = std::pow(sobolev_norm(P, 0.5, u, NormWeight::homogeneous), 2);
  EXPECT_NEAR(hs2, L.volume_element() * u.dot(P.apply(u)), 1e-10 * hs2);
  EXPECT_NEAR(sobolev_norm(P, -0.5, P.apply(u), NormWeight::homogeneous),
              sobolev_norm(P, 0.5, u, NormWeight::homogeneous), 1e-10 * std::sqrt(hs2));
  EXPECT_GT(sobolev_norm(P, 0.5, u), sobolev_norm(P, 0.5, u, NormWeight::homogeneous));
  EXPECT_THROW(sobolev_norm(P, 1.5, u), ConfigError);
}

TEST(FourierOracle, LocalCaseMatchesStencil) {
  // For s = 1 the lattice symbol is the three-point Laplacian itself.
  const DomainLayout L = build_layout(test::config_1d(128));
  const FieldSpec bump = FieldSpec::bump({0.5}, 0.5, 1.0);
  const OperatorPack P = test::unit_pack(L, 1.0);
  const Vector direct = P.apply(bump.sample(L));
  const Vector oracle = fourier_fractional_laplacian(L, bump, 1.0);
  EXPECT_LT((direct - oracle).norm(), 1e-9 * direct.norm());
}

TEST(FourierOracle, FractionalFidelityOnOmega) {
  const DomainLayout L = build_layout(test::config_1d(256));
  const FieldSpec bump = FieldSpec::bump({0.5}, 0.5, 1.0);
  for (double s : {0.3, 0.5, 0.8}) {
    const FidelityResult f = operator_fidelity(L, s, bump);
    EXPECT_LT(f.omega_lattice, 0.02) << "s = " << s;
  }
}

TEST(OperatorCache, RoundTripReproducesTheOperator) {
  const DomainLayout L = build_layout(test::config_1d(64));
  const OperatorPack P = test::reference_pack(L, 0.4);
  const auto dir = std::filesystem::temp_directory_path() / "fpme_cache_test";
  std::filesystem::remove_all(dir);
  save_operator_cache(dir, P);
  const auto hit = load_operator_cache(dir, L, P.coefficients(), 0.4);
  ASSERT_TRUE(hit.has_value());
  EXPECT_EQ((hit->Ls() - P.Ls()).cwiseAbs().maxCoeff(), 0.0);

  const CoefficientFields other = make_coefficients(L, FieldSpec::bump({0.5}, 0.4, 0.6, 1.0), FieldSpec::constant(0.0));
  EXPECT_FALSE(load_operator_cache(dir, L, other, 0.4).has_value());
  std::filesystem::remove_all(dir);
}
