#include "support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace fpme;

namespace {

const DomainLayout& layout_96() {
  static const DomainLayout L = build_layout(test::config_1d(96));
  return L;
}

}  // namespace

TEST(HeatKernel, SymmetricAndSubMarkov) {
  const OperatorPack P = test::reference_pack(layout_96());
  const double vol = layout_96().volume_element();
  for (double t : {1e-3, 1e-2, 0.1}) {
    const Matrix K = heat_kernel(P, t);
    EXPECT_LE(max_asymmetry(K), 1e-12);
    // Positivity up to rounding, and total mass at most one on a killed box.
    EXPECT_GT(K.minCoeff(), -1e-10 * K.maxCoeff());
    EXPECT_LE((K.rowwise().sum() * vol).maxCoeff(), 1.0 + 1e-10);
  }
}

TEST(HeatKernel, SemigroupProperty) {
  const OperatorPack P = test::reference_pack(layout_96());
  const double vol = layout_96().volume_element();
  const Matrix a = heat_kernel(P, 0.01), b = heat_kernel(P, 0.02), ab = heat_kernel(P, 0.03);
  EXPECT_LT((a * b * vol - ab).cwiseAbs().maxCoeff(), 1e-10 * ab.cwiseAbs().maxCoeff());
}

TEST(HeatKernel, RejectsNonPositiveTime) {
  const OperatorPack P = test::reference_pack(layout_96());
  EXPECT_THROW(heat_kernel(P, 0.0), ConfigError);
}

TEST(Quadrature, GaussLegendreIsExactForHighDegree) {
  const GaussLegendre g = gauss_legendre(6);
  double sum = 0.0;
  for (double w : g.weights) sum += w;
  EXPECT_NEAR(sum, 2.0, 1e-14);
  for (int deg = 0; deg <= 11; ++deg) {
    double q = 0.0;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) q += g.weights[i] * std::pow(g.nodes[i], deg);
    const double exact = deg % 2 == 1 ? 0.0 : 2.0 / (deg + 1);
    EXPECT_NEAR(q, exact, 1e-13) << "degree " << deg;
  }
}

TEST(Quadrature, ModeWeightsReproduceGammaTimesPower) {
  Vector lambda(4);
  lambda << 0.5, 3.0, 40.0, 2000.0;
  for (double s : {0.3, 0.5, 0.8}) {
    const Vector w = mode_weights(lambda, s, {});
    for (Index k = 0; k < lambda.size(); ++k) {
      const double exact = std::tgamma(-s) * std::pow(lambda(k), s);
      EXPECT_NEAR(w(k), exact, 1e-8 * std::abs(exact)) << "s = " << s << ", lambda = " << lambda(k);
    }
  }
}

TEST(JumpKernel, SymmetricPositiveOffDiagonal) {
  const OperatorPack P = test::reference_pack(layout_96());
  const KernelMatrix K = jump_kernel(P);
  EXPECT_LE(max_asymmetry(K.values), 1e-12);
  EXPECT_FALSE(K.quadrature_flagged);
  for (Index i = 0; i < K.values.rows(); ++i) {
    EXPECT_EQ(K.values(i, i), 0.0);
    for (Index j = 0; j < K.values.cols(); ++j) {
      if (i != j) {
        EXPECT_GT(K.values(i, j), 0.0);
      }
    }
  }
}

TEST(JumpKernel, CalibrationMatchesAnalyticConstant) {
  const DomainLayout L = build_layout(test::config_1d(128));
  for (double s : {0.3, 0.5, 0.8}) {
    const OperatorPack P = test::reference_pack(L, s);
    const KernelMatrix K = jump_kernel(P);
    EXPECT_NEAR(K.calibration_constant, K.analytic_constant, 1e-6 * K.analytic_constant) << "s = " << s;
  }
}

TEST(JumpKernel, OffDiagonalEntriesAreMinusLsOverVolume) {
  const OperatorPack P = test::reference_pack(layout_96());
  const KernelMatrix K = jump_kernel(P);
  const double vol = layout_96().volume_element();
  const Matrix& A = P.Ls();
  double worst = 0.0;
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j)
      if (i != j) worst = std::max(worst, std::abs(K.values(i, j) + A(i, j) / vol));
  EXPECT_LT(worst, 1e-6 * K.values.maxCoeff());
}

TEST(JumpKernel, DisjointBilinearFormMatchesOperator) {
  const OperatorPack P = test::reference_pack(layout_96());
  const KernelMatrix K = jump_kernel(P);
  const double vol = layout_96().volume_element();
  const Vector u = FieldSpec::bump({-1.0}, 0.3, 1.0).sample(layout_96());
  const Vector v = FieldSpec::bump({1.5}, 0.3, 1.0).sample(layout_96());
  const double lhs = vol * u.dot(P.apply(v));
  EXPECT_NEAR(kernel_bilinear(K.values, u, v, vol), lhs, 1e-6 * std::abs(lhs));
}

TEST(JumpKernel, BandAroundPowerLawIsBounded) {
  const DomainLayout L = build_layout(test::config_1d(256));
  const OperatorPack P = test::reference_pack(L);
  const KernelMatrix K = jump_kernel(P);
  const KernelBand band = kernel_band(P, K, 10.0 * L.spacing, L.box_extent() / 4.0, L.box_extent() / 4.0);
  ASSERT_GT(band.pairs, 0);
  EXPECT_GT(band.lower, 0.0);
  EXPECT_LE(band.ratio(), 3.0);
}

TEST(GaussianSandwich, EnvelopeIsFinite) {
  const DomainLayout L = build_layout(test::config_1d(128));
  const OperatorPack P = test::reference_pack(L);
  const GaussianSandwich g = fit_gaussian_sandwich(P, {1e-3, 4e-3, 1.6e-2}, L.box_extent() / 4.0);
  EXPECT_TRUE(g.finite());
  EXPECT_LE(g.c1, g.c2);
}
