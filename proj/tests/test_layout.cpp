#include "support.hpp"

#include <gtest/gtest.h>

using namespace fpme;

TEST(Layout, CountsOmegaPointsOnReferenceBox) {
  const DomainLayout L = build_layout(test::config_1d(512));
  EXPECT_EQ(L.size(), 510);
  EXPECT_DOUBLE_EQ(L.spacing, 5.0 / 511.0);
  // Grid node j sits at -2 + 5j/511, inside (0, 1) for j = 205..306; unknown k is node k + 1.
  EXPECT_EQ(L.mask_omega.size(), 102u);
  EXPECT_EQ(L.mask_omega.front(), 204);
  EXPECT_EQ(L.mask_omega.back(), 305);
  EXPECT_EQ(L.mask_omega.size() + L.mask_exterior.size(), static_cast<std::size_t>(L.size()));
}

TEST(Layout, MasksAreDisjointFromOmega) {
  const DomainLayout L = build_layout(test::config_1d(200));
  for (Index i : L.mask_w1) EXPECT_EQ(L.region[static_cast<std::size_t>(i)], Region::exterior);
  for (Index i : L.mask_w2) EXPECT_EQ(L.region[static_cast<std::size_t>(i)], Region::exterior);
  for (Index i : L.mask_w1) EXPECT_TRUE(L.coords(i, 0) > -0.75 && L.coords(i, 0) < -0.25);
}

TEST(Layout, TwoDimensionalNumberingIsRowMajor) {
  const DomainLayout L = build_layout(test::config_2d(16));
  const int ni = 14;
  EXPECT_EQ(L.size(), ni * ni);
  const double h = 3.0 / 15.0;
  for (int i : {0, 3, 13})
    for (int j : {0, 7, 13}) {
      const Index k = i * ni + j;
      EXPECT_NEAR(L.coords(k, 0), -1.0 + h * (i + 1), 1e-14);
      EXPECT_NEAR(L.coords(k, 1), -1.0 + h * (j + 1), 1e-14);
    }
  EXPECT_DOUBLE_EQ(L.volume_element(), h * h);
}

TEST(Layout, RejectsBadGeometry) {
  auto c = test::config_1d();
  c.omega = {{-2.0, 1.0}};
  EXPECT_THROW(build_layout(c), ConfigError);

  c = test::config_1d();
  c.w1 = {{0.5, 1.5}};
  EXPECT_THROW(build_layout(c), ConfigError);

  c = test::config_1d();
  c.n_grid = 4;
  EXPECT_THROW(build_layout(c), ConfigError);

  c = test::config_1d();
  c.dimension = 3;
  EXPECT_THROW(build_layout(c), ConfigError);

  c = test::config_2d();
  c.box[1] = {-1.0, 3.0};
  EXPECT_THROW(build_layout(c), ConfigError);

  c = test::config_1d(6);
  c.w2 = {{1.26, 1.27}};
  EXPECT_THROW(build_layout(c), ConfigError);
}

TEST(Layout, RestrictExtendRoundTrip) {
  const DomainLayout L = build_layout(test::config_1d(64));
  const Vector f = test::random_vector(L.size(), 3);
  const Vector part = L.restrict_to(f, L.mask_omega);
  const Vector back = L.extend_from(part, L.mask_omega);
  for (Index i : L.mask_omega) EXPECT_EQ(back(i), f(i));
  for (Index i : L.mask_exterior) EXPECT_EQ(back(i), 0.0);
}

TEST(Layout, InteriorIndicesRespectMargin) {
  const DomainLayout L = build_layout(test::config_1d(101));
  const auto idx = interior_indices(L, 0.999);
  ASSERT_FALSE(idx.empty());
  for (Index i : idx) EXPECT_GE(L.distance_to_boundary(i), 0.999);
  EXPECT_EQ(idx.size(), 61u);  // x in [-1, 2] on a 0.05 grid
}

TEST(Coefficients, BumpAndTableEvaluate) {
  const double x0 = 0.5;
  EXPECT_DOUBLE_EQ(test::gamma_bump().evaluate(std::span<const double>(&x0, 1)), 1.5);
  FieldSpec t;
  t.kind = FieldSpec::Kind::table;
  t.table = {{0.0, 1.0}, {1.0, 3.0}};
  const double xs[] = {-1.0, 0.25, 2.0};
  EXPECT_DOUBLE_EQ(t.evaluate(std::span<const double>(&xs[0], 1)), 1.0);
  EXPECT_DOUBLE_EQ(t.evaluate(std::span<const double>(&xs[1], 1)), 1.5);
  EXPECT_DOUBLE_EQ(t.evaluate(std::span<const double>(&xs[2], 1)), 3.0);
}

TEST(Coefficients, ValidationRejectsBadFields) {
  const DomainLayout L = build_layout(test::config_1d(64));
  EXPECT_THROW(make_coefficients(L, FieldSpec::constant(-1.0), FieldSpec::constant(0.0)), ConfigError);
  EXPECT_THROW(make_coefficients(L, FieldSpec::constant(2.0), FieldSpec::constant(0.0)), ConfigError);
  // Gamma bump that leaks outside omega.
  EXPECT_THROW(make_coefficients(L, FieldSpec::bump({0.5}, 1.0, 0.5, 1.0), FieldSpec::constant(0.0)), ConfigError);
  const CoefficientFields c = make_coefficients(L, test::gamma_bump(), test::lambda_quadratic());
  for (Index i : L.mask_exterior) EXPECT_EQ(c.lambda(i), 0.0);
}
