#pragma once

#include "fpme/checks.hpp"
#include "fpme/io.hpp"

namespace fpme::test {

// Box [-2, 3], omega (0, 1), W1 (-0.75, -0.25), W2 (1.25, 1.75).
inline LayoutConfig config_1d(int n_grid = 128) {
  LayoutConfig c;
  c.dimension = 1;
  c.box = {{-2.0, 3.0}};
  c.n_grid = n_grid;
  c.omega = {{0.0, 1.0}};
  c.w1 = {{-0.75, -0.25}};
  c.w2 = {{1.25, 1.75}};
  return c;
}

inline LayoutConfig config_2d(int n_grid = 16) {
  LayoutConfig c;
  c.dimension = 2;
  c.box = {{-1.0, 2.0}, {-1.0, 2.0}};
  c.n_grid = n_grid;
  c.omega = {{0.0, 1.0}, {0.0, 1.0}};
  c.w1 = {{-0.8, -0.2}, {0.2, 0.8}};
  c.w2 = {{1.2, 1.8}, {0.2, 0.8}};
  return c;
}

inline FieldSpec gamma_bump() { return FieldSpec::bump({0.5}, 0.4, 0.5, 1.0); }
inline FieldSpec lambda_quadratic() { return FieldSpec::polynomial({1.0, 0.0, 1.0}); }
inline FieldSpec datum_bump() { return FieldSpec::bump({-0.5}, 0.25, 1.0); }

inline OperatorPack reference_pack(const DomainLayout& L, double s = 0.5) {
  return OperatorPack(L, make_coefficients(L, gamma_bump(), lambda_quadratic()), s);
}

inline OperatorPack unit_pack(const DomainLayout& L, double s = 0.5) {
  return OperatorPack(L, unit_coefficients(L), s);
}

inline Vector random_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace fpme::test
