#pragma once

// Independent reference for the gamma = 1 operator: multiplies the discrete
// Fourier transform of a field, sampled on a periodic grid several times wider
// than the box, by a power of the Laplacian symbol. No eigendecomposition is
// involved, so it can check OperatorPack without sharing its code path.

#include "fpme/coefficients.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace fpme {

enum class FourierSymbol {
  lattice,    // ((2/h) |sin(xi h / 2)|)^{2s}, the three-point Laplacian
  continuum,  // |xi|^{2s}
};

/// (-Delta)^s applied to `field` on a periodic grid of period `widen` times the
/// box length with the box spacing, sampled back at the layout unknowns.
/// One-dimensional layouts only.
inline Vector fourier_fractional_laplacian(const DomainLayout& L, const FieldSpec& field, double s,
                                           int widen = 8, FourierSymbol symbol = FourierSymbol::lattice) {
  if (L.dimension != 1) throw ConfigError("Fourier oracle is implemented for 1D layouts");
  const double h = L.spacing;
  const long cells = static_cast<long>(L.n_grid - 1);
  const long M = widen * cells;
  const long start = (widen - 1) * cells / 2;  // periodic index of box.lo
  const double x0 = L.box[0].lo - static_cast<double>(start) * h;

  std::vector<double> ct(static_cast<std::size_t>(M)), st(static_cast<std::size_t>(M));
  for (long k = 0; k < M; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(M);
    ct[static_cast<std::size_t>(k)] = std::cos(a);
    st[static_cast<std::size_t>(k)] = std::sin(a);
  }

  std::vector<long> support;
  std::vector<double> values;
  for (long j = 0; j < M; ++j) {
    const double x = x0 + static_cast<double>(j) * h;
    const double v = field.evaluate(std::span<const double>(&x, 1));
    if (v != 0.0) {
      support.push_back(j);
      values.push_back(v);
    }
  }

  std::vector<double> re(static_cast<std::size_t>(M), 0.0), im(static_cast<std::size_t>(M), 0.0);
  for (long k = 0; k < M; ++k) {
    double a = 0.0, b = 0.0;
    for (std::size_t q = 0; q < support.size(); ++q) {
      const auto idx = static_cast<std::size_t>((support[q] * k) % M);
      a += values[q] * ct[idx];
      b -= values[q] * st[idx];
    }
    const long kk = k <= M / 2 ? k : k - M;
    const double xi = 2.0 * std::numbers::pi * static_cast<double>(kk) / (static_cast<double>(M) * h);
    const double mult = symbol == FourierSymbol::lattice
                            ? std::pow(2.0 / h * std::abs(std::sin(0.5 * xi * h)), 2.0 * s)
                            : std::pow(std::abs(xi), 2.0 * s);
    re[static_cast<std::size_t>(k)] = a * mult;
    im[static_cast<std::size_t>(k)] = b * mult;
  }

  Vector out(L.size());
  for (Index i = 0; i < L.size(); ++i) {
    const long j = start + 1 + i;
    double acc = 0.0;
    for (long k = 0; k < M; ++k) {
      const auto idx = static_cast<std::size_t>((j * k) % M);
      acc += re[static_cast<std::size_t>(k)] * ct[idx] - im[static_cast<std::size_t>(k)] * st[idx];
    }
    out(i) = acc / static_cast<double>(M);
  }
  return out;
}

}  // namespace fpme
