#pragma once

#include "fpme/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace fpme {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains_open(double x) const { return x > lo && x < hi; }
  double length() const { return hi - lo; }
};

/// Axis-aligned box, one interval per dimension.
using Box = std::vector<Interval>;

enum class Region : std::uint8_t { omega, exterior };

struct LayoutConfig {
  int dimension = 1;
  Box box;
  int n_grid = 0;  // points per axis, box endpoints included
  Box omega;
  Box w1;
  Box w2;
};

/// Uniform grid on a truncated box with homogeneous Dirichlet conditions on the
/// box boundary. Unknowns are the interior grid nodes, numbered row-major.
struct DomainLayout {
  int dimension = 1;
  Box box;
  int n_grid = 0;
  double spacing = 0.0;
  Matrix coords;  // unknowns x dimension
  std::vector<Region> region;
  std::vector<Index> mask_omega;
  std::vector<Index> mask_exterior;
  std::vector<Index> mask_w1;
  std::vector<Index> mask_w2;
  LayoutConfig config;

  Index size() const { return coords.rows(); }
  int interior_per_axis() const { return n_grid - 2; }
  double volume_element() const { return std::pow(spacing, dimension); }
  double box_extent() const {
    double e = 0.0;
    for (const auto& iv : box) e = std::max(e, iv.length());
    return e;
  }

  /// Euclidean distance from unknown `i` to the box boundary.
  double distance_to_boundary(Index i) const {
    double d = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dimension; ++a)
      d = std::min({d, coords(i, a) - box[a].lo, box[a].hi - coords(i, a)});
    return d;
  }

  double distance(Index i, Index j) const { return (coords.row(i) - coords.row(j)).norm(); }

  Vector restrict_to(const Vector& full, const std::vector<Index>& mask) const {
    Vector out(static_cast<Index>(mask.size()));
    for (std::size_t k = 0; k < mask.size(); ++k) out(static_cast<Index>(k)) = full(mask[k]);
    return out;
  }

  Vector extend_from(const Vector& part, const std::vector<Index>& mask) const {
    Vector out = Vector::Zero(size());
    for (std::size_t k = 0; k < mask.size(); ++k) out(mask[k]) = part(static_cast<Index>(k));
    return out;
  }

  /// Volume-weighted l2 norm.
  double weighted_norm(const Vector& f) const { return std::sqrt(volume_element()) * f.norm(); }
};

namespace detail {

inline bool inside_open(const Box& b, const Matrix& coords, Index i) {
  for (std::size_t a = 0; a < b.size(); ++a)
    if (!b[a].contains_open(coords(i, static_cast<Index>(a)))) return false;
  return true;
}

inline void check_box(const Box& b, int dim, const std::string& name) {
  if (static_cast<int>(b.size()) != dim)
    throw ConfigError(name + " must have one interval per dimension");
  for (const auto& iv : b)
    if (!(iv.hi > iv.lo)) throw ConfigError(name + " has an empty interval");
}

inline bool boxes_overlap(const Box& a, const Box& b) {
  for (std::size_t d = 0; d < a.size(); ++d)
    if (a[d].hi <= b[d].lo || b[d].hi <= a[d].lo) return false;
  return true;
}

}  // namespace detail

inline DomainLayout build_layout(const LayoutConfig& cfg) {
  if (cfg.dimension != 1 && cfg.dimension != 2)
    throw ConfigError("dimension must be 1 or 2");
  const int dim = cfg.dimension;
  detail::check_box(cfg.box, dim, "box");
  detail::check_box(cfg.omega, dim, "omega");
  detail::check_box(cfg.w1, dim, "w1");
  detail::check_box(cfg.w2, dim, "w2");
  if (cfg.n_grid < 5) throw ConfigError("n_grid must be at least 5");
  if (dim == 1 && cfg.n_grid > 4002) throw ConfigError("n_grid exceeds the dense 1D cap (4002)");
  if (dim == 2 && cfg.n_grid > 65) throw ConfigError("n_grid exceeds the dense 2D cap (65)");

  const double h = cfg.box[0].length() / (cfg.n_grid - 1);
  for (int a = 1; a < dim; ++a)
    if (std::abs(cfg.box[a].length() / (cfg.n_grid - 1) - h) > 1e-12 * h)
      throw ConfigError("box must have equal spacing along every axis");

  for (int a = 0; a < dim; ++a) {
    const auto& o = cfg.omega[a];
    const auto& b = cfg.box[a];
    if (!(o.lo > b.lo && o.hi < b.hi))
      throw ConfigError("omega must lie strictly inside the box");
    if (o.lo - b.lo < h || b.hi - o.hi < h)
      throw ConfigError("omega must keep at least one grid spacing from the box boundary");
    for (const Box* w : {&cfg.w1, &cfg.w2})
      if ((*w)[a].lo < b.lo || (*w)[a].hi > b.hi) throw ConfigError("w1/w2 must lie inside the box");
  }
  if (detail::boxes_overlap(cfg.w1, cfg.omega)) throw ConfigError("w1 must lie in the exterior of omega");
  if (detail::boxes_overlap(cfg.w2, cfg.omega)) throw ConfigError("w2 must lie in the exterior of omega");

  DomainLayout L;
  L.dimension = dim;
  L.box = cfg.box;
  L.n_grid = cfg.n_grid;
  L.spacing = h;
  L.config = cfg;
  const int ni = cfg.n_grid - 2;
  const Index total = dim == 1 ? ni : static_cast<Index>(ni) * ni;
  L.coords.resize(total, dim);
  for (Index k = 0; k < total; ++k) {
    if (dim == 1) {
      L.coords(k, 0) = cfg.box[0].lo + h * static_cast<double>(k + 1);
    } else {
      const Index i = k / ni;
      const Index j = k % ni;
      L.coords(k, 0) = cfg.box[0].lo + h * static_cast<double>(i + 1);
      L.coords(k, 1) = cfg.box[1].lo + h * static_cast<double>(j + 1);
    }
  }
  L.region.resize(static_cast<std::size_t>(total));
  for (Index k = 0; k < total; ++k) {
    const bool in_omega = detail::inside_open(cfg.omega, L.coords, k);
    L.region[static_cast<std::size_t>(k)] = in_omega ? Region::omega : Region::exterior;
    (in_omega ? L.mask_omega : L.mask_exterior).push_back(k);
    if (!in_omega && detail::inside_open(cfg.w1, L.coords, k)) L.mask_w1.push_back(k);
    if (!in_omega && detail::inside_open(cfg.w2, L.coords, k)) L.mask_w2.push_back(k);
  }
  if (L.mask_omega.empty()) throw ConfigError("omega contains no grid points");
  if (L.mask_w1.empty()) throw ConfigError("w1 contains no grid points");
  if (L.mask_w2.empty()) throw ConfigError("w2 contains no grid points");
  return L;
}

/// Indices whose distance to the box boundary is at least `margin`.
inline std::vector<Index> interior_indices(const DomainLayout& L, double margin) {
  std::vector<Index> out;
  for (Index i = 0; i < L.size(); ++i)
    if (L.distance_to_boundary(i) >= margin) out.push_back(i);
  return out;
}

}  // namespace fpme
