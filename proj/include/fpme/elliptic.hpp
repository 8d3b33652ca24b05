#pragma once

#include "fpme/operator_pack.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fpme {

/// Exterior datum on a W-mask. `g0` is the v-side profile (the m-th signed
/// power of the u-datum); the stored datum is h * g0.
struct ExteriorDatum {
  Vector g0;
  double h = 1.0;
  int support = 1;  // 1 -> mask_w1, 2 -> mask_w2

  Vector v_exterior() const { return h * g0; }
  bool is_zero() const { return g0.cwiseAbs().maxCoeff() == 0.0; }
};

inline const std::vector<Index>& support_mask(const DomainLayout& L, int which) {
  if (which == 1) return L.mask_w1;
  if (which == 2) return L.mask_w2;
  throw ConfigError("datum support must be 1 or 2");
}

inline ExteriorDatum make_datum(const DomainLayout& L, const FieldSpec& shape, double h, int which = 1) {
  if (!(h > 0.0)) throw ConfigError("datum amplitude h must be positive");
  const Vector full = shape.sample(L);
  ExteriorDatum d;
  d.g0 = Vector::Zero(L.size());
  for (Index i : support_mask(L, which)) d.g0(i) = full(i);
  d.h = h;
  d.support = which;
  return d;
}

inline void check_datum_support(const DomainLayout& L, const ExteriorDatum& d) {
  if (d.g0.size() != L.size()) throw ConfigError("datum size does not match the layout");
  const auto& mask = support_mask(L, d.support);
  Vector inside = Vector::Zero(L.size());
  for (Index i : mask) inside(i) = 1.0;
  for (Index i = 0; i < L.size(); ++i)
    if (inside(i) == 0.0 && d.g0(i) != 0.0) throw ConfigError("datum does not vanish outside its W-mask");
}

struct ExteriorSolution {
  Vector u;
  double residual = 0.0;  // relative residual of (Ls u)|_omega = f
};

/// Factorizes the omega-block of Ls once; solves many exterior problems.
class ExteriorSolver {
 public:
  explicit ExteriorSolver(const OperatorPack& pack) : pack_(pack) {
    const DomainLayout& L = pack.layout();
    const auto& om = L.mask_omega;
    const auto& ex = L.mask_exterior;
    block_ = pack.Ls()(om, om);
    coupling_ = pack.Ls()(om, ex);
    llt_.compute(block_);
    if (llt_.info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "omega-block of Ls is not positive definite (size " << block_.rows() << ")";
      throw NumericalError(msg.str());
    }
  }

  /// u = g on the exterior and (Ls u)|_omega = f. `f` and `g` are full-grid
  /// vectors; f is read on omega and g on the exterior.
  ExteriorSolution solve(const Vector& f, const Vector& g) const {
    const DomainLayout& L = pack_.layout();
    const Vector f_om = L.restrict_to(f, L.mask_omega);
    const Vector g_ex = L.restrict_to(g, L.mask_exterior);
    const Vector rhs = f_om - coupling_ * g_ex;
    const Vector u_om = llt_.solve(rhs);

    ExteriorSolution out;
    out.u = L.extend_from(g_ex, L.mask_exterior);
    for (std::size_t k = 0; k < L.mask_omega.size(); ++k)
      out.u(L.mask_omega[k]) = u_om(static_cast<Index>(k));
    const Vector r = block_ * u_om - rhs;
    const double scale = std::max(f_om.norm() + (coupling_ * g_ex).norm(), 1e-300);
    out.residual = f_om.norm() == 0.0 && g_ex.norm() == 0.0 ? 0.0 : r.norm() / scale;
    if (!out.u.allFinite()) throw NumericalError("exterior solve produced non-finite values");
    return out;
  }

  const Matrix& omega_block() const { return block_; }

 private:
  const OperatorPack& pack_;
  Matrix block_;
  Matrix coupling_;
  Eigen::LLT<Matrix> llt_;
};

inline ExteriorSolution solve_exterior(const OperatorPack& pack, const Vector& f, const Vector& g) {
  return ExteriorSolver(pack).solve(f, g);
}

/// Linear DN map g -> (Ls u)|_{W2} for the exterior problem with f = 0.
inline Vector linear_dn_map(const OperatorPack& pack, const ExteriorDatum& datum) {
  const DomainLayout& L = pack.layout();
  check_datum_support(L, datum);
  const ExteriorSolution sol = solve_exterior(pack, Vector::Zero(L.size()), datum.v_exterior());
  return L.restrict_to(pack.apply(sol.u), L.mask_w2);
}

}  // namespace fpme
