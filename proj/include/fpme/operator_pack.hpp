#pragma once

#include "fpme/coefficients.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <sstream>
#include <string>

namespace fpme {

/// Conservative second-order stencil for -div(gamma grad) with gamma at cell
/// midpoints taken as the harmonic mean of the adjacent nodal values. Box
/// boundary nodes carry gamma = 1 and homogeneous Dirichlet values.
inline Matrix assemble_stiffness(const DomainLayout& L, const Vector& gamma) {
  const Index n = L.size();
  const double inv_h2 = 1.0 / (L.spacing * L.spacing);
  const int ni = L.interior_per_axis();
  auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };
  Matrix A = Matrix::Zero(n, n);

  auto couple = [&](Index i, Index j, bool neighbour_inside) {
    const double gj = neighbour_inside ? gamma(j) : 1.0;
    const double w = harmonic(gamma(i), gj) * inv_h2;
    A(i, i) += w;
    if (neighbour_inside) A(i, j) -= w;
  };

  for (Index k = 0; k < n; ++k) {
    if (L.dimension == 1) {
      couple(k, k - 1, k > 0);
      couple(k, k + 1, k < n - 1);
    } else {
      const Index i = k / ni;
      const Index j = k % ni;
      couple(k, k - ni, i > 0);
      couple(k, k + ni, i < ni - 1);
      couple(k, k - 1, j > 0);
      couple(k, k + 1, j < ni - 1);
    }
  }
  return A;
}

/// Dense spectral realization of the fractional power of L_gamma on the box.
///
/// Immutable after construction; copies share the eigendecomposition.
class OperatorPack {
 public:
  OperatorPack(DomainLayout layout, CoefficientFields coeffs, double s)
      : layout_(std::make_shared<const DomainLayout>(std::move(layout))),
        coeffs_(std::make_shared<const CoefficientFields>(std::move(coeffs))) {
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("fractional power s must lie in (0, 1]");
    validate_coefficients(*layout_, *coeffs_);
    auto stiff = std::make_shared<Matrix>(assemble_stiffness(*layout_, coeffs_->gamma));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(*stiff);
    if (eig.info() != Eigen::Success) {
      const Vector d = stiff->diagonal();
      std::ostringstream msg;
      msg << "eigendecomposition of L_gamma failed to converge (size " << stiff->rows()
          << ", diagonal range [" << d.minCoeff() << ", " << d.maxCoeff() << "])";
      throw NumericalError(msg.str());
    }
    if (!(eig.eigenvalues()(0) > 0.0)) {
      std::ostringstream msg;
      msg << "L_gamma is not positive definite; smallest eigenvalue " << eig.eigenvalues()(0)
          << ", condition estimate " << eig.eigenvalues().maxCoeff() / std::abs(eig.eigenvalues()(0));
      throw NumericalError(msg.str());
    }
    L_ = std::move(stiff);
    eigenvalues_ = std::make_shared<const Vector>(eig.eigenvalues());
    eigenvectors_ = std::make_shared<const Matrix>(eig.eigenvectors());
    set_power(s);
  }

  /// Rebuilds a pack from a stored eigendecomposition of L_gamma.
  static OperatorPack from_eigensystem(DomainLayout layout, CoefficientFields coeffs, double s, Vector eigenvalues,
                                       Matrix eigenvectors) {
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("fractional power s must lie in (0, 1]");
    validate_coefficients(layout, coeffs);
    const Index n = layout.size();
    if (eigenvalues.size() != n || eigenvectors.rows() != n || eigenvectors.cols() != n)
      throw ConfigError("stored eigensystem does not match the layout size");
    if (!(eigenvalues.minCoeff() > 0.0)) throw NumericalError("stored eigenvalues are not positive");
    OperatorPack p;
    p.layout_ = std::make_shared<const DomainLayout>(std::move(layout));
    p.coeffs_ = std::make_shared<const CoefficientFields>(std::move(coeffs));
    p.L_ = std::make_shared<const Matrix>(assemble_stiffness(*p.layout_, p.coeffs_->gamma));
    p.eigenvalues_ = std::make_shared<const Vector>(std::move(eigenvalues));
    p.eigenvectors_ = std::make_shared<const Matrix>(std::move(eigenvectors));
    p.set_power(s);
    return p;
  }

  /// Same operator raised to a different power, reusing the eigendecomposition.
  OperatorPack with_power(double s) const {
    if (!(s > 0.0 && s <= 1.0)) throw ConfigError("fractional power s must lie in (0, 1]");
    OperatorPack p = *this;
    p.set_power(s);
    return p;
  }

  const DomainLayout& layout() const { return *layout_; }
  const CoefficientFields& coefficients() const { return *coeffs_; }
  double s() const { return s_; }
  const Matrix& L() const { return *L_; }
  const Vector& eigenvalues() const { return *eigenvalues_; }
  const Matrix& eigenvectors() const { return *eigenvectors_; }
  const Matrix& Ls() const { return *Ls_; }
  Index size() const { return L_->rows(); }

  /// The 1/Gamma(-s) prefactor of the semigroup formula. It is absorbed into
  /// the spectral definition and only reported.
  double normalization_constant() const { return 1.0 / std::tgamma(-s_); }

  Vector apply(const Vector& u) const { return (*Ls_) * u; }

  /// Q diag(lambda^r) Q^T v without forming the matrix.
  Vector apply_power(double r, const Vector& v) const {
    const Matrix& Q = *eigenvectors_;
    Vector c = Q.transpose() * v;
    c.array() *= eigenvalues_->array().pow(r);
    return Q * c;
  }

  Matrix power(double r) const {
    const Matrix& Q = *eigenvectors_;
    Matrix P = Q * eigenvalues_->array().pow(r).matrix().asDiagonal() * Q.transpose();
    return 0.5 * (P + P.transpose());
  }

  /// Eigenbasis coefficients scaled so that their l2 norm is the
  /// volume-weighted l2 norm of `f`.
  Vector spectral_coefficients(const Vector& f) const {
    return std::sqrt(layout_->volume_element()) * (eigenvectors_->transpose() * f);
  }

 private:
  OperatorPack() = default;

  void set_power(double s) {
    s_ = s;
    if (s == 1.0)
      Ls_ = L_;
    else
      Ls_ = std::make_shared<const Matrix>(power(s));
  }

  std::shared_ptr<const DomainLayout> layout_;
  std::shared_ptr<const CoefficientFields> coeffs_;
  std::shared_ptr<const Matrix> L_;
  std::shared_ptr<const Vector> eigenvalues_;
  std::shared_ptr<const Matrix> eigenvectors_;
  std::shared_ptr<const Matrix> Ls_;
  double s_ = 0.5;
};

inline OperatorPack assemble_operator(const DomainLayout& layout, const CoefficientFields& coeffs,
                                      double s) {
  return OperatorPack(layout, coeffs, s);
}

}  // namespace fpme
