#pragma once

/**
 * @file stiefel.hpp
 * @brief Geometry of the Stiefel manifold S_{M,r} = {B : B^T B = I_r} under
 *        the canonical metric, and of the product S_{M,r} x R^r.
 *
 * A tangent vector at B is stored as U = B A + C with A skew (only the
 * strictly lower triangle is kept) and B^T C = 0.
 */

#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fpca {

/// An M x r matrix with orthonormal columns.
class StiefelPoint {
 public:
  static constexpr double kTolerance = 1e-10;
  static constexpr double kRepairThreshold = 1e-6;

  /// Accepts B if ||B^T B - I||_F <= 1e-10, re-orthonormalizes (polar
  /// factor) if within 1e-6, otherwise throws std::invalid_argument.
  explicit StiefelPoint(Eigen::MatrixXd B);

  int ambient_dim() const { return static_cast<int>(B_.rows()); }
  int rank() const { return static_cast<int>(B_.cols()); }
  const Eigen::MatrixXd& matrix() const { return B_; }

  /// ||B^T B - I||_F
  static double orthonormality_error(const Eigen::MatrixXd& B);

 private:
  Eigen::MatrixXd B_;
};

/// Tangent vector U = B A + C at a Stiefel point.
class TangentVector {
 public:
  /// Takes the skew part of A and projects C onto the orthogonal complement of B.
  TangentVector(StiefelPoint base, const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);

  static TangentVector zero(const StiefelPoint& base);

  const StiefelPoint& base() const { return base_; }
  /// Full r x r skew matrix.
  Eigen::MatrixXd A() const;
  const Eigen::MatrixXd& C() const { return C_; }
  /// U = B A + C
  Eigen::MatrixXd full() const;

  TangentVector scaled(double s) const;
  TangentVector plus(const TangentVector& other) const;

 private:
  StiefelPoint base_;
  Eigen::VectorXd lower_;  // strictly-lower triangle of A, column-major
  Eigen::MatrixXd C_;
};

/// Point (B, zeta) on S_{M,r} x R^r; Lambda = exp(zeta).
struct ProductPoint {
  StiefelPoint B;
  Eigen::VectorXd zeta;

  Eigen::VectorXd lambda() const { return zeta.array().exp(); }
};

struct ProductTangent {
  TangentVector X_B;
  Eigen::VectorXd X_zeta;
};

/// Projection Z - B sym(B^T Z) onto the tangent space at B.
TangentVector tangent_project(const StiefelPoint& B, const Eigen::MatrixXd& Z);

/// (A, C) with A = B^T U, C = (I - B B^T) U.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_tangent(const TangentVector& U);

/// Orthogonal exponential of a skew-symmetric matrix (scaling and squaring
/// with a diagonal Pade kernel). Throws std::invalid_argument if
/// ||S + S^T||_F > 1e-12.
Eigen::MatrixXd skew_exp(const Eigen::MatrixXd& S);

/// Geodesic exp(t, U) = B M(t,U) + Q N(t,U) for the canonical metric.
StiefelPoint exp_map(const TangentVector& U, double t = 1.0);

/// tr(X^T (I - B B^T / 2) Y). Throws std::invalid_argument on base mismatch.
double canonical_inner(const TangentVector& X, const TangentVector& Y);

/// canonical_inner on the Stiefel part plus the Euclidean dot on zeta.
double product_inner(const ProductTangent& X, const ProductTangent& Y);

/// Riemannian gradient F - B F^T B from a Euclidean gradient F.
TangentVector intrinsic_grad(const StiefelPoint& B, const Eigen::MatrixXd& F);

}  // namespace fpca
