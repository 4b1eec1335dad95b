#pragma once

/**
 * @file calculus.hpp
 * @brief Intrinsic gradients and Hessians of the negative log-likelihood on
 *        S_{M,r} x R^r (zeta = log Lambda), the inverse Hessian at the
 *        optimal parameter and the efficient-score representation.
 *
 * Matrix-regime formulas work in the normalized scale sigma^2 = s = 1 with
 * loss tr(Gamma^{-1} S) + log|Gamma|, Gamma = B Lambda B^T + I. The
 * `normalize` helper maps a general (sigma^2, s) instance onto it:
 * Lambda' = s Lambda / sigma^2, S' = S / sigma^2.
 */

#include <Eigen/Dense>

#include "fpca/model.hpp"
#include "fpca/stiefel.hpp"

namespace fpca {

struct GradPair {
  TangentVector grad_B;
  Eigen::VectorXd grad_zeta;

  /// Norm in the product (canonical + Euclidean) metric.
  double norm() const;
};

struct NormalizedProblem {
  ProductPoint theta;
  Eigen::MatrixXd S;
};

/// Maps (params, S) with general sigma^2, s to the normalized scale.
NormalizedProblem normalize(const ModelParams& params, const Eigen::MatrixXd& S);

/// 2 [B Q^{-1} B^T S B - S B Q^{-1}],  Q^{-1} = Lambda (I + Lambda)^{-1}.
TangentVector grad_B(const ProductPoint& theta, const Eigen::MatrixXd& S);

/// lambda_k (1 + lambda_k)^{-2} (1 + lambda_k - B_k^T S B_k).
Eigen::VectorXd grad_zeta(const ProductPoint& theta, const Eigen::MatrixXd& S);

/// Intrinsic Hessian of the loss in B (canonical metric), as a bilinear form.
double hessian_B_bilinear(const ProductPoint& theta, const Eigen::MatrixXd& S, const TangentVector& X,
                          const TangentVector& Y);

/// Diagonal of the zeta-Hessian:
/// lambda_k (1+lambda_k)^{-3} ((lambda_k - 1) B_k^T S B_k + 1 + lambda_k).
Eigen::VectorXd hessian_zeta(const ProductPoint& theta, const Eigen::MatrixXd& S);

/// Mixed term <d/dzeta <grad_B, X_B>_c, eta> of the product Hessian.
double hessian_cross(const ProductPoint& theta, const Eigen::MatrixXd& S, const TangentVector& X_B,
                     const Eigen::VectorXd& eta);

/// Full product-manifold Hessian H(T, X).
double hessian_product(const ProductPoint& theta, const Eigen::MatrixXd& S, const ProductTangent& T,
                       const ProductTangent& X);

/// Closed form of the B-Hessian at theta_star when S = Gamma_star:
/// 2 (tr[X^T B Lambda B^T Y (I+Lambda)^{-1}] - tr[X^T B B^T Y Q^{-1}])
///   + 2 tr[Lambda^2 (I+Lambda)^{-1} X^T (I - B B^T) Y].
double hessian_star_B_closed_form(const ProductPoint& theta_star, const TangentVector& X, const TangentVector& Y);

/// Minimum separation of eigenvalues accepted by the inverse-Hessian routines.
inline constexpr double kEigenGapThreshold = 1e-8;

/// H_B^{-1}(theta*; theta*)(X):
/// (1/2) B ((1+l_i)(1+l_j)/(l_i-l_j)^2 A_ij) + (1/2) (I - BB^T) X Lambda^{-2} (I + Lambda).
/// Throws DegenerateSpectrumError if two eigenvalues are closer than 1e-8.
TangentVector inv_hessian_star_B(const ProductPoint& theta_star, const TangentVector& X);

/// H_zeta^{-1}(theta*; theta*) v = v (1 + Lambda)^2 / Lambda^2.
Eigen::VectorXd inv_hessian_star_zeta(const ProductPoint& theta_star, const Eigen::VectorXd& v);

struct ScoreDelta {
  TangentVector delta_B;
  Eigen::VectorXd delta_lambda;
};

/// First-order score terms via the resolvents
/// R_j = sum_{i != j} (l_i - l_j)^{-1} B_i B_i^T - l_j^{-1} (I - B B^T):
/// delta_B = -[R_1 S B_1 : ... : R_r S B_r], delta_lambda_k = B_k^T S B_k - (1 + l_k).
ScoreDelta score_delta(const ProductPoint& theta_star, const Eigen::MatrixXd& S);

/// Same quantities composed as -H_B^{-1}(grad_B) and -Lambda H_zeta^{-1}(grad_zeta).
ScoreDelta score_delta_via_inverse_hessian(const ProductPoint& theta_star, const Eigen::MatrixXd& S);

/// Matrix-regime gradient for general (sigma^2, s), computed directly.
GradPair grad_matrix(const ModelParams& params, const Eigen::MatrixXd& S);

/// Functional-regime loss and intrinsic gradient (Woodbury factors).
struct LossGrad {
  double loss = 0.0;
  GradPair grad;
};

LossGrad loss_grad_functional(const ModelParams& params, const CurveDesigns& designs);

/// Intrinsic gradient of the functional negative log-likelihood.
GradPair grad_functional(const ModelParams& params, const CurveDesigns& designs);
GradPair grad_functional(const ModelParams& params, const Dataset& data, const OrthoBasis& basis);

}  // namespace fpca
