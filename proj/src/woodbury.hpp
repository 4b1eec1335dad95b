#pragma once

// Per-curve Woodbury factors for Sigma = X Lambda X^T + sigma^2 I,
// X = Phi^T B. Shared by the likelihood and its gradient.

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "fpca/model.hpp"

namespace fpca::detail {

struct CurveFactor {
  Eigen::MatrixXd X;                 // m x r
  Eigen::LLT<Eigen::MatrixXd> K;     // sigma^2 Lambda^{-1} + X^T X
  Eigen::VectorXd z;                 // X^T y
  double quad = 0.0;                 // y^T Sigma^{-1} y
  double logdet = 0.0;               // log |Sigma|

  CurveFactor(const Eigen::MatrixXd& B, const Eigen::VectorXd& lambda, double sigma2,
              const Eigen::MatrixXd& Phi, const Eigen::VectorXd& y) {
    X.noalias() = Phi.transpose() * B;
    Eigen::MatrixXd Kmat = X.transpose() * X;
    Kmat.diagonal() += sigma2 * lambda.cwiseInverse();
    K.compute(Kmat);
    if (K.info() != Eigen::Success) throw NumericalError("Woodbury inner system is not positive definite");
    z.noalias() = X.transpose() * y;
    const Eigen::VectorXd Kz = K.solve(z);
    quad = (y.squaredNorm() - z.dot(Kz)) / sigma2;
    const auto L = K.matrixL();
    double logdet_K = 0.0;
    for (Eigen::Index k = 0; k < Kmat.rows(); ++k) logdet_K += 2.0 * std::log(L(k, k));
    const double m = static_cast<double>(y.size());
    const double r = static_cast<double>(lambda.size());
    logdet = (m - r) * std::log(sigma2) + logdet_K + lambda.array().log().sum();
  }
};

}  // namespace fpca::detail
