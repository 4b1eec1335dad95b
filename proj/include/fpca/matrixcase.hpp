#pragma once

/**
 * @file matrixcase.hpp
 * @brief Matrix regime: the closed-form PCA estimator, its agreement with
 *        the likelihood optimizer, and score-representation residuals.
 */

#include <stdexcept>

#include <Eigen/Dense>

#include "fpca/calculus.hpp"
#include "fpca/model.hpp"
#include "fpca/optimizer.hpp"

namespace fpca {

/// Raised when a retained sample eigenvalue does not exceed sigma^2.
class SignalTooWeakError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Top-r eigenvectors of S (canonicalized) and lambda_k = (l_k - sigma^2)/s.
/// Throws SignalTooWeakError if l_k <= sigma^2 for some k <= r, and
/// DegenerateSpectrumError if l_1..l_{r+1} contain a gap <= 1e-10.
ModelParams pca_fit(const Eigen::MatrixXd& S, int r, double s = 1.0, double sigma2 = 1.0);

struct EquivalenceReport {
  double grad_norm_B = 0.0;     // canonical norm of the B-gradient at the PCA solution
  double grad_norm_zeta = 0.0;  // Euclidean norm of the zeta-gradient there
  double distance_B = 0.0;      // ||B_fit - B_pca||_F after canonicalization
  double distance_lambda = 0.0; // max_k |lambda_fit - lambda_pca| / lambda_pca
  bool converged = false;
  int iterations = 0;
};

/// Gradient at the PCA solution and distance between the optimizer's fit
/// (pooled start) and the PCA solution.
EquivalenceReport reml_equals_pca(const Eigen::MatrixXd& S, int r, double s, double sigma2, const FitConfig& config);

/// max(sqrt(max(M, log n) / n), beta_n)
double gamma_n(int M, long n, double beta_n);

struct ScoreReport {
  long n = 0;
  double gamma_n = 0.0;
  double residual_B = 0.0;       // ||B_hat - B* - delta_B||_F
  double residual_lambda = 0.0;  // ||Lambda_hat - Lambda* - delta_lambda||
  double error_B = 0.0;          // ||B_hat - B*||_F
  double error_lambda = 0.0;     // ||Lambda_hat - Lambda*||
  double route_gap = 0.0;        // max distance between the two score constructions
};

/// Score residuals in the normalized scale (sigma^2 = s = 1). B_hat is
/// sign-aligned with B* before comparison.
ScoreReport score_residual(const ProductPoint& theta_star, const Eigen::MatrixXd& S, long n, double beta_n);

/// General (sigma^2, s): rescales to the normalized problem first.
ScoreReport score_residual(const ModelParams& truth, const Eigen::MatrixXd& S, long n, double beta_n);

}  // namespace fpca
