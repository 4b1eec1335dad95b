#include "fpca/matrixcase.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpca/linalg.hpp"

namespace fpca {

ModelParams pca_fit(const Eigen::MatrixXd& S, int r, double s, double sigma2) {
  const Eigen::Index M = S.rows();
  if (S.cols() != M) throw std::invalid_argument("pca_fit: covariance must be square");
  if (r < 1 || r > M) throw std::invalid_argument("pca_fit: r must lie in [1, " + std::to_string(M) + "]");
  if (!(s > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("pca_fit: s and sigma2 must be positive");
  const SymEig eig = sym_eig_desc(S);
  const Eigen::Index last = std::min<Eigen::Index>(r + 1, M);
  for (Eigen::Index k = 0; k + 1 < last; ++k)
    if (eig.values[k] - eig.values[k + 1] <= 1e-10)
      throw DegenerateSpectrumError("pca_fit: sample eigenvalues " + std::to_string(k + 1) + " and " +
                                    std::to_string(k + 2) + " are tied");
  for (int k = 0; k < r; ++k)
    if (eig.values[k] <= sigma2)
      throw SignalTooWeakError("pca_fit: sample eigenvalue " + std::to_string(k + 1) + " does not exceed sigma2");
  Eigen::MatrixXd B = eig.vectors.leftCols(r);
  canonicalize_signs(B);
  Eigen::VectorXd lambda = ((eig.values.head(r).array() - sigma2) / s).matrix();
  return ModelParams{StiefelPoint(std::move(B)), std::move(lambda), sigma2, s};
}

EquivalenceReport reml_equals_pca(const Eigen::MatrixXd& S, int r, double s, double sigma2, const FitConfig& config) {
  const ModelParams pca = pca_fit(S, r, s, sigma2);
  const GradPair g = grad_matrix(pca, S);
  EquivalenceReport rep;
  rep.grad_norm_B = std::sqrt(canonical_inner(g.grad_B, g.grad_B));
  rep.grad_norm_zeta = g.grad_zeta.norm();

  const long n = 1;
  const FitResult fr = fit(Dataset::matrix(S, n), nullptr, r, sigma2, s, config);
  rep.converged = fr.converged;
  rep.iterations = fr.iterations;
  rep.distance_B = (fr.params.B.matrix() - pca.B.matrix()).norm();
  rep.distance_lambda = ((fr.params.lambda - pca.lambda).array().abs() / pca.lambda.array()).maxCoeff();
  return rep;
}

double gamma_n(int M, long n, double beta_n) {
  const double nn = static_cast<double>(n);
  return std::max(std::sqrt(std::max(static_cast<double>(M), std::log(nn)) / nn), beta_n);
}

ScoreReport score_residual(const ProductPoint& theta_star, const Eigen::MatrixXd& S, long n, double beta_n) {
  const int r = theta_star.B.rank();
  const ModelParams hat = pca_fit(S, r, 1.0, 1.0);
  const Eigen::MatrixXd& Bs = theta_star.B.matrix();
  Eigen::MatrixXd Bh = hat.B.matrix();
  align_signs(Bh, Bs);
  const Eigen::VectorXd ls = theta_star.lambda();

  const ScoreDelta d = score_delta(theta_star, S);
  const ScoreDelta d2 = score_delta_via_inverse_hessian(theta_star, S);

  ScoreReport rep;
  rep.n = n;
  rep.gamma_n = gamma_n(theta_star.B.ambient_dim(), n, beta_n);
  rep.residual_B = (Bh - Bs - d.delta_B.full()).norm();
  rep.residual_lambda = (hat.lambda - ls - d.delta_lambda).norm();
  rep.error_B = (Bh - Bs).norm();
  rep.error_lambda = (hat.lambda - ls).norm();
  rep.route_gap = std::max((d.delta_B.full() - d2.delta_B.full()).norm(), (d.delta_lambda - d2.delta_lambda).norm());
  return rep;
}

ScoreReport score_residual(const ModelParams& truth, const Eigen::MatrixXd& S, long n, double beta_n) {
  const NormalizedProblem np = normalize(truth, S);
  return score_residual(np.theta, np.S, n, beta_n);
}

}  // namespace fpca
