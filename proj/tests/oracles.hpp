#pragma once

// Independent reference computations used by the tests. Nothing here calls
// the library's own likelihood, exponential or derivative code.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fpca/model.hpp"
#include "fpca/stiefel.hpp"

namespace oracle {

inline double binom(int n, int k) {
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

/// int_0^1 b_i b_j for cubic Bernstein polynomials b_i = C(3,i) t^i (1-t)^(3-i).
inline double bernstein_gram(int i, int j) { return binom(3, i) * binom(3, j) / (binom(6, i + j) * 7.0); }

/// Taylor series of exp(A) with scaling and squaring (no Pade).
inline Eigen::MatrixXd expm_series(const Eigen::MatrixXd& A) {
  int squarings = 0;
  double norm = A.cwiseAbs().colwise().sum().maxCoeff();
  while (norm > 0.05) {
    norm *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd X = A / std::pow(2.0, squarings);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(A.rows(), A.cols());
  Eigen::MatrixXd sum = term;
  for (int k = 1; k < 30; ++k) {
    term = term * X / k;
    sum += term;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

/// Dense Stiefel geodesic from the canonical-metric formula of Edelman,
/// Arias and Smith: Y(t) = [B Q] exp(t [[A, -R^T], [R, 0]]) [I; 0] with a
/// plain (Householder) QR of (I - BB^T) U.
inline Eigen::MatrixXd geodesic(const Eigen::MatrixXd& B, const Eigen::MatrixXd& U, double t) {
  const Eigen::Index M = B.rows(), r = B.cols();
  const Eigen::MatrixXd A = B.transpose() * U;
  const Eigen::MatrixXd C = U - B * A;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(M, r);
  const Eigen::MatrixXd R = Q.transpose() * C;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(2 * r, 2 * r);
  K.topLeftCorner(r, r) = A;
  K.topRightCorner(r, r) = -R.transpose();
  K.bottomLeftCorner(r, r) = R;
  const Eigen::MatrixXd E = expm_series(t * K);
  return B * E.topLeftCorner(r, r) + Q * E.bottomLeftCorner(r, r);
}

/// (1/2n) sum [y^T Sigma^-1 y + log|Sigma|] with dense Sigma_i.
inline double dense_functional_nll(const Eigen::MatrixXd& B, const Eigen::VectorXd& lambda, double sigma2,
                                   const std::vector<Eigen::MatrixXd>& Phis, const std::vector<Eigen::VectorXd>& ys) {
  double total = 0.0;
  for (std::size_t i = 0; i < Phis.size(); ++i) {
    Eigen::MatrixXd S = Phis[i].transpose() * B * lambda.asDiagonal() * B.transpose() * Phis[i];
    S.diagonal().array() += sigma2;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(S);
    total += ys[i].dot(lu.solve(ys[i])) + std::log(lu.determinant());
  }
  return total / (2.0 * static_cast<double>(Phis.size()));
}

/// tr(Gamma^-1 S) + log|Gamma| with dense Gamma = s B Lambda B^T + sigma2 I.
inline double dense_matrix_nll(const Eigen::MatrixXd& B, const Eigen::VectorXd& lambda, double sigma2, double s,
                               const Eigen::MatrixXd& S) {
  Eigen::MatrixXd G = s * B * lambda.asDiagonal() * B.transpose();
  G.diagonal().array() += sigma2;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
  return lu.solve(S).trace() + std::log(lu.determinant());
}

inline Eigen::MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd A(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) A(i, j) = nd(rng);
  return A;
}

inline Eigen::MatrixXd orthonormal(int M, int r, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(M, r, rng));
  return qr.householderQ() * Eigen::MatrixXd::Identity(M, r);
}

inline Eigen::MatrixXd random_spd(int M, std::mt19937_64& rng, double ridge = 0.5) {
  const Eigen::MatrixXd G = gaussian(M, M, rng);
  Eigen::MatrixXd S = G * G.transpose() / M;
  S.diagonal().array() += ridge;
  return S;
}

/// A random tangent vector at B (Gaussian skew part and normal part).
inline fpca::TangentVector random_tangent(const fpca::StiefelPoint& B, std::mt19937_64& rng) {
  const int r = B.rank();
  const Eigen::MatrixXd L = gaussian(r, r, rng);
  return fpca::TangentVector(B, L - L.transpose(), gaussian(B.ambient_dim(), r, rng));
}

/// Central difference of f at 0.
inline double central_diff(const std::function<double(double)>& f, double h) { return (f(h) - f(-h)) / (2.0 * h); }

/// Second central difference of f at 0.
inline double second_diff(const std::function<double(double)>& f, double h) {
  return (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
}

/// Relative error with an absolute floor.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
