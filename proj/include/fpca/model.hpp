#pragma once

/**
 * @file model.hpp
 * @brief Rank-r covariance models, Gaussian negative log-likelihoods for the
 *        sparse/dense functional regimes and the matrix regime, KL divergence
 *        and covariance-kernel utilities.
 */

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fpca/bspline.hpp"
#include "fpca/linalg.hpp"
#include "fpca/stiefel.hpp"

namespace fpca {

/// Raised when an eigenvalue gap needed by a computation is (numerically) zero.
class DegenerateSpectrumError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a factorization that must succeed for valid inputs fails.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// theta = (B, Lambda, sigma^2, s): covariance s B Lambda B^T (+ sigma^2 I).
struct ModelParams {
  StiefelPoint B;
  Eigen::VectorXd lambda;
  double sigma2 = 1.0;
  double s = 1.0;

  int basis_dim() const { return B.ambient_dim(); }
  int rank() const { return B.rank(); }
  Eigen::VectorXd zeta() const { return lambda.array().log(); }

  /// Checks positivity of lambda, sigma2, s and sizes; with
  /// require_order also lambda_1 > ... > lambda_r.
  void validate(bool require_order = true) const;
};

/// Sorts components by decreasing lambda and applies the sign convention
/// (largest-magnitude entry of each column positive).
ModelParams canonicalize(const ModelParams& params);

struct CurveData {
  std::string id;
  std::vector<double> times;
  std::vector<double> values;
};

enum class Regime { Sparse, Dense, Matrix };

Regime parse_regime(const std::string& name);
std::string regime_name(Regime regime);

struct Dataset {
  Regime regime = Regime::Sparse;
  std::vector<CurveData> curves;  // functional regimes
  Eigen::MatrixXd sample_cov;     // matrix regime
  long n_samples = 0;             // matrix regime

  static Dataset functional(Regime regime, std::vector<CurveData> curves);
  static Dataset matrix(Eigen::MatrixXd sample_cov, long n_samples);

  /// Number of independent units: curves, or samples behind sample_cov.
  long n() const { return regime == Regime::Matrix ? n_samples : static_cast<long>(curves.size()); }
  void validate() const;
};

/// Per-curve design matrices Phi_i (M x m_i) and observations, computed once.
class CurveDesigns {
 public:
  CurveDesigns(const Dataset& data, const OrthoBasis& basis);

  std::size_t size() const { return phi_.size(); }
  int basis_dim() const { return basis_dim_; }
  const Eigen::MatrixXd& phi(std::size_t i) const { return phi_[i]; }
  const Eigen::VectorXd& y(std::size_t i) const { return y_[i]; }

 private:
  int basis_dim_;
  std::vector<Eigen::MatrixXd> phi_;
  std::vector<Eigen::VectorXd> y_;
};

/// Deterministic reduction over curves: values are summed pairwise in a tree
/// whose shape depends only on the number of curves.
template <class T, class Leaf>
T reduce_curves(std::size_t begin, std::size_t end, const Leaf& leaf) {
  constexpr std::size_t kLeaf = 16;
  if (end - begin <= kLeaf) {
    T acc = leaf(begin);
    for (std::size_t i = begin + 1; i < end; ++i) acc += leaf(i);
    return acc;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  T left = reduce_curves<T>(begin, mid, leaf);
  left += reduce_curves<T>(mid, end, leaf);
  return left;
}

/// Sigma_i = Phi_i^T B Lambda B^T Phi_i + sigma^2 I.
Eigen::MatrixXd marginal_cov(const ModelParams& params, const Eigen::MatrixXd& Phi);

/// Gamma = s B Lambda B^T + sigma^2 I (matrix regime).
Eigen::MatrixXd model_cov(const ModelParams& params);

/// Functional regimes: (1/2n) sum_i [y_i^T Sigma_i^{-1} y_i + log|Sigma_i|],
/// evaluated through the Woodbury identity.
double neg_loglik(const ModelParams& params, const CurveDesigns& designs);

/// Matrix regime: tr(Gamma^{-1} S) + log|Gamma|.
double neg_loglik(const ModelParams& params, const Eigen::MatrixXd& sample_cov);

/// Dispatch on data.regime; the basis is ignored in the matrix regime.
double neg_loglik(const ModelParams& params, const Dataset& data, const OrthoBasis& basis);

/// KL divergence between N(0, Sigma) and N(0, Sigma_star), computed as
/// (1/2) sum (x - log(1 + x)) over eigenvalues x of
/// Sigma^{-1/2} (Sigma_star - Sigma) Sigma^{-1/2}.
double kl_divergence(const Eigen::MatrixXd& Sigma, const Eigen::MatrixXd& Sigma_star);

/// A covariance kernel on [0,1]^2. Spectral kernels sum_k w_k f_k(u) f_k(v)
/// are evaluated on grids through their feature maps.
class Kernel {
 public:
  using Features = std::function<Eigen::VectorXd(double)>;

  explicit Kernel(std::function<double(double, double)> fn);
  static Kernel spectral(Eigen::VectorXd weights, Features features);

  double operator()(double u, double v) const;
  /// K(nodes_i, nodes_j).
  Eigen::MatrixXd on_grid(const std::vector<double>& nodes) const;

 private:
  Kernel() = default;
  std::function<double(double, double)> fn_;
  Eigen::VectorXd weights_;
  Features features_;
};

/// sum_k lambda_k psi_k(u) psi_k(v) with psi = B^T phi.
Kernel kernel_from_params(const ModelParams& params, const OrthoBasis& basis);

/// Hilbert-Schmidt distance by 128 x 128 tensor Gauss-Legendre quadrature.
double kernel_l2_distance(const Kernel& k1, const Kernel& k2);

/// A true covariance kernel with finitely many orthonormal eigenfunctions.
struct TrueKernel {
  Eigen::VectorXd eigenvalues;
  /// Returns (psi_1(t), ..., psi_rbar(t)).
  Kernel::Features eigenfunctions;

  int rank() const { return static_cast<int>(eigenvalues.size()); }
  Kernel kernel() const { return Kernel::spectral(eigenvalues, eigenfunctions); }
};

struct OptimalParameter {
  ModelParams params;
  double beta = 0.0;  // ||truth - projected rank-r kernel||_HS
};

/// Best rank-r approximation of the truth within the span of the basis.
/// Throws DegenerateSpectrumError if eigenvalues tie (within 1e-10) at or
/// above the cut, or the r-th eigenvalue is not positive.
OptimalParameter optimal_parameter(const TrueKernel& truth, const OrthoBasis& basis, int r, double sigma2 = 1.0);

}  // namespace fpca
