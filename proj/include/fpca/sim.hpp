#pragma once

/**
 * @file sim.hpp
 * @brief Ground-truth generators, Monte Carlo rate and score experiments,
 *        KL-ellipsoid scans, design concentration and eigen-perturbation
 *        oracles.
 *
 * Every replicate draws from its own generator seeded with
 * counter_seed(base_seed, n, replicate), so cells can run in any order on
 * any number of threads and still produce identical tables.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fpca/bspline.hpp"
#include "fpca/matrixcase.hpp"
#include "fpca/model.hpp"
#include "fpca/optimizer.hpp"

namespace fpca {

/// Seed of replicate `replicate` at sample size n.
std::uint64_t replicate_seed(std::uint64_t base_seed, long n, int replicate);

enum class KernelFamily { Fourier, Spline };

KernelFamily parse_family(const std::string& name);
std::string family_name(KernelFamily family);

/// Fourier: psi = (sqrt2 sin 2 pi t, sqrt2 cos 2 pi t, sqrt2 sin 4 pi t, ...).
/// Spline: psi_k = sum_l V_lk phi_l in the orthonormal basis of size
/// reference_M, V the first columns of an orthonormalized DCT-IV pattern.
/// Throws std::invalid_argument unless eigenvalues are positive and strictly decreasing.
TrueKernel make_true_kernel(KernelFamily family, const Eigen::VectorXd& eigenvalues, int reference_M = 8);

struct MSpec {
  int m_min = 4;
  int m_max = 5;
};

/// Functional data: m_i uniform on {m_min..m_max}, T_ij ~ U[0,1],
/// X_i = sum_k sqrt(lambda_k) xi_ik psi_k, Y_ij = X_i(T_ij) + sigma eps_ij.
Dataset sample_functional(const TrueKernel& truth, Regime regime, long n, MSpec m, double sigma2,
                          std::uint64_t seed);

/// Matrix data: sample covariance of n draws of sqrt(s) B Lambda^{1/2} xi + sigma eps.
Dataset sample_matrix(const ModelParams& truth, long n, std::uint64_t seed);

enum class MSchedule { Fixed, Corollary1 };

struct ExperimentConfig {
  Regime regime = Regime::Sparse;
  std::vector<long> n_grid;
  MSchedule schedule = MSchedule::Fixed;
  double schedule_c = 2.0;  // M = round(c (n / log n)^{1/9})
  int fixed_M = 10;
  int min_M = 4;
  MSpec m;
  int replicates = 1;
  std::uint64_t base_seed = 0;
  // Functional truth.
  KernelFamily family = KernelFamily::Fourier;
  int reference_M = 8;
  Eigen::VectorXd eigenvalues;
  // Fitted rank (functional) or spike rank (matrix).
  int r = 1;
  double sigma2 = 1.0;
  double s = 1.0;
  FitConfig fit;
  int threads = 0;
  bool dry_run = false;  // score experiment: S replaced by Gamma*

  int M_for(long n) const;
  void validate() const;
};

/// Matrix-regime truth: B* from counter_seed(base_seed, 0, 0), canonicalized.
ModelParams matrix_truth(const ExperimentConfig& config);

struct RateRow {
  long n = 0;
  int replicate = 0;
  int M = 0;
  double loss_kernel = 0.0;    // functional: ||fit - truth||_HS
  double error_B = 0.0;        // ||B_hat - B*||_F after sign alignment
  double principal_angle = 0.0;// ||sin Theta||_F
  double error_lambda = 0.0;   // ||Lambda_hat - Lambda*||
  double beta = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct Slope {
  double slope = 0.0;
  double se = 0.0;
};

/// OLS slope of log y on log x with its standard error; absent if fewer
/// than two points (or no residual degrees of freedom for the SE, then se = 0).
std::optional<Slope> loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct RateResult {
  std::vector<RateRow> rows;  // ordered by (n, replicate)
  std::optional<Slope> slope_kernel;
  std::optional<Slope> slope_B;
  std::optional<Slope> slope_lambda;
  int excluded = 0;  // unconverged cells left out of the slopes
};

double median(std::vector<double> values);

RateResult rate_experiment(const ExperimentConfig& config);

struct ScoreRow {
  long n = 0;
  int replicate = 0;
  ScoreReport report;
};

/// Matrix regime, beta_n = 0; rows ordered by (n, replicate).
std::vector<ScoreRow> score_experiment(const ExperimentConfig& config);

struct KlRow {
  double alpha = 0.0;
  double min_ratio = 0.0;
  double median_ratio = 0.0;
  double max_ratio = 0.0;
  std::vector<double> ratios;  // K / alpha^2 per direction
};

/// Throws std::invalid_argument if some alpha sqrt(s / sigma^2) > 0.2.
std::vector<KlRow> kl_ellipsoid_scan(const ModelParams& theta_star, const std::vector<double>& alphas,
                                     int samples_per_alpha, std::uint64_t seed);

struct DesignStats {
  double max_R_dev = 0.0;    // max_i ||R_i - I_M||_2
  double max_BRB_dev = 0.0;  // max_i ||B*^T R_i B* - I_r||_2
};

/// R_i = (1/m) Phi_i Phi_i^T for n uniform designs of m points.
DesignStats design_concentration(const OrthoBasis& basis, int m, long n, const Eigen::MatrixXd& B_star,
                                 std::uint64_t seed);

struct InequalityReport {
  double weilandt_lhs = 0.0;  // sum |l_i(A) - l_i(A+B)|^2
  double weilandt_rhs = 0.0;  // ||B||_F^2
  std::vector<double> eigvec_lhs;  // ||q_j - p_j||
  std::vector<double> eigvec_rhs;  // 5 ||B|| tau_j + 4 (||B|| tau_j)^2
  int violations = 0;
};

/// Checks the Wielandt-Hoffman bound and the eigenvector perturbation bound
/// for every eigenvector of A (A + B eigenvectors sign-aligned to A's).
InequalityReport inequality_oracles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);

}  // namespace fpca
