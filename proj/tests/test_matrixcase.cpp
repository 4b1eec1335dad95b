#include <doctest.h>

#include <cmath>
#include <random>

#include "fpca/linalg.hpp"
#include "fpca/matrixcase.hpp"
#include "fpca/sim.hpp"
#include "oracles.hpp"

using namespace fpca;

namespace {

ModelParams spiked(int M, int r, std::mt19937_64& rng, double sigma2 = 1.0, double s = 1.0) {
  Eigen::VectorXd lambda(r);
  for (int k = 0; k < r; ++k) lambda[k] = 10.0 / (k + 1);
  return canonicalize(ModelParams{StiefelPoint(oracle::orthonormal(M, r, rng)), lambda, sigma2, s});
}

Eigen::VectorXd sorted_eigs(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
  return eig.eigenvalues().reverse();
}

}  // namespace

TEST_SUITE("matrixcase") {
  TEST_CASE("PCA on a diagonal matrix") {
    const Eigen::MatrixXd S = Eigen::Vector3d(3.0, 2.0, 1.0).asDiagonal();
    const ModelParams p = pca_fit(S, 1);
    CHECK((p.B.matrix() - Eigen::Vector3d(1, 0, 0)).norm() < 1e-14);
    CHECK(p.lambda[0] == doctest::Approx(2.0).epsilon(1e-14));
  }

  TEST_CASE("PCA recovers the truth from its own covariance") {
    std::mt19937_64 rng(1);
    const ModelParams truth = spiked(9, 3, rng, 0.6, 2.0);
    const ModelParams p = pca_fit(sym_part(model_cov(truth)), 3, 2.0, 0.6);
    CHECK((p.B.matrix() - truth.B.matrix()).norm() < 1e-12);
    CHECK((p.lambda - truth.lambda).norm() < 1e-12);
    CHECK(p.sigma2 == 0.6);
    CHECK(p.s == 2.0);
  }

  TEST_CASE("PCA error conditions") {
    const Eigen::MatrixXd weak = Eigen::Vector3d(1.0, 0.5, 0.2).asDiagonal();
    CHECK_THROWS_AS(pca_fit(weak, 1), SignalTooWeakError);
    const Eigen::MatrixXd tied = Eigen::Vector3d(3.0, 3.0, 1.0).asDiagonal();
    CHECK_THROWS_AS(pca_fit(tied, 1), DegenerateSpectrumError);
    CHECK_THROWS_AS(pca_fit(tied, 2), DegenerateSpectrumError);
    CHECK_THROWS_AS(pca_fit(weak, 4), std::invalid_argument);
  }

  TEST_CASE("PCA reconstruction shares the leading eigenpairs") {
    std::mt19937_64 rng(2);
    const ModelParams truth = spiked(8, 2, rng);
    const Dataset data = sample_matrix(truth, 300, 3);
    const ModelParams p = pca_fit(data.sample_cov, 2);
    CHECK_NOTHROW(p.validate());
    const Eigen::VectorXd a = sorted_eigs(model_cov(p)), b = sorted_eigs(data.sample_cov);
    CHECK((a.head(2) - b.head(2)).norm() < 1e-10);
    const ModelParams q = pca_fit(sym_part(model_cov(p)), 2);
    CHECK((q.B.matrix() - p.B.matrix()).norm() < 1e-10);
  }

  TEST_CASE("REML equals PCA on spiked instances") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const ModelParams truth = spiked(20, 3, rng);
      const Dataset data = sample_matrix(truth, 200, 50 + trial);
      const EquivalenceReport rep = reml_equals_pca(data.sample_cov, 3, 1.0, 1.0, FitConfig{});
      CHECK(rep.grad_norm_B < 1e-10);
      CHECK(rep.grad_norm_zeta < 1e-10);
      CHECK(rep.distance_B < 1e-6);
      CHECK(rep.distance_lambda < 1e-6);
      CHECK(rep.converged);
    }
    const Eigen::MatrixXd tied = Eigen::Vector3d(3.0, 3.0, 1.0).asDiagonal();
    CHECK_THROWS_AS(reml_equals_pca(tied, 1, 1.0, 1.0, FitConfig{}), DegenerateSpectrumError);
  }

  TEST_CASE("gamma_n") {
    CHECK(gamma_n(20, 256, 0.0) == std::sqrt(20.0 / 256.0));
    CHECK(gamma_n(2, 10000, 0.0) == std::sqrt(std::log(10000.0) / 10000.0));
    CHECK(gamma_n(2, 10000, 0.5) == 0.5);
  }

  TEST_CASE("score residual vanishes at the truth") {
    std::mt19937_64 rng(4);
    const ModelParams truth = spiked(10, 2, rng);
    const ScoreReport rep = score_residual(truth, sym_part(model_cov(truth)), 100, 0.0);
    CHECK(rep.residual_B < 1e-10);
    CHECK(rep.residual_lambda < 1e-10);
    CHECK(rep.error_B < 1e-10);
    CHECK(rep.error_lambda < 1e-10);
    CHECK(rep.gamma_n == std::sqrt(10.0 / 100.0));
  }

  TEST_CASE("eigenvalue residual matches an independent computation") {
    std::mt19937_64 rng(5);
    const ModelParams truth = spiked(7, 3, rng);
    const Eigen::MatrixXd& B = truth.B.matrix();
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd S = sample_matrix(truth, 500, 10 + trial).sample_cov;
      const ScoreReport rep = score_residual(truth, S, 500, 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
      const Eigen::VectorXd lhat = (eig.eigenvalues().reverse().head(3).array() - 1.0).matrix();
      const Eigen::VectorXd delta = (B.transpose() * S * B).diagonal() - (1.0 + truth.lambda.array()).matrix();
      CHECK(rep.residual_lambda == doctest::Approx((lhat - truth.lambda - delta).norm()).epsilon(1e-8));
      CHECK(rep.error_lambda == doctest::Approx((lhat - truth.lambda).norm()).epsilon(1e-8));
      CHECK(rep.route_gap < 1e-10);
    }
  }

  TEST_CASE("score residual is second order") {
    std::mt19937_64 rng(6);
    const ModelParams truth = spiked(10, 2, rng);
    const Eigen::MatrixXd G = sym_part(model_cov(truth));
    const Eigen::MatrixXd E = oracle::gaussian(10, 10, rng);
    const Eigen::MatrixXd D = E + E.transpose();
    const ScoreReport a = score_residual(truth, G + 1e-3 * D, 100, 0.0);
    const ScoreReport b = score_residual(truth, G + 5e-4 * D, 100, 0.0);
    CHECK(a.residual_B / b.residual_B == doctest::Approx(4.0).epsilon(0.05));
    CHECK(a.residual_lambda / b.residual_lambda == doctest::Approx(4.0).epsilon(0.05));
    CHECK(a.error_B / b.error_B == doctest::Approx(2.0).epsilon(0.05));
  }

  TEST_CASE("general-scale score residual equals the normalized one") {
    std::mt19937_64 rng(7);
    const ModelParams truth = spiked(8, 2, rng, 0.5, 2.0);
    const Eigen::MatrixXd S = sample_matrix(truth, 400, 3).sample_cov;
    const ScoreReport general = score_residual(truth, S, 400, 0.0);
    const NormalizedProblem np = normalize(truth, S);
    const ScoreReport normalized = score_residual(np.theta, np.S, 400, 0.0);
    CHECK(general.residual_B == doctest::Approx(normalized.residual_B).epsilon(1e-10));
    CHECK(general.residual_lambda == doctest::Approx(normalized.residual_lambda).epsilon(1e-10));
  }

  TEST_CASE("sample eigenvalues obey the Wielandt bound") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      const ModelParams truth = spiked(6 + trial % 10, 1 + trial % 3, rng);
      const Eigen::MatrixXd G = model_cov(truth);
      const Eigen::MatrixXd S = sample_matrix(truth, 50 + 10 * trial, trial).sample_cov;
      const Eigen::VectorXd a = sorted_eigs(S), b = sorted_eigs(G);
      CHECK((a - b).cwiseAbs().maxCoeff() <= (S - G).norm() + 1e-12);
      CHECK((a - b).squaredNorm() <= (S - G).squaredNorm() * (1 + 1e-12));
    }
  }
}
