#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fpca/linalg.hpp"
#include "fpca/matrixcase.hpp"
#include "fpca/optimizer.hpp"
#include "fpca/sim.hpp"
#include "oracles.hpp"

using namespace fpca;

namespace {

ModelParams spiked_truth(int M, int r, std::mt19937_64& rng, double sigma2 = 1.0, double s = 1.0) {
  Eigen::VectorXd lambda(r);
  for (int k = 0; k < r; ++k) lambda[k] = 8.0 / (k + 1);
  return canonicalize(ModelParams{StiefelPoint(oracle::orthonormal(M, r, rng)), lambda, sigma2, s});
}

double sign_aligned_distance(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd Ac = A;
  align_signs(Ac, B);
  return (Ac - B).norm();
}

bool nonincreasing_up_to_resolution(const std::vector<TraceRow>& trace) {
  for (std::size_t k = 1; k < trace.size(); ++k) {
    const double tol = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(trace[k - 1].loss));
    if (trace[k].loss > trace[k - 1].loss + tol) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("optimizer") {
  TEST_CASE("configuration validation") {
    FitConfig c;
    CHECK_NOTHROW(c.validate());
    c.grad_tol = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = FitConfig{};
    c.step_shrink = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = FitConfig{};
    c.init = InitKind::Given;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_init("pooled") == InitKind::Pooled);
    CHECK(parse_init("random") == InitKind::Random);
    CHECK_THROWS_AS(parse_init("magic"), std::invalid_argument);
  }

  TEST_CASE("pooled start on an exact model covariance is the truth") {
    std::mt19937_64 rng(1);
    const ModelParams truth = spiked_truth(10, 3, rng, 0.5, 2.0);
    const Dataset data = Dataset::matrix(sym_part(model_cov(truth)), 100);
    const ModelParams init = init_params(data, nullptr, 3, 0.5, 2.0);
    CHECK(sign_aligned_distance(init.B.matrix(), truth.B.matrix()) < 1e-8);
    CHECK((init.lambda - truth.lambda).norm() < 1e-8);
  }

  TEST_CASE("pooled start floors weak eigenvalues") {
    const Eigen::MatrixXd S = Eigen::Vector3d(3.0, 0.8, 0.5).asDiagonal();
    const ModelParams init = init_params(Dataset::matrix(S, 10), nullptr, 2, 1.0, 1.0);
    CHECK(init.lambda[0] == doctest::Approx(2.0));
    CHECK(init.lambda[1] == kInitLambdaFloor);
    CHECK_THROWS_AS(init_params(Dataset::matrix(S, 10), nullptr, 4, 1.0, 1.0), std::invalid_argument);
  }

  TEST_CASE("pooled start in the functional regime finds the signal subspace") {
    Eigen::VectorXd ev(2);
    ev << 2.0, 1.0;
    const TrueKernel truth = make_true_kernel(KernelFamily::Spline, ev, 8);
    const OrthoBasis basis = make_basis(8);
    const OptimalParameter opt = optimal_parameter(truth, basis, 2);
    const Dataset data = sample_functional(truth, Regime::Dense, 300, MSpec{20, 20}, 0.0, 3);
    const ModelParams init = init_params(data, &basis, 2, 0.01);
    CHECK(max_principal_angle(init.B.matrix(), opt.params.B.matrix()) < 0.1);
    CHECK_THROWS_AS(init_params(data, &basis, 9, 0.01), std::invalid_argument);
  }

  TEST_CASE("a step at a stationary point does not move") {
    std::mt19937_64 rng(2);
    const ModelParams truth = spiked_truth(6, 2, rng);
    const Dataset data = Dataset::matrix(sym_part(model_cov(truth)), 100);
    const Objective obj(data, nullptr, 1.0, 1.0);
    const StepResult sr = step(truth, obj, FitConfig{});
    CHECK((sr.params.B.matrix() - truth.B.matrix()).norm() < 1e-12);
    CHECK((sr.params.lambda - truth.lambda).norm() < 1e-12);
    CHECK(sr.loss <= obj.loss(truth) + 1e-12);
  }

  TEST_CASE("one Fisher scoring step from the truth approaches the PCA solution") {
    std::mt19937_64 rng(3);
    const ModelParams truth = spiked_truth(8, 2, rng);
    const Dataset data = sample_matrix(truth, 200000, 17);
    const ModelParams pca = pca_fit(data.sample_cov, 2);
    const Objective obj(data, nullptr, 1.0, 1.0);
    const StepResult sr = step(truth, obj, FitConfig{});
    const ModelParams next = canonicalize(sr.params);
    const double before = sign_aligned_distance(truth.B.matrix(), pca.B.matrix());
    const double after = sign_aligned_distance(next.B.matrix(), pca.B.matrix());
    CHECK(after < 1e-3);
    CHECK(after < 0.1 * before);
    CHECK((next.lambda - pca.lambda).cwiseAbs().maxCoeff() < 1e-3 * pca.lambda[0]);
  }

  TEST_CASE("steps keep the frame orthonormal and decrease the loss") {
    std::mt19937_64 rng(4);
    const ModelParams truth = spiked_truth(7, 2, rng);
    const Dataset data = sample_matrix(truth, 50, 5);
    const Objective obj(data, nullptr, 1.0, 1.0);
    ModelParams p{StiefelPoint(oracle::orthonormal(7, 2, rng)), Eigen::Vector2d(1.0, 0.5), 1.0, 1.0};
    double loss = obj.loss(p);
    for (int k = 0; k < 20; ++k) {
      const StepResult sr = step(p, obj, FitConfig{});
      CHECK(StiefelPoint::orthonormality_error(sr.params.B.matrix()) <= 1e-10);
      CHECK(sr.loss <= loss + 1e-12 * std::abs(loss));
      p = sr.params;
      loss = sr.loss;
    }
  }

  TEST_CASE("matrix fit reproduces PCA") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 5; ++trial) {
      const ModelParams truth = spiked_truth(12, 3, rng, 0.7, 1.5);
      const Dataset data = sample_matrix(truth, 400, 100 + trial);
      const FitResult fr = fit(data, nullptr, 3, 0.7, 1.5, FitConfig{});
      const ModelParams pca = pca_fit(data.sample_cov, 3, 1.5, 0.7);
      CHECK(fr.converged);
      CHECK((fr.params.B.matrix() - pca.B.matrix()).norm() < 1e-6);
      CHECK((fr.params.lambda - pca.lambda).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(nonincreasing_up_to_resolution(fr.trace));
    }
  }

  TEST_CASE("matrix fit from random starts reaches the same solution") {
    std::mt19937_64 rng(7);
    const ModelParams truth = spiked_truth(10, 2, rng);
    const Dataset data = sample_matrix(truth, 500, 8);
    FitConfig cfg;
    cfg.init = InitKind::Random;
    cfg.seed = 42;
    cfg.restarts = 4;
    const FitResult fr = fit(data, nullptr, 2, 1.0, 1.0, cfg);
    const ModelParams pca = pca_fit(data.sample_cov, 2);
    CHECK(fr.converged);
    CHECK((fr.params.B.matrix() - pca.B.matrix()).norm() < 1e-6);
    CHECK((fr.params.lambda - pca.lambda).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("starting at the PCA solution is stationary") {
    std::mt19937_64 rng(8);
    const ModelParams truth = spiked_truth(9, 2, rng);
    const Dataset data = sample_matrix(truth, 300, 9);
    const ModelParams pca = pca_fit(data.sample_cov, 2);
    FitConfig cfg;
    cfg.init = InitKind::Given;
    cfg.start = pca;
    const FitResult fr = fit(data, nullptr, 2, 1.0, 1.0, cfg);
    CHECK(fr.iterations <= 1);
    CHECK((fr.params.B.matrix() - pca.B.matrix()).norm() < 1e-10);
    CHECK((fr.params.lambda - pca.lambda).norm() < 1e-10);
  }

  TEST_CASE("given start with wrong dimensions is rejected") {
    std::mt19937_64 rng(9);
    const ModelParams truth = spiked_truth(6, 2, rng);
    FitConfig cfg;
    cfg.init = InitKind::Given;
    cfg.start = truth;
    CHECK_THROWS_AS(fit(sample_matrix(truth, 50, 1), nullptr, 3, 1.0, 1.0, cfg), std::invalid_argument);
  }

  TEST_CASE("functional fit improves on its starting value") {
    Eigen::VectorXd ev(2);
    ev << 1.0, 0.4;
    const TrueKernel truth = make_true_kernel(KernelFamily::Spline, ev, 6);
    const OrthoBasis basis = make_basis(6);
    const Kernel k_true = truth.kernel();
    std::vector<double> ratios;
    int converged = 0;
    for (int seed = 0; seed < 20; ++seed) {
      const Dataset data = sample_functional(truth, Regime::Sparse, 200, MSpec{4, 5}, 0.1, 1000 + seed);
      const ModelParams init = init_params(data, &basis, 2, 0.1);
      const FitResult fr = fit(data, &basis, 2, 0.1, 1.0, FitConfig{});
      converged += fr.converged;
      CHECK(nonincreasing_up_to_resolution(fr.trace));
      CHECK(fr.final_loss <= neg_loglik(init, data, basis));
      CHECK(StiefelPoint::orthonormality_error(fr.params.B.matrix()) <= 1e-10);
      ratios.push_back(kernel_l2_distance(kernel_from_params(fr.params, basis), k_true) /
                       kernel_l2_distance(kernel_from_params(init, basis), k_true));
    }
    CHECK(median(ratios) <= 0.5);
    CHECK(converged >= 18);
  }

  TEST_CASE("output is canonicalized") {
    std::mt19937_64 rng(10);
    const ModelParams truth = spiked_truth(8, 3, rng);
    const FitResult fr = fit(sample_matrix(truth, 200, 4), nullptr, 3, 1.0, 1.0, FitConfig{});
    for (int k = 0; k < 3; ++k) {
      if (k > 0) CHECK(fr.params.lambda[k] < fr.params.lambda[k - 1]);
      Eigen::Index idx;
      fr.params.B.matrix().col(k).cwiseAbs().maxCoeff(&idx);
      CHECK(fr.params.B.matrix()(idx, k) > 0.0);
    }
  }

  TEST_CASE("fits are deterministic across thread counts") {
    Eigen::VectorXd ev(2);
    ev << 1.0, 0.4;
    const TrueKernel truth = make_true_kernel(KernelFamily::Spline, ev, 6);
    const OrthoBasis basis = make_basis(6);
    const Dataset data = sample_functional(truth, Regime::Sparse, 150, MSpec{4, 5}, 0.1, 77);
    FitConfig cfg;
    cfg.init = InitKind::Random;
    cfg.seed = 5;
    cfg.restarts = 3;
    cfg.threads = 1;
    const FitResult a = fit(data, &basis, 2, 0.1, 1.0, cfg);
    cfg.threads = 4;
    const FitResult b = fit(data, &basis, 2, 0.1, 1.0, cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) {
      CHECK(a.trace[k].loss == b.trace[k].loss);
      CHECK(a.trace[k].grad_norm == b.trace[k].grad_norm);
      CHECK(a.trace[k].step == b.trace[k].step);
    }
    CHECK(a.params.B.matrix() == b.params.B.matrix());
    CHECK(a.params.lambda == b.params.lambda);
  }

  TEST_CASE("iteration limit reports non-convergence") {
    std::mt19937_64 rng(11);
    const ModelParams truth = spiked_truth(8, 2, rng);
    FitConfig cfg;
    cfg.init = InitKind::Random;
    cfg.restarts = 1;
    cfg.max_iter = 1;
    cfg.grad_tol = 1e-14;
    const FitResult fr = fit(sample_matrix(truth, 100, 3), nullptr, 2, 1.0, 1.0, cfg);
    CHECK_FALSE(fr.converged);
    CHECK(fr.iterations <= 1);
  }
}
