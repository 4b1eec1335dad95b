#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "fpca/stiefel.hpp"
#include "oracles.hpp"

using namespace fpca;

namespace {

StiefelPoint random_point(int M, int r, std::mt19937_64& rng) { return StiefelPoint(oracle::orthonormal(M, r, rng)); }

Eigen::MatrixXd e1(int M) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(M, 1);
  B(0, 0) = 1.0;
  return B;
}

}  // namespace

TEST_SUITE("stiefel") {
  TEST_CASE("construction accepts, repairs or rejects") {
    std::mt19937_64 rng(1);
    Eigen::MatrixXd B = oracle::orthonormal(6, 3, rng);
    CHECK(StiefelPoint(B).matrix() == B);
    Eigen::MatrixXd near = B;
    near(0, 0) += 1e-8;
    CHECK(StiefelPoint::orthonormality_error(StiefelPoint(near).matrix()) <= 1e-12);
    Eigen::MatrixXd far = B;
    far(0, 0) += 1e-3;
    CHECK_THROWS_AS(StiefelPoint{far}, std::invalid_argument);
    CHECK_THROWS_AS(StiefelPoint{Eigen::MatrixXd::Identity(2, 3)}, std::invalid_argument);
  }

  TEST_CASE("tangent vector storage keeps A skew and C normal") {
    std::mt19937_64 rng(2);
    const StiefelPoint B = random_point(7, 3, rng);
    const TangentVector U(B, oracle::gaussian(3, 3, rng), oracle::gaussian(7, 3, rng));
    const Eigen::MatrixXd A = U.A();
    CHECK((A + A.transpose()).norm() == 0.0);
    CHECK((B.matrix().transpose() * U.C()).norm() < 1e-12);
  }

  TEST_CASE("tangent projection") {
    std::mt19937_64 rng(3);
    const StiefelPoint B = random_point(5, 2, rng);
    const Eigen::MatrixXd Z = oracle::gaussian(5, 2, rng);
    const TangentVector U = tangent_project(B, Z);
    const Eigen::MatrixXd BtU = B.matrix().transpose() * U.full();
    CHECK((BtU + BtU.transpose()).norm() < 1e-12);
    CHECK((tangent_project(B, U.full()).full() - U.full()).norm() < 1e-12);
    CHECK(tangent_project(B, B.matrix()).full().norm() < 1e-12);
    const Eigen::MatrixXd sym = 0.5 * (B.matrix().transpose() * Z + Z.transpose() * B.matrix());
    CHECK((U.full() - (Z - B.matrix() * sym)).norm() < 1e-12);
    CHECK_THROWS_AS(tangent_project(B, Eigen::MatrixXd::Zero(4, 2)), std::invalid_argument);
  }

  TEST_CASE("split and reconstruct") {
    std::mt19937_64 rng(4);
    const StiefelPoint B = random_point(6, 3, rng);
    const TangentVector U = oracle::random_tangent(B, rng);
    const auto [A, C] = split_tangent(U);
    CHECK((B.matrix() * A + C - U.full()).norm() < 1e-12);
    const TangentVector onlyA(B, U.A(), Eigen::MatrixXd::Zero(6, 3));
    CHECK(split_tangent(onlyA).second.norm() < 1e-12);
    const TangentVector onlyC(B, Eigen::MatrixXd::Zero(3, 3), U.C());
    CHECK(split_tangent(onlyC).first.norm() < 1e-12);
  }

  TEST_CASE("skew exponential") {
    CHECK((skew_exp(Eigen::MatrixXd::Zero(4, 4)) - Eigen::MatrixXd::Identity(4, 4)).norm() == 0.0);
    for (double th : {0.1, 1.0, 2.5, 7.0, 40.0}) {
      Eigen::MatrixXd S(2, 2);
      S << 0, -th, th, 0;
      Eigen::MatrixXd R(2, 2);
      R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
      CHECK((skew_exp(S) - R).norm() < 1e-12);
    }
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 2 + trial % 8;
      const Eigen::MatrixXd G = oracle::gaussian(n, n, rng) * (0.2 + trial % 5);
      const Eigen::MatrixXd S = G - G.transpose();
      const Eigen::MatrixXd Q = skew_exp(S);
      CHECK((Q.transpose() * Q - Eigen::MatrixXd::Identity(n, n)).norm() < 1e-12);
      CHECK((Q - oracle::expm_series(S)).norm() < 1e-10 * (1.0 + S.norm()));
    }
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
    bad(0, 1) = 1.0;
    CHECK_THROWS_AS(skew_exp(bad), std::invalid_argument);
  }

  TEST_CASE("exponential map basics") {
    std::mt19937_64 rng(6);
    const StiefelPoint B = random_point(5, 2, rng);
    const TangentVector U = oracle::random_tangent(B, rng);
    CHECK((exp_map(U, 0.0).matrix() - B.matrix()).norm() == 0.0);
    CHECK((exp_map(TangentVector::zero(B)).matrix() - B.matrix()).norm() == 0.0);
  }

  TEST_CASE("exponential map rotation case") {
    const StiefelPoint B(e1(2));
    for (double th : {0.3, 1.2, 3.0}) {
      Eigen::MatrixXd C(2, 1);
      C << 0, th;
      const StiefelPoint Y = exp_map(TangentVector(B, Eigen::MatrixXd::Zero(1, 1), C));
      CHECK(std::abs(Y.matrix()(0, 0) - std::cos(th)) < 1e-12);
      CHECK(std::abs(Y.matrix()(1, 0) - std::sin(th)) < 1e-12);
    }
  }

  TEST_CASE("exponential map matches the dense geodesic formula") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
      const int M = 3 + trial % 6, r = 1 + trial % 3;
      if (r > M) continue;
      const StiefelPoint B = random_point(M, r, rng);
      const TangentVector U = oracle::random_tangent(B, rng);
      const double t = 0.1 + 0.3 * (trial % 4);
      const Eigen::MatrixXd ref = oracle::geodesic(B.matrix(), U.full(), t);
      CHECK((exp_map(U, t).matrix() - ref).norm() < 1e-10);
    }
  }

  TEST_CASE("exponential map handles a rank-deficient normal part") {
    std::mt19937_64 rng(8);
    const StiefelPoint B = random_point(6, 3, rng);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(6, 3);
    const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(6, 6) - B.matrix() * B.matrix().transpose();
    const Eigen::VectorXd v = Pi * oracle::gaussian(6, 1, rng);
    C.col(0) = v;
    C.col(2) = 2.0 * v;
    const TangentVector U(B, oracle::gaussian(3, 3, rng), C);
    const StiefelPoint Y = exp_map(U, 0.7);
    CHECK(StiefelPoint::orthonormality_error(Y.matrix()) <= 1e-10);
    CHECK((Y.matrix() - oracle::geodesic(B.matrix(), U.full(), 0.7)).norm() < 1e-10);
  }

  TEST_CASE("exponential map stays on the manifold") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ut(-3.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const int M = 2 + trial % 15;
      const int r = 1 + trial % std::min(M, 5);
      const StiefelPoint B = random_point(M, r, rng);
      const StiefelPoint Y = exp_map(oracle::random_tangent(B, rng), ut(rng));
      CHECK(StiefelPoint::orthonormality_error(Y.matrix()) <= 1e-10);
    }
  }

  TEST_CASE("first-order expansion residuals are quadratic") {
    std::mt19937_64 rng(10);
    const StiefelPoint B = random_point(8, 3, rng);
    const TangentVector U = oracle::random_tangent(B, rng);
    const Eigen::MatrixXd& Bm = B.matrix();
    const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(8, 8) - Bm * Bm.transpose();
    auto residuals = [&](double scale) {
      const TangentVector V = U.scaled(scale);
      const Eigen::MatrixXd Y = exp_map(V).matrix();
      const double r1 = (Bm.transpose() * (Y - Bm) - Bm.transpose() * V.full()).norm();
      const double r2 = (Pi * Y - Pi * V.full()).norm();
      return std::pair{r1, r2};
    };
    for (double scale : {1e-2, 5e-3, 2.5e-3}) {
      const auto [a1, a2] = residuals(scale);
      const auto [b1, b2] = residuals(scale / 2);
      CHECK(a1 / b1 == doctest::Approx(4.0).epsilon(0.25));
      CHECK(a2 / b2 == doctest::Approx(4.0).epsilon(0.25));
    }
  }

  TEST_CASE("canonical inner product") {
    std::mt19937_64 rng(11);
    const StiefelPoint B = random_point(6, 3, rng);
    const TangentVector U = oracle::random_tangent(B, rng);
    const TangentVector V = oracle::random_tangent(B, rng);
    const TangentVector onlyC(B, Eigen::MatrixXd::Zero(3, 3), U.C());
    CHECK(canonical_inner(onlyC, onlyC) == doctest::Approx(U.C().squaredNorm()).epsilon(1e-13));
    const TangentVector onlyA(B, U.A(), Eigen::MatrixXd::Zero(6, 3));
    CHECK(canonical_inner(onlyA, onlyA) == doctest::Approx(0.5 * U.A().squaredNorm()).epsilon(1e-13));
    CHECK(canonical_inner(U.scaled(2.0), U.scaled(2.0)) == doctest::Approx(4.0 * canonical_inner(U, U)).epsilon(1e-13));
    CHECK(canonical_inner(U, V) == doctest::Approx(canonical_inner(V, U)).epsilon(1e-13));
    const Eigen::MatrixXd W = Eigen::MatrixXd::Identity(6, 6) - 0.5 * B.matrix() * B.matrix().transpose();
    CHECK(canonical_inner(U, V) == doctest::Approx((U.full().transpose() * W * V.full()).trace()).epsilon(1e-12));
    const StiefelPoint other = random_point(6, 3, rng);
    CHECK_THROWS_AS(canonical_inner(U, TangentVector::zero(other)), std::invalid_argument);
  }

  TEST_CASE("canonical inner product is positive definite") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
      const int M = 2 + trial % 9, r = 1 + trial % std::min(M, 4);
      const StiefelPoint B = random_point(M, r, rng);
      const TangentVector U = oracle::random_tangent(B, rng);
      if (U.full().norm() > 0.0) CHECK(canonical_inner(U, U) > 0.0);
    }
  }

  TEST_CASE("product inner product") {
    std::mt19937_64 rng(13);
    const StiefelPoint B = random_point(5, 2, rng);
    const TangentVector U = oracle::random_tangent(B, rng);
    const TangentVector V = oracle::random_tangent(B, rng);
    const Eigen::VectorXd a = oracle::gaussian(2, 1, rng), b = oracle::gaussian(2, 1, rng);
    const TangentVector Z = TangentVector::zero(B);
    CHECK(product_inner({Z, a}, {Z, b}) == doctest::Approx(a.dot(b)).epsilon(1e-14));
    CHECK(product_inner({U, Eigen::VectorXd::Zero(2)}, {V, Eigen::VectorXd::Zero(2)}) ==
          doctest::Approx(canonical_inner(U, V)).epsilon(1e-14));
    CHECK(std::abs(product_inner({U, a}, {V, b}) - canonical_inner(U, V) - a.dot(b)) < 1e-14);
  }

  TEST_CASE("intrinsic gradient") {
    const StiefelPoint B(e1(2));
    Eigen::MatrixXd F(2, 1);
    F << 0, 1;
    const TangentVector g = intrinsic_grad(B, F);
    CHECK(std::abs(g.full()(0, 0)) < 1e-15);
    CHECK(g.full()(1, 0) == doctest::Approx(1.0));
    std::mt19937_64 rng(14);
    const StiefelPoint P = random_point(6, 3, rng);
    CHECK(intrinsic_grad(P, P.matrix()).full().norm() < 1e-12);
  }

  TEST_CASE("intrinsic gradient duality with geodesic differences") {
    std::mt19937_64 rng(15);
    const StiefelPoint B = random_point(7, 3, rng);
    const Eigen::MatrixXd Tm = oracle::gaussian(7, 3, rng);
    const Eigen::MatrixXd Sq = oracle::random_spd(7, rng);
    // f(B) = tr(T^T B) + tr(B^T S B) / 2, Euclidean gradient T + S B.
    auto f = [&](const Eigen::MatrixXd& X) { return (Tm.transpose() * X).trace() + 0.5 * (X.transpose() * Sq * X).trace(); };
    const TangentVector g = intrinsic_grad(B, Tm + Sq * B.matrix());
    for (int k = 0; k < 5; ++k) {
      const TangentVector Y = oracle::random_tangent(B, rng);
      const double fd = oracle::central_diff([&](double h) { return f(exp_map(Y, h).matrix()); }, 1e-5);
      CHECK(oracle::rel_err(canonical_inner(g, Y), fd) < 1e-6);
    }
  }
}
