#pragma once

/**
 * @file bspline.hpp
 * @brief Orthonormalized cubic B-spline basis on [0, 1].
 *
 * The raw basis uses clamped knots (multiplicity 4 at both ends) with M-3
 * equal interior subintervals. Orthonormal functions are obtained as
 *
 *     phi(t) = G^{-1/2} phi_raw(t),   G_kl = int phi_raw_k phi_raw_l,
 *
 * with the symmetric inverse square root. The Gram matrix is integrated
 * exactly (4-point Gauss-Legendre on each knot interval is exact for the
 * degree-6 products).
 */

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fpca {

/// Raw (non-orthonormal) cubic B-splines with clamped uniform knots.
class RawSplineBasis {
 public:
  static constexpr int kDegree = 3;

  explicit RawSplineBasis(int M);

  int size() const { return M_; }
  const std::vector<double>& knots() const { return knots_; }
  /// Distinct knot values 0 = u_0 < ... < u_{M-3} = 1.
  std::vector<double> breakpoints() const;

  /// Values of all M raw B-splines at t in [0, 1] (Cox-de Boor).
  Eigen::VectorXd eval(double t) const;

  /// Index of the first of the (at most four) nonzero splines at t, and
  /// their values written to vals[0..3].
  int eval_local(double t, double vals[4]) const;

 private:
  int M_;
  std::vector<double> knots_;
};

/// Orthonormalized basis phi = G^{-1/2} phi_raw. Immutable after construction.
class OrthoBasis {
 public:
  const RawSplineBasis& raw() const { return raw_; }
  int size() const { return raw_.size(); }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::MatrixXd& gram_inv_sqrt() const { return gram_inv_sqrt_; }

 private:
  friend OrthoBasis make_basis(int M);
  explicit OrthoBasis(int M) : raw_(M) {}

  RawSplineBasis raw_;
  Eigen::MatrixXd gram_;
  Eigen::MatrixXd gram_inv_sqrt_;
};

/// Builds the orthonormal basis of size M. Throws std::invalid_argument if M < 4.
OrthoBasis make_basis(int M);

/// phi(t). Throws std::domain_error for t outside [0, 1].
Eigen::VectorXd eval_basis(const OrthoBasis& basis, double t);

/// M x m matrix whose j-th column is phi(times[j]).
Eigen::MatrixXd design_matrix(const OrthoBasis& basis, std::span<const double> times);

/// Coefficients <f, phi_k> by composite Gauss-Legendre (32 points per knot interval).
Eigen::VectorXd project_function(const OrthoBasis& basis,
                                 const std::function<double(double)>& f);

/// Evaluates sum_k coef_k phi_k(t).
double eval_expansion(const OrthoBasis& basis, const Eigen::VectorXd& coef, double t);

/// max over an evenly spaced grid of sum_k phi_k(t)^2 / M.
double max_sum_squares_over_M(const OrthoBasis& basis, int grid = 10000);

}  // namespace fpca
