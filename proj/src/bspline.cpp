#include "fpca/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fpca/quadrature.hpp"

namespace fpca {

RawSplineBasis::RawSplineBasis(int M) : M_(M) {
  if (M < 4) throw std::invalid_argument("basis size M must be >= 4, got " + std::to_string(M));
  const int intervals = M - 3;
  knots_.reserve(M + 4);
  for (int k = 0; k < 4; ++k) knots_.push_back(0.0);
  for (int k = 1; k < intervals; ++k) knots_.push_back(static_cast<double>(k) / intervals);
  for (int k = 0; k < 4; ++k) knots_.push_back(1.0);
}

std::vector<double> RawSplineBasis::breakpoints() const {
  std::vector<double> out(knots_.begin() + 3, knots_.end() - 3);
  return out;
}

int RawSplineBasis::eval_local(double t, double vals[4]) const {
  // Span index i with knots[i] <= t < knots[i+1]; the right end belongs to
  // the last nonempty span.
  const int intervals = M_ - 3;
  int span = static_cast<int>(std::floor(t * intervals));
  span = std::clamp(span, 0, intervals - 1);
  const int i = span + 3;

  double left[4], right[4];
  vals[0] = 1.0;
  for (int j = 1; j <= kDegree; ++j) {
    left[j] = t - knots_[i + 1 - j];
    right[j] = knots_[i + j] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = vals[r] / (right[r + 1] + left[j - r]);
      vals[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    vals[j] = saved;
  }
  return i - kDegree;
}

Eigen::VectorXd RawSplineBasis::eval(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("spline evaluation point outside [0,1]: " + std::to_string(t));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(M_);
  double vals[4];
  const int first = eval_local(t, vals);
  for (int k = 0; k < 4; ++k) out[first + k] = vals[k];
  return out;
}

OrthoBasis make_basis(int M) {
  OrthoBasis basis(M);
  const RawSplineBasis& raw = basis.raw_;
  const auto breaks = raw.breakpoints();
  const QuadratureRule rule = composite_gauss_legendre(breaks, 4);

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(M, M);
  double vals[4];
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const int first = raw.eval_local(rule.nodes[q], vals);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) gram(first + a, first + b) += rule.weights[q] * vals[a] * vals[b];
  }
  gram = 0.5 * (gram + gram.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd root = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  basis.gram_ = std::move(gram);
  basis.gram_inv_sqrt_ = 0.5 * (root + root.transpose());
  return basis;
}

Eigen::VectorXd eval_basis(const OrthoBasis& basis, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("basis evaluation point outside [0,1]: " + std::to_string(t));
  double vals[4];
  const int first = basis.raw().eval_local(t, vals);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.size());
  for (int k = 0; k < 4; ++k) out.noalias() += vals[k] * basis.gram_inv_sqrt().col(first + k);
  return out;
}

Eigen::MatrixXd design_matrix(const OrthoBasis& basis, std::span<const double> times) {
  if (times.empty()) throw std::invalid_argument("design_matrix: empty time vector");
  Eigen::MatrixXd phi(basis.size(), static_cast<Eigen::Index>(times.size()));
  for (std::size_t j = 0; j < times.size(); ++j) phi.col(static_cast<Eigen::Index>(j)) = eval_basis(basis, times[j]);
  return phi;
}

Eigen::VectorXd project_function(const OrthoBasis& basis, const std::function<double(double)>& f) {
  const auto breaks = basis.raw().breakpoints();
  const QuadratureRule rule = composite_gauss_legendre(breaks, 32);
  Eigen::VectorXd raw_coef = Eigen::VectorXd::Zero(basis.size());
  double vals[4];
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const double fw = rule.weights[q] * f(rule.nodes[q]);
    const int first = basis.raw().eval_local(rule.nodes[q], vals);
    for (int k = 0; k < 4; ++k) raw_coef[first + k] += fw * vals[k];
  }
  return basis.gram_inv_sqrt() * raw_coef;
}

double eval_expansion(const OrthoBasis& basis, const Eigen::VectorXd& coef, double t) {
  return eval_basis(basis, t).dot(coef);
}

double max_sum_squares_over_M(const OrthoBasis& basis, int grid) {
  double best = 0.0;
  for (int g = 0; g < grid; ++g) {
    const double t = static_cast<double>(g) / (grid - 1);
    best = std::max(best, eval_basis(basis, t).squaredNorm());
  }
  return best / basis.size();
}

}  // namespace fpca
