#include "fpca/calculus.hpp"

#include <cmath>
#include <string>

#include "woodbury.hpp"

namespace fpca {

namespace {

// Q^{-1} = Lambda (I + Lambda)^{-1} as a vector.
Eigen::VectorXd q_inv(const Eigen::VectorXd& lambda) {
  return (lambda.array() / (1.0 + lambda.array())).matrix();
}

void check_theta(const ProductPoint& theta, const Eigen::MatrixXd& S) {
  const int M = theta.B.ambient_dim();
  if (S.rows() != M || S.cols() != M) throw std::invalid_argument("covariance size does not match B");
  if (theta.zeta.size() != theta.B.rank()) throw std::invalid_argument("zeta size does not match rank");
}

void check_gaps(const Eigen::VectorXd& lambda) {
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    for (Eigen::Index j = i + 1; j < lambda.size(); ++j)
      if (std::abs(lambda[i] - lambda[j]) <= kEigenGapThreshold)
        throw DegenerateSpectrumError("eigenvalues " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                                      " are closer than the gap threshold");
}

}  // namespace

double GradPair::norm() const {
  return std::sqrt(canonical_inner(grad_B, grad_B) + grad_zeta.squaredNorm());
}

NormalizedProblem normalize(const ModelParams& params, const Eigen::MatrixXd& S) {
  const Eigen::VectorXd lambda = params.lambda * (params.s / params.sigma2);
  return {ProductPoint{params.B, lambda.array().log().matrix()}, S / params.sigma2};
}

TangentVector grad_B(const ProductPoint& theta, const Eigen::MatrixXd& S) {
  check_theta(theta, S);
  const Eigen::MatrixXd& B = theta.B.matrix();
  const Eigen::VectorXd q = q_inv(theta.lambda());
  const Eigen::MatrixXd SBQ = S * B * q.asDiagonal();
  const Eigen::MatrixXd G = 2.0 * (B * q.asDiagonal() * (B.transpose() * S * B) - SBQ);
  return TangentVector(theta.B, B.transpose() * G, G);
}

Eigen::VectorXd grad_zeta(const ProductPoint& theta, const Eigen::MatrixXd& S) {
  check_theta(theta, S);
  const Eigen::MatrixXd& B = theta.B.matrix();
  const Eigen::ArrayXd l = theta.lambda().array();
  const Eigen::ArrayXd bsb = (B.transpose() * S * B).diagonal().array();
  return (l / (1.0 + l).square() * (1.0 + l - bsb)).matrix();
}

double hessian_B_bilinear(const ProductPoint& theta, const Eigen::MatrixXd& S, const TangentVector& X,
                          const TangentVector& Y) {
  check_theta(theta, S);
  const Eigen::MatrixXd& B = theta.B.matrix();
  if ((X.base().matrix() - B).norm() > 1e-12 || (Y.base().matrix() - B).norm() > 1e-12)
    throw std::invalid_argument("hessian_B_bilinear: tangent vectors are not based at theta");
  const Eigen::VectorXd q = q_inv(theta.lambda());
  const Eigen::MatrixXd Xf = X.full();
  const Eigen::MatrixXd Yf = Y.full();
  const Eigen::MatrixXd FB = -2.0 * S * B * q.asDiagonal();
  const Eigen::MatrixXd GX = -2.0 * S * Xf * q.asDiagonal();
  const Eigen::Index M = B.rows();
  const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(M, M) - B * B.transpose();

  const double t1 = (Yf.transpose() * GX).trace();
  const double t2 = 0.5 * ((FB.transpose() * Xf * B.transpose() + B.transpose() * Xf * FB.transpose()) * Yf).trace();
  const double t3 = -0.5 * ((B.transpose() * FB + FB.transpose() * B) * Xf.transpose() * Pi * Yf).trace();
  return t1 + t2 + t3;
}

Eigen::VectorXd hessian_zeta(const ProductPoint& theta, const Eigen::MatrixXd& S) {
  check_theta(theta, S);
  const Eigen::MatrixXd& B = theta.B.matrix();
  const Eigen::ArrayXd l = theta.lambda().array();
  const Eigen::ArrayXd bsb = (B.transpose() * S * B).diagonal().array();
  return (l / (1.0 + l).cube() * ((l - 1.0) * bsb + 1.0 + l)).matrix();
}

double hessian_cross(const ProductPoint& theta, const Eigen::MatrixXd& S, const TangentVector& X_B,
                     const Eigen::VectorXd& eta) {
  check_theta(theta, S);
  const Eigen::MatrixXd& B = theta.B.matrix();
  const Eigen::ArrayXd l = theta.lambda().array();
  // <grad_B, X>_c = tr(F_B^T X) = -2 sum_k q_k B_k^T S X_k, dq_k/dzeta_k = l/(1+l)^2.
  const Eigen::VectorXd bsx = (B.transpose() * S * X_B.full()).diagonal();
  return -2.0 * (eta.array() * l / (1.0 + l).square() * bsx.array()).sum();
}

double hessian_product(const ProductPoint& theta, const Eigen::MatrixXd& S, const ProductTangent& T,
                       const ProductTangent& X) {
  const Eigen::VectorXd hz = hessian_zeta(theta, S);
  return hessian_B_bilinear(theta, S, T.X_B, X.X_B) + hessian_cross(theta, S, T.X_B, X.X_zeta) +
         hessian_cross(theta, S, X.X_B, T.X_zeta) + (T.X_zeta.array() * hz.array() * X.X_zeta.array()).sum();
}

double hessian_star_B_closed_form(const ProductPoint& theta_star, const TangentVector& X, const TangentVector& Y) {
  const Eigen::MatrixXd& B = theta_star.B.matrix();
  const Eigen::VectorXd l = theta_star.lambda();
  const Eigen::Index M = B.rows();
  const Eigen::MatrixXd Xf = X.full();
  const Eigen::MatrixXd Yf = Y.full();
  const Eigen::VectorXd inv1p = (1.0 + l.array()).inverse().matrix();
  const Eigen::VectorXd q = q_inv(l);
  const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(M, M) - B * B.transpose();
  const double a = (Xf.transpose() * B * l.asDiagonal() * B.transpose() * Yf * inv1p.asDiagonal()).trace();
  const double b = (Xf.transpose() * B * B.transpose() * Yf * q.asDiagonal()).trace();
  const Eigen::VectorXd w = (l.array().square() / (1.0 + l.array())).matrix();
  const double c = (w.asDiagonal() * Xf.transpose() * Pi * Yf).trace();
  return 2.0 * (a - b) + 2.0 * c;
}

TangentVector inv_hessian_star_B(const ProductPoint& theta_star, const TangentVector& X) {
  const Eigen::VectorXd l = theta_star.lambda();
  check_gaps(l);
  const Eigen::Index r = l.size();
  const Eigen::MatrixXd AX = X.A();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      if (i != j) A(i, j) = 0.5 * (1.0 + l[i]) * (1.0 + l[j]) / ((l[i] - l[j]) * (l[i] - l[j])) * AX(i, j);
  const Eigen::VectorXd cscale = (0.5 * (1.0 + l.array()) / l.array().square()).matrix();
  return TangentVector(theta_star.B, A, X.C() * cscale.asDiagonal());
}

Eigen::VectorXd inv_hessian_star_zeta(const ProductPoint& theta_star, const Eigen::VectorXd& v) {
  const Eigen::ArrayXd l = theta_star.lambda().array();
  return (v.array() * (1.0 + l).square() / l.square()).matrix();
}

ScoreDelta score_delta(const ProductPoint& theta_star, const Eigen::MatrixXd& S) {
  check_theta(theta_star, S);
  const Eigen::VectorXd l = theta_star.lambda();
  check_gaps(l);
  const Eigen::MatrixXd& B = theta_star.B.matrix();
  const Eigen::Index M = B.rows();
  const Eigen::Index r = B.cols();
  const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(M, M) - B * B.transpose();
  Eigen::MatrixXd delta(M, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Eigen::MatrixXd Rj = -Pi / l[j];
    for (Eigen::Index i = 0; i < r; ++i)
      if (i != j) Rj += B.col(i) * B.col(i).transpose() / (l[i] - l[j]);
    delta.col(j) = -Rj * (S * B.col(j));
  }
  const Eigen::VectorXd bsb = (B.transpose() * S * B).diagonal();
  return {TangentVector(theta_star.B, B.transpose() * delta, delta), (bsb.array() - 1.0 - l.array()).matrix()};
}

ScoreDelta score_delta_via_inverse_hessian(const ProductPoint& theta_star, const Eigen::MatrixXd& S) {
  const TangentVector hb = inv_hessian_star_B(theta_star, grad_B(theta_star, S));
  const Eigen::VectorXd hz = inv_hessian_star_zeta(theta_star, grad_zeta(theta_star, S));
  return {hb.scaled(-1.0), -(theta_star.lambda().array() * hz.array()).matrix()};
}

GradPair grad_matrix(const ModelParams& params, const Eigen::MatrixXd& S) {
  const int M = params.basis_dim();
  if (S.rows() != M || S.cols() != M) throw std::invalid_argument("grad_matrix: covariance size mismatch");
  const Eigen::MatrixXd& B = params.B.matrix();
  const double s2 = params.sigma2;
  const Eigen::ArrayXd sl = params.s * params.lambda.array();
  const Eigen::VectorXd g_inv = (sl / (s2 + sl)).matrix();
  const Eigen::MatrixXd SB = S * B;
  const Eigen::MatrixXd FB = (-2.0 / s2) * SB * g_inv.asDiagonal();
  const Eigen::ArrayXd bsb = (B.transpose() * SB).diagonal().array();
  const Eigen::VectorXd gz = (sl / (s2 + sl).square() * (s2 + sl - bsb)).matrix();
  return {intrinsic_grad(params.B, FB), gz};
}

namespace {

struct CurveGradTerms {
  double loss = 0.0;
  Eigen::MatrixXd FB;
  Eigen::VectorXd gz;

  CurveGradTerms& operator+=(const CurveGradTerms& o) {
    loss += o.loss;
    FB += o.FB;
    gz += o.gz;
    return *this;
  }
};

}  // namespace

LossGrad loss_grad_functional(const ModelParams& params, const CurveDesigns& designs) {
  if (designs.basis_dim() != params.basis_dim()) throw std::invalid_argument("grad_functional: basis size mismatch");
  const Eigen::MatrixXd& B = params.B.matrix();
  const Eigen::VectorXd& lambda = params.lambda;
  const double s2 = params.sigma2;
  const Eigen::Index r = B.cols();
  const std::size_t n = designs.size();

  const CurveGradTerms total = reduce_curves<CurveGradTerms>(0, n, [&](std::size_t i) {
    const Eigen::MatrixXd& Phi = designs.phi(i);
    const Eigen::VectorXd& y = designs.y(i);
    const detail::CurveFactor f(B, lambda, s2, Phi, y);
    const Eigen::MatrixXd Kinv = f.K.solve(Eigen::MatrixXd::Identity(r, r));
    const Eigen::MatrixXd XK = f.X * Kinv;           // Sigma^{-1} X Lambda
    const Eigen::VectorXd u = (y - XK * f.z) / s2;   // Sigma^{-1} y
    const Eigen::VectorXd uX = f.X.transpose() * u;
    CurveGradTerms t;
    t.loss = f.quad + f.logdet;
    // Phi W X Lambda with W = Sigma^{-1} - Sigma^{-1} y y^T Sigma^{-1}.
    t.FB = Phi * (XK - u * (uX.array() * lambda.array()).matrix().transpose());
    t.gz = ((f.X.transpose() * XK).diagonal().array() - lambda.array() * uX.array().square()).matrix();
    return t;
  });
  const double nn = static_cast<double>(n);
  return {total.loss / (2.0 * nn), GradPair{intrinsic_grad(params.B, total.FB / nn), total.gz / (2.0 * nn)}};
}

GradPair grad_functional(const ModelParams& params, const CurveDesigns& designs) {
  return loss_grad_functional(params, designs).grad;
}

GradPair grad_functional(const ModelParams& params, const Dataset& data, const OrthoBasis& basis) {
  return grad_functional(params, CurveDesigns(data, basis));
}

}  // namespace fpca
