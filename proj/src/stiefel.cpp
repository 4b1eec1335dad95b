#include "fpca/stiefel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fpca/linalg.hpp"

namespace fpca {

double StiefelPoint::orthonormality_error(const Eigen::MatrixXd& B) {
  return (B.transpose() * B - Eigen::MatrixXd::Identity(B.cols(), B.cols())).norm();
}

StiefelPoint::StiefelPoint(Eigen::MatrixXd B) : B_(std::move(B)) {
  if (B_.cols() < 1 || B_.cols() > B_.rows())
    throw std::invalid_argument("Stiefel point needs 1 <= r <= M");
  const double err = orthonormality_error(B_);
  if (err <= kTolerance) return;
  if (!(err <= kRepairThreshold))
    throw std::invalid_argument("matrix is not orthonormal: ||B^T B - I|| = " + std::to_string(err));
  // Polar factor B (B^T B)^{-1/2}: the nearest orthonormal frame.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(B_.transpose() * B_);
  const Eigen::MatrixXd inv_sqrt =
      eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  B_ = (B_ * inv_sqrt).eval();
}

TangentVector::TangentVector(StiefelPoint base, const Eigen::MatrixXd& A, const Eigen::MatrixXd& C)
    : base_(std::move(base)) {
  const Eigen::Index r = base_.rank();
  const Eigen::Index M = base_.ambient_dim();
  if (A.rows() != r || A.cols() != r || C.rows() != M || C.cols() != r)
    throw std::invalid_argument("tangent components have wrong dimensions");
  lower_.resize(r * (r - 1) / 2);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = j + 1; i < r; ++i) lower_[idx++] = 0.5 * (A(i, j) - A(j, i));
  const Eigen::MatrixXd& B = base_.matrix();
  C_ = C - B * (B.transpose() * C);
}

TangentVector TangentVector::zero(const StiefelPoint& base) {
  const int r = base.rank();
  return TangentVector(base, Eigen::MatrixXd::Zero(r, r), Eigen::MatrixXd::Zero(base.ambient_dim(), r));
}

Eigen::MatrixXd TangentVector::A() const {
  const Eigen::Index r = base_.rank();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r, r);
  Eigen::Index idx = 0;
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = j + 1; i < r; ++i) {
      A(i, j) = lower_[idx];
      A(j, i) = -lower_[idx];
      ++idx;
    }
  return A;
}

Eigen::MatrixXd TangentVector::full() const { return base_.matrix() * A() + C_; }

TangentVector TangentVector::scaled(double s) const {
  TangentVector out = *this;
  out.lower_ *= s;
  out.C_ *= s;
  return out;
}

TangentVector TangentVector::plus(const TangentVector& other) const {
  if (&other.base_ != &base_ && (other.base_.matrix() - base_.matrix()).norm() > 1e-12)
    throw std::invalid_argument("tangent vectors at different base points");
  TangentVector out = *this;
  out.lower_ += other.lower_;
  out.C_ += other.C_;
  return out;
}

TangentVector tangent_project(const StiefelPoint& B, const Eigen::MatrixXd& Z) {
  const Eigen::MatrixXd& Bm = B.matrix();
  if (Z.rows() != Bm.rows() || Z.cols() != Bm.cols())
    throw std::invalid_argument("tangent_project: dimension mismatch");
  const Eigen::MatrixXd BtZ = Bm.transpose() * Z;
  return TangentVector(B, skew_part(BtZ), Z - Bm * BtZ);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_tangent(const TangentVector& U) { return {U.A(), U.C()}; }

namespace {

// Coefficients of the [q/q] Pade approximant of exp.
std::vector<double> pade_coefficients(int q) {
  std::vector<double> c(q + 1);
  c[0] = 1.0;
  for (int k = 1; k <= q; ++k) c[k] = c[k - 1] * (q - k + 1) / (k * (2.0 * q - k + 1));
  return c;
}

}  // namespace

Eigen::MatrixXd skew_exp(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols()) throw std::invalid_argument("skew_exp: matrix must be square");
  if ((S + S.transpose()).norm() > 1e-12) throw std::invalid_argument("skew_exp: input is not skew-symmetric");
  const Eigen::Index n = S.rows();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const double norm1 = S.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 == 0.0) return I;

  // Scale to ||A||_1 <= 1/2; the [8/8] Pade error there is far below 1e-16.
  int squarings = 0;
  if (norm1 > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  const Eigen::MatrixXd A = S / std::ldexp(1.0, squarings);

  constexpr int kOrder = 8;
  const auto c = pade_coefficients(kOrder);
  // Even part V and odd part U of the numerator polynomial. For skew A, V is
  // symmetric and U skew, so (V - U)^{-1}(V + U) is orthogonal.
  const Eigen::MatrixXd A2 = A * A;
  Eigen::MatrixXd V = c[0] * I;
  Eigen::MatrixXd Uodd = c[1] * I;
  Eigen::MatrixXd power = I;
  for (int k = 2; k <= kOrder; k += 2) {
    power = (power * A2).eval();
    V += c[k] * power;
    if (k + 1 <= kOrder) Uodd += c[k + 1] * power;
  }
  const Eigen::MatrixXd U = A * Uodd;
  Eigen::MatrixXd E = (V - U).partialPivLu().solve(V + U);
  for (int s = 0; s < squarings; ++s) E = (E * E).eval();
  return E;
}

StiefelPoint exp_map(const TangentVector& U, double t) {
  const StiefelPoint& base = U.base();
  const Eigen::MatrixXd& B = base.matrix();
  const Eigen::Index M = B.rows();
  const Eigen::Index r = B.cols();
  const Eigen::MatrixXd A = U.A();
  const Eigen::MatrixXd& C = U.C();
  if (t == 0.0 || (A.squaredNorm() == 0.0 && C.squaredNorm() == 0.0)) return base;

  // QR with column pivoting: C P = Q R_p, so C = Q (R_p P^T).
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(C);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(M, r);
  const Eigen::MatrixXd Rp = qr.matrixR().topRows(r).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd R = Rp * qr.colsPermutation().transpose();

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * r, 2 * r);
  block.topLeftCorner(r, r) = t * A;
  block.topRightCorner(r, r) = -t * R.transpose();
  block.bottomLeftCorner(r, r) = t * R;
  const Eigen::MatrixXd E = skew_exp(block);
  Eigen::MatrixXd out = B * E.topLeftCorner(r, r) + Q * E.bottomLeftCorner(r, r);
  return StiefelPoint(std::move(out));
}

namespace {
void require_same_base(const TangentVector& X, const TangentVector& Y) {
  if (&X.base() == &Y.base()) return;
  const auto& a = X.base().matrix();
  const auto& b = Y.base().matrix();
  if (a.rows() != b.rows() || a.cols() != b.cols() || (a - b).norm() > 1e-12)
    throw std::invalid_argument("tangent vectors belong to different base points");
}
}  // namespace

double canonical_inner(const TangentVector& X, const TangentVector& Y) {
  require_same_base(X, Y);
  // With U = B A + C: tr(X^T (I - BB^T/2) Y) = <A_X, A_Y>/2 + <C_X, C_Y>.
  return 0.5 * (X.A().cwiseProduct(Y.A())).sum() + (X.C().cwiseProduct(Y.C())).sum();
}

double product_inner(const ProductTangent& X, const ProductTangent& Y) {
  if (X.X_zeta.size() != Y.X_zeta.size()) throw std::invalid_argument("product_inner: zeta size mismatch");
  return canonical_inner(X.X_B, Y.X_B) + X.X_zeta.dot(Y.X_zeta);
}

TangentVector intrinsic_grad(const StiefelPoint& B, const Eigen::MatrixXd& F) {
  const Eigen::MatrixXd& Bm = B.matrix();
  if (F.rows() != Bm.rows() || F.cols() != Bm.cols()) throw std::invalid_argument("intrinsic_grad: dimension mismatch");
  const Eigen::MatrixXd BtF = Bm.transpose() * F;
  return TangentVector(B, BtF - BtF.transpose(), F - Bm * BtF);
}

}  // namespace fpca
