#include "fpca/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fpca/quadrature.hpp"
#include "woodbury.hpp"

namespace fpca {

void ModelParams::validate(bool require_order) const {
  if (lambda.size() != rank()) throw std::invalid_argument("lambda has " + std::to_string(lambda.size()) +
                                                           " entries, expected r = " + std::to_string(rank()));
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (!(s > 0.0)) throw std::invalid_argument("s must be positive");
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (!(lambda[k] > 0.0)) throw std::invalid_argument("lambda[" + std::to_string(k) + "] must be positive");
    if (require_order && k > 0 && !(lambda[k - 1] > lambda[k]))
      throw std::invalid_argument("lambda must be strictly decreasing");
  }
}

ModelParams canonicalize(const ModelParams& params) {
  const int r = params.rank();
  std::vector<int> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return params.lambda[a] > params.lambda[b]; });
  Eigen::MatrixXd B(params.basis_dim(), r);
  Eigen::VectorXd lambda(r);
  for (int k = 0; k < r; ++k) {
    B.col(k) = params.B.matrix().col(order[k]);
    lambda[k] = params.lambda[order[k]];
  }
  canonicalize_signs(B);
  return ModelParams{StiefelPoint(std::move(B)), std::move(lambda), params.sigma2, params.s};
}

Regime parse_regime(const std::string& name) {
  if (name == "sparse") return Regime::Sparse;
  if (name == "dense") return Regime::Dense;
  if (name == "matrix") return Regime::Matrix;
  throw std::invalid_argument("unknown regime '" + name + "' (expected sparse, dense or matrix)");
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::Sparse: return "sparse";
    case Regime::Dense: return "dense";
    case Regime::Matrix: return "matrix";
  }
  return "sparse";
}

Dataset Dataset::functional(Regime regime, std::vector<CurveData> curves) {
  Dataset d;
  d.regime = regime;
  d.curves = std::move(curves);
  d.validate();
  return d;
}

Dataset Dataset::matrix(Eigen::MatrixXd sample_cov, long n_samples) {
  Dataset d;
  d.regime = Regime::Matrix;
  d.sample_cov = std::move(sample_cov);
  d.n_samples = n_samples;
  d.validate();
  return d;
}

void Dataset::validate() const {
  if (regime == Regime::Matrix) {
    if (sample_cov.rows() == 0 || sample_cov.rows() != sample_cov.cols())
      throw std::invalid_argument("sample covariance must be a nonempty square matrix");
    if ((sample_cov - sample_cov.transpose()).cwiseAbs().maxCoeff() != 0.0)
      throw std::invalid_argument("sample covariance must be exactly symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sample_cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("sample covariance is not positive semidefinite");
    if (n_samples < 1) throw std::invalid_argument("sample count n must be >= 1");
    return;
  }
  if (curves.empty()) throw std::invalid_argument("dataset has no curves");
  for (const auto& c : curves) {
    if (c.times.empty()) throw std::invalid_argument("curve '" + c.id + "' has no observations");
    if (c.times.size() != c.values.size())
      throw std::invalid_argument("curve '" + c.id + "' has mismatched times/values lengths");
    for (double t : c.times)
      if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("curve '" + c.id + "' has a time outside [0,1]");
  }
}

CurveDesigns::CurveDesigns(const Dataset& data, const OrthoBasis& basis) : basis_dim_(basis.size()) {
  if (data.regime == Regime::Matrix) throw std::invalid_argument("curve designs need a functional dataset");
  phi_.reserve(data.curves.size());
  y_.reserve(data.curves.size());
  for (const auto& c : data.curves) {
    phi_.push_back(design_matrix(basis, c.times));
    y_.push_back(Eigen::Map<const Eigen::VectorXd>(c.values.data(), static_cast<Eigen::Index>(c.values.size())));
  }
}

Eigen::MatrixXd marginal_cov(const ModelParams& params, const Eigen::MatrixXd& Phi) {
  if (Phi.rows() != params.basis_dim()) throw std::invalid_argument("marginal_cov: design has wrong number of rows");
  const Eigen::MatrixXd X = Phi.transpose() * params.B.matrix();
  Eigen::MatrixXd Sigma = X * params.lambda.asDiagonal() * X.transpose();
  Sigma.diagonal().array() += params.sigma2;
  return sym_part(Sigma);
}

Eigen::MatrixXd model_cov(const ModelParams& params) {
  const Eigen::MatrixXd& B = params.B.matrix();
  Eigen::MatrixXd Gamma = params.s * B * params.lambda.asDiagonal() * B.transpose();
  Gamma.diagonal().array() += params.sigma2;
  return sym_part(Gamma);
}

double neg_loglik(const ModelParams& params, const CurveDesigns& designs) {
  if (designs.basis_dim() != params.basis_dim()) throw std::invalid_argument("neg_loglik: basis size mismatch");
  const Eigen::MatrixXd& B = params.B.matrix();
  const std::size_t n = designs.size();
  const double total = reduce_curves<double>(0, n, [&](std::size_t i) {
    const detail::CurveFactor f(B, params.lambda, params.sigma2, designs.phi(i), designs.y(i));
    return f.quad + f.logdet;
  });
  return total / (2.0 * static_cast<double>(n));
}

double neg_loglik(const ModelParams& params, const Eigen::MatrixXd& sample_cov) {
  const int M = params.basis_dim();
  if (sample_cov.rows() != M || sample_cov.cols() != M) throw std::invalid_argument("neg_loglik: covariance size mismatch");
  const Eigen::MatrixXd& B = params.B.matrix();
  // Gamma^{-1} = sigma^{-2} (I - B G^{-1} B^T), G = (sigma^2/s) Lambda^{-1} + I.
  const Eigen::ArrayXd sl = params.s * params.lambda.array();
  const Eigen::VectorXd g_inv = (sl / (params.sigma2 + sl)).matrix();
  const Eigen::MatrixXd SB = sample_cov * B;
  const double quad = (sample_cov.trace() - (B.transpose() * SB).diagonal().dot(g_inv)) / params.sigma2;
  const double logdet = M * std::log(params.sigma2) + (1.0 + sl / params.sigma2).log().sum();
  return quad + logdet;
}

double neg_loglik(const ModelParams& params, const Dataset& data, const OrthoBasis& basis) {
  if (data.regime == Regime::Matrix) return neg_loglik(params, data.sample_cov);
  return neg_loglik(params, CurveDesigns(data, basis));
}

double kl_divergence(const Eigen::MatrixXd& Sigma, const Eigen::MatrixXd& Sigma_star) {
  if (Sigma.rows() != Sigma_star.rows() || Sigma.cols() != Sigma_star.cols() || Sigma.rows() != Sigma.cols())
    throw std::invalid_argument("kl_divergence: size mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(sym_part(Sigma));
  Eigen::LLT<Eigen::MatrixXd> llt_star(sym_part(Sigma_star));
  if (llt.info() != Eigen::Success || llt_star.info() != Eigen::Success)
    throw std::invalid_argument("kl_divergence: covariance is not positive definite");
  // L^{-1} (Sigma_star - Sigma) L^{-T} is similar to the symmetric-root form.
  const Eigen::MatrixXd D = sym_part(Sigma_star - Sigma);
  Eigen::MatrixXd W = llt.matrixL().solve(D);
  W = llt.matrixL().solve(W.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym_part(W), Eigen::EigenvaluesOnly);
  double k = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double x = eig.eigenvalues()[i];
    k += x - std::log1p(x);
  }
  return std::max(0.0, 0.5 * k);
}

Kernel::Kernel(std::function<double(double, double)> fn) : fn_(std::move(fn)) {}

Kernel Kernel::spectral(Eigen::VectorXd weights, Features features) {
  Kernel k;
  k.weights_ = std::move(weights);
  k.features_ = std::move(features);
  return k;
}

double Kernel::operator()(double u, double v) const {
  if (fn_) return fn_(u, v);
  const Eigen::VectorXd fu = features_(u);
  const Eigen::VectorXd fv = features_(v);
  return (fu.array() * fv.array() * weights_.array()).sum();
}

Eigen::MatrixXd Kernel::on_grid(const std::vector<double>& nodes) const {
  const Eigen::Index n = static_cast<Eigen::Index>(nodes.size());
  if (fn_) {
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) K(i, j) = fn_(nodes[i], nodes[j]);
    return K;
  }
  Eigen::MatrixXd F(n, weights_.size());
  for (Eigen::Index i = 0; i < n; ++i) F.row(i) = features_(nodes[i]).transpose();
  return F * weights_.asDiagonal() * F.transpose();
}

Kernel kernel_from_params(const ModelParams& params, const OrthoBasis& basis) {
  if (params.basis_dim() != basis.size()) throw std::invalid_argument("kernel_from_params: basis size mismatch");
  Eigen::MatrixXd B = params.B.matrix();
  return Kernel::spectral(params.lambda, [B, basis](double t) -> Eigen::VectorXd {
    return B.transpose() * eval_basis(basis, t);
  });
}

double kernel_l2_distance(const Kernel& k1, const Kernel& k2) {
  static const QuadratureRule rule = gauss_legendre(128, 0.0, 1.0);
  const Eigen::MatrixXd D = k1.on_grid(rule.nodes) - k2.on_grid(rule.nodes);
  const Eigen::Map<const Eigen::VectorXd> w(rule.weights.data(), static_cast<Eigen::Index>(rule.size()));
  const double sq = w.transpose() * D.cwiseAbs2() * w;
  return std::sqrt(std::max(0.0, sq));
}

OptimalParameter optimal_parameter(const TrueKernel& truth, const OrthoBasis& basis, int r, double sigma2) {
  const int M = basis.size();
  const int rbar = truth.rank();
  if (r < 1 || r > M) throw std::invalid_argument("optimal_parameter: need 1 <= r <= M");
  Eigen::MatrixXd P(M, rbar);
  for (int k = 0; k < rbar; ++k)
    P.col(k) = project_function(basis, [&](double t) { return truth.eigenfunctions(t)[k]; });
  const Eigen::MatrixXd C = P * truth.eigenvalues.asDiagonal() * P.transpose();
  const SymEig eig = sym_eig_desc(C);
  constexpr double kTie = 1e-10;
  for (int k = 0; k < r; ++k) {
    if (!(eig.values[k] > kTie))
      throw DegenerateSpectrumError("optimal_parameter: eigenvalue " + std::to_string(k + 1) + " of the projected kernel is not positive");
    const bool next_exists = k + 1 < M;
    if (next_exists && eig.values[k] - eig.values[k + 1] <= kTie)
      throw DegenerateSpectrumError("optimal_parameter: tied eigenvalues at position " + std::to_string(k + 1));
  }
  Eigen::MatrixXd B = eig.vectors.leftCols(r);
  canonicalize_signs(B);
  ModelParams params{StiefelPoint(std::move(B)), eig.values.head(r), sigma2, 1.0};
  const double beta = kernel_l2_distance(truth.kernel(), kernel_from_params(params, basis));
  return {std::move(params), beta};
}

}  // namespace fpca
