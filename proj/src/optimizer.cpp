#include "fpca/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "fpca/linalg.hpp"
#include "fpca/parallel.hpp"
#include "fpca/stiefel.hpp"

namespace fpca {

namespace {

// Upper bound for the preconditioner multipliers when the Fisher template
// is used away from the matrix regime or on a near-degenerate spectrum.
constexpr double kPrecondCap = 1e8;

TangentVector capped_inverse_fisher(const StiefelPoint& B, const Eigen::VectorXd& l, const TangentVector& X) {
  const Eigen::Index r = l.size();
  const Eigen::MatrixXd AX = X.A();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) {
      if (i == j) continue;
      const double gap2 = (l[i] - l[j]) * (l[i] - l[j]);
      const double num = 0.5 * (1.0 + l[i]) * (1.0 + l[j]);
      A(i, j) = (num < kPrecondCap * gap2 ? num / gap2 : kPrecondCap) * AX(i, j);
    }
  Eigen::VectorXd cs(r);
  for (Eigen::Index k = 0; k < r; ++k) cs[k] = std::min(0.5 * (1.0 + l[k]) / (l[k] * l[k]), kPrecondCap);
  return TangentVector(B, A, X.C() * cs.asDiagonal());
}

Eigen::VectorXd zeta_precond(const Eigen::VectorXd& l, const Eigen::VectorXd& g) {
  Eigen::VectorXd out(l.size());
  for (Eigen::Index k = 0; k < l.size(); ++k)
    out[k] = g[k] * std::min((1.0 + l[k]) * (1.0 + l[k]) / (l[k] * l[k]), kPrecondCap);
  return out;
}

ModelParams moved(const ModelParams& p, const ProductTangent& d, double t) {
  StiefelPoint B = exp_map(d.X_B, -t);
  Eigen::VectorXd zeta = p.zeta() - t * d.X_zeta;
  return ModelParams{std::move(B), zeta.array().exp().matrix(), p.sigma2, p.s};
}

struct StepState {
  StepResult result;
  LossGrad lg;
};

StepState step_from(const ModelParams& params, const LossGrad& lg, const Objective& obj, const FitConfig& config) {
  const ProductTangent d = obj.direction(params, lg.grad);
  const double slope = product_inner(ProductTangent{lg.grad.grad_B, lg.grad.grad_zeta}, d);
  const double f0 = lg.loss;
  const double g0 = lg.grad.norm();
  if (!(slope > 0.0) || !std::isfinite(slope)) return {{params, f0, 0.0, g0 > 0.0}, lg};

  // Below this predicted decrease the loss cannot resolve the step; the
  // gradient norm is used as the acceptance test instead.
  const double resolution = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f0));

  double t = 1.0;
  for (int h = 0; h <= config.max_halvings; ++h, t *= config.step_shrink) {
    ModelParams trial = moved(params, d, t);
    double f = 0.0;
    try {
      f = obj.loss(trial);
    } catch (const NumericalError&) {
      continue;
    }
    if (!std::isfinite(f)) continue;
    if (f <= f0 - config.armijo_c * t * slope) {
      LossGrad next = obj.loss_grad(trial);
      return {{std::move(trial), f, t, false}, std::move(next)};
    }
    if (t * slope < resolution && f <= f0 + resolution) {
      LossGrad next = obj.loss_grad(trial);
      if (next.grad.norm() < g0) return {{std::move(trial), next.loss, t, false}, std::move(next)};
    }
  }
  return {{params, f0, 0.0, true}, lg};
}

FitResult run_descent(ModelParams p, const Objective& obj, const FitConfig& config) {
  FitResult out{p, 0.0, 0, 0.0, false, false, {}};
  LossGrad lg = obj.loss_grad(p);
  double gn = lg.grad.norm();
  out.trace.push_back({lg.loss, gn, 0.0});
  int it = 0;
  while (true) {
    if (gn < config.grad_tol) {
      out.converged = true;
      break;
    }
    if (it >= config.max_iter) break;
    StepState s = step_from(p, lg, obj, config);
    if (s.result.stalled) {
      out.stalled = true;
      break;
    }
    p = std::move(s.result.params);
    lg = std::move(s.lg);
    gn = lg.grad.norm();
    ++it;
    out.trace.push_back({lg.loss, gn, s.result.step_size});
  }
  out.params = canonicalize(p);
  out.final_loss = lg.loss;
  out.iterations = it;
  out.grad_norm = gn;
  return out;
}

Eigen::VectorXd floored(const Eigen::VectorXd& v) { return v.cwiseMax(kInitLambdaFloor); }

ModelParams init_functional(const Dataset& data, const OrthoBasis& basis, int r, double sigma2, double s) {
  const int M = basis.size();
  const int p = M * (M + 1) / 2;
  std::vector<int> index(static_cast<std::size_t>(M) * M);
  for (int a = 0, k = 0; a < M; ++a)
    for (int b = a; b < M; ++b, ++k) index[a * M + b] = index[b * M + a] = k;

  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(p);
  long pairs = 0;
  for (const auto& c : data.curves) {
    const int m = static_cast<int>(c.times.size());
    if (m < 2) continue;
    const Eigen::MatrixXd Phi = design_matrix(basis, c.times);
    const int np = m * (m - 1) / 2;
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(np, p);
    Eigen::VectorXd target(np);
    int row = 0;
    for (int j = 0; j < m; ++j)
      for (int k = j + 1; k < m; ++k, ++row) {
        for (int a = 0; a < M; ++a)
          for (int b = 0; b < M; ++b) F(row, index[a * M + b]) += Phi(a, j) * Phi(b, k);
        target[row] = c.values[j] * c.values[k];
      }
    G.noalias() += F.transpose() * F;
    h.noalias() += F.transpose() * target;
    pairs += np;
  }
  if (pairs == 0) throw std::invalid_argument("pooled initialization needs curves with at least two observations");
  const double ridge = 1e-6 * std::max(G.trace() / p, std::numeric_limits<double>::min());
  G.diagonal().array() += ridge;
  const Eigen::VectorXd coef = G.ldlt().solve(h);
  Eigen::MatrixXd C(M, M);
  for (int a = 0; a < M; ++a)
    for (int b = 0; b < M; ++b) C(a, b) = coef[index[a * M + b]];
  const SymEig eig = sym_eig_desc(C);
  Eigen::MatrixXd B = eig.vectors.leftCols(r);
  canonicalize_signs(B);
  return ModelParams{StiefelPoint(std::move(B)), floored(eig.values.head(r)), sigma2, s};
}

ModelParams init_random(const ModelParams& pooled, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd B = random_stiefel(pooled.basis_dim(), pooled.rank(), rng);
  return ModelParams{StiefelPoint(std::move(B)), pooled.lambda, pooled.sigma2, pooled.s};
}

}  // namespace

InitKind parse_init(const std::string& name) {
  if (name == "pooled" || name == "pooled-pca") return InitKind::Pooled;
  if (name == "given") return InitKind::Given;
  if (name == "random") return InitKind::Random;
  throw std::invalid_argument("unknown init '" + name + "' (expected pooled, given or random)");
}

void FitConfig::validate() const {
  if (max_iter < 0) throw std::invalid_argument("max_iter must be nonnegative");
  if (!(grad_tol > 0.0)) throw std::invalid_argument("grad_tol must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw std::invalid_argument("armijo_c must lie in (0, 1)");
  if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw std::invalid_argument("step_shrink must lie in (0, 1)");
  if (max_halvings < 1) throw std::invalid_argument("max_halvings must be positive");
  if (init == InitKind::Random && restarts < 1) throw std::invalid_argument("restarts must be at least 1");
  if (init == InitKind::Given && !start) throw std::invalid_argument("init 'given' needs a starting model");
}

Objective::Objective(const Dataset& data, const OrthoBasis* basis, double sigma2, double s)
    : regime_(data.regime), M_(0), sigma2_(sigma2), s_(s) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (!(s > 0.0)) throw std::invalid_argument("s must be positive");
  if (regime_ == Regime::Matrix) {
    S_ = data.sample_cov;
    M_ = static_cast<int>(S_.rows());
  } else {
    if (basis == nullptr) throw std::invalid_argument("functional regimes need a basis");
    designs_.emplace(data, *basis);
    M_ = basis->size();
  }
}

double Objective::loss(const ModelParams& params) const {
  return designs_ ? neg_loglik(params, *designs_) : neg_loglik(params, S_);
}

LossGrad Objective::loss_grad(const ModelParams& params) const {
  if (designs_) return loss_grad_functional(params, *designs_);
  return {neg_loglik(params, S_), grad_matrix(params, S_)};
}

ProductTangent Objective::direction(const ModelParams& params, const GradPair& grad) const {
  if (!designs_) {
    const NormalizedProblem np = normalize(params, S_);
    const Eigen::VectorXd l = np.theta.lambda();
    try {
      return {inv_hessian_star_B(np.theta, grad.grad_B), inv_hessian_star_zeta(np.theta, grad.grad_zeta)};
    } catch (const DegenerateSpectrumError&) {
      return {capped_inverse_fisher(params.B, l, grad.grad_B), zeta_precond(l, grad.grad_zeta)};
    }
  }
  // Functional template: signal-to-noise per curve scales with the mean
  // number of observations, and the loss carries an extra factor 1/2.
  double mbar = 0.0;
  for (std::size_t i = 0; i < designs_->size(); ++i) mbar += static_cast<double>(designs_->y(i).size());
  mbar /= static_cast<double>(designs_->size());
  const Eigen::VectorXd l = params.lambda * (mbar / params.sigma2);
  return {capped_inverse_fisher(params.B, l, grad.grad_B).scaled(2.0), 2.0 * zeta_precond(l, grad.grad_zeta)};
}

ModelParams init_params(const Dataset& data, const OrthoBasis* basis, int r, double sigma2, double s) {
  if (r < 1) throw std::invalid_argument("r must be at least 1");
  if (!(sigma2 > 0.0) || !(s > 0.0)) throw std::invalid_argument("sigma2 and s must be positive");
  if (data.regime == Regime::Matrix) {
    const Eigen::Index M = data.sample_cov.rows();
    if (r > M) throw std::invalid_argument("r = " + std::to_string(r) + " exceeds the dimension " + std::to_string(M));
    const SymEig eig = sym_eig_desc(data.sample_cov);
    Eigen::MatrixXd B = eig.vectors.leftCols(r);
    canonicalize_signs(B);
    const Eigen::VectorXd l = ((eig.values.head(r).array() - sigma2) / s).matrix();
    return ModelParams{StiefelPoint(std::move(B)), floored(l), sigma2, s};
  }
  if (basis == nullptr) throw std::invalid_argument("functional regimes need a basis");
  if (r > basis->size())
    throw std::invalid_argument("r = " + std::to_string(r) + " exceeds the basis size " + std::to_string(basis->size()));
  return init_functional(data, *basis, r, sigma2, s);
}

StepResult step(const ModelParams& params, const Objective& objective, const FitConfig& config) {
  return step_from(params, objective.loss_grad(params), objective, config).result;
}

FitResult fit(const Dataset& data, const OrthoBasis* basis, int r, double sigma2, double s, const FitConfig& config) {
  config.validate();
  data.validate();
  const Objective obj(data, basis, sigma2, s);

  std::vector<ModelParams> starts;
  if (config.init == InitKind::Given) {
    ModelParams p = *config.start;
    if (p.basis_dim() != obj.basis_dim() || p.rank() != r)
      throw std::invalid_argument("starting model has the wrong dimensions");
    p.sigma2 = sigma2;
    p.s = s;
    p.validate(false);
    starts.push_back(std::move(p));
  } else {
    ModelParams pooled = init_params(data, basis, r, sigma2, s);
    if (config.init == InitKind::Pooled) {
      starts.push_back(std::move(pooled));
    } else {
      for (int k = 0; k < config.restarts; ++k)
        starts.push_back(init_random(pooled, counter_seed(config.seed, static_cast<std::uint64_t>(k), 0)));
    }
  }

  std::vector<std::optional<FitResult>> results(starts.size());
  parallel_for(starts.size(), config.threads,
               [&](std::size_t k) { results[k] = run_descent(starts[k], obj, config); });

  std::size_t best = 0;
  for (std::size_t k = 1; k < results.size(); ++k)
    if (results[k]->final_loss < results[best]->final_loss) best = k;
  return std::move(*results[best]);
}

}  // namespace fpca
