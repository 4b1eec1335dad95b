#include "fpca/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>

#include "fpca/linalg.hpp"
#include "fpca/parallel.hpp"

namespace fpca {

namespace {

void check_eigenvalues(const Eigen::VectorXd& ev) {
  if (ev.size() < 1) throw std::invalid_argument("true kernel needs at least one eigenvalue");
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (!(ev[k] > 0.0)) throw std::invalid_argument("true eigenvalues must be positive");
    if (k > 0 && !(ev[k - 1] > ev[k])) throw std::invalid_argument("true eigenvalues must be strictly decreasing");
  }
}

Eigen::MatrixXd dct_pattern(int M, int r) {
  Eigen::MatrixXd V(M, r);
  for (int k = 0; k < M; ++k)
    for (int j = 0; j < r; ++j) V(k, j) = std::cos(std::numbers::pi * (j + 0.5) * (k + 0.5) / M);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(V);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(M, r);
  canonicalize_signs(Q);
  return Q;
}

double op_norm_sym(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym_part(A), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

std::vector<std::size_t> cell_count(const ExperimentConfig& c) {
  return {c.n_grid.size(), static_cast<std::size_t>(c.replicates)};
}

std::uint64_t cell_seed(const ExperimentConfig& c, long n, int rep) { return replicate_seed(c.base_seed, n, rep); }

RateRow functional_cell(const ExperimentConfig& c, long n, int rep) {
  RateRow row;
  row.n = n;
  row.replicate = rep;
  row.M = c.M_for(n);
  const OrthoBasis basis = make_basis(row.M);
  const TrueKernel truth = make_true_kernel(c.family, c.eigenvalues, c.reference_M);
  const Dataset data = sample_functional(truth, c.regime, n, c.m, c.sigma2, cell_seed(c, n, rep));
  const FitResult fr = fit(data, &basis, c.r, c.sigma2, 1.0, c.fit);
  row.converged = fr.converged;
  row.iterations = fr.iterations;
  row.loss_kernel = kernel_l2_distance(kernel_from_params(fr.params, basis), truth.kernel());
  try {
    const OptimalParameter opt = optimal_parameter(truth, basis, c.r, c.sigma2);
    Eigen::MatrixXd Bh = fr.params.B.matrix();
    align_signs(Bh, opt.params.B.matrix());
    row.error_B = (Bh - opt.params.B.matrix()).norm();
    row.principal_angle = principal_angle_distance(Bh, opt.params.B.matrix());
    row.error_lambda = (fr.params.lambda - opt.params.lambda).norm();
    row.beta = opt.beta;
  } catch (const DegenerateSpectrumError&) {
    row.error_B = row.principal_angle = row.error_lambda = row.beta = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

RateRow matrix_cell(const ExperimentConfig& c, const ModelParams& truth, long n, int rep) {
  RateRow row;
  row.n = n;
  row.replicate = rep;
  row.M = truth.basis_dim();
  const Dataset data = sample_matrix(truth, n, cell_seed(c, n, rep));
  const FitResult fr = fit(data, nullptr, c.r, c.sigma2, c.s, c.fit);
  row.converged = fr.converged;
  row.iterations = fr.iterations;
  const Eigen::MatrixXd& Bs = truth.B.matrix();
  Eigen::MatrixXd Bh = fr.params.B.matrix();
  align_signs(Bh, Bs);
  row.loss_kernel = (c.s * (Bh * fr.params.lambda.asDiagonal() * Bh.transpose() -
                            Bs * truth.lambda.asDiagonal() * Bs.transpose()))
                        .norm();
  row.error_B = (Bh - Bs).norm();
  row.principal_angle = principal_angle_distance(Bh, Bs);
  row.error_lambda = (fr.params.lambda - truth.lambda).norm();
  return row;
}

std::optional<Slope> slope_of(const ExperimentConfig& c, const std::vector<RateRow>& rows,
                              double RateRow::*field) {
  std::vector<double> x, y;
  for (long n : c.n_grid) {
    std::vector<double> vals;
    for (const auto& row : rows)
      if (row.n == n && row.converged && std::isfinite(row.*field)) vals.push_back(row.*field);
    if (vals.empty()) continue;
    const double med = median(vals);
    if (!(med > 0.0)) continue;
    x.push_back(static_cast<double>(n));
    y.push_back(med);
  }
  return loglog_slope(x, y);
}

}  // namespace

std::uint64_t replicate_seed(std::uint64_t base_seed, long n, int replicate) {
  return counter_seed(base_seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replicate) + 1);
}

KernelFamily parse_family(const std::string& name) {
  if (name == "fourier") return KernelFamily::Fourier;
  if (name == "spline" || name == "spline-representable") return KernelFamily::Spline;
  throw std::invalid_argument("unknown kernel family '" + name + "' (expected fourier or spline)");
}

std::string family_name(KernelFamily family) { return family == KernelFamily::Fourier ? "fourier" : "spline"; }

TrueKernel make_true_kernel(KernelFamily family, const Eigen::VectorXd& eigenvalues, int reference_M) {
  check_eigenvalues(eigenvalues);
  const int r = static_cast<int>(eigenvalues.size());
  if (family == KernelFamily::Fourier) {
    Kernel::Features f = [r](double t) {
      Eigen::VectorXd v(r);
      for (int k = 0; k < r; ++k) {
        const double w = 2.0 * std::numbers::pi * (k / 2 + 1) * t;
        v[k] = std::numbers::sqrt2 * (k % 2 == 0 ? std::sin(w) : std::cos(w));
      }
      return v;
    };
    return {eigenvalues, std::move(f)};
  }
  if (r > reference_M) throw std::invalid_argument("spline truth rank exceeds reference_M");
  auto basis = std::make_shared<const OrthoBasis>(make_basis(reference_M));
  const Eigen::MatrixXd V = dct_pattern(reference_M, r);
  Kernel::Features f = [basis, V](double t) -> Eigen::VectorXd { return V.transpose() * eval_basis(*basis, t); };
  return {eigenvalues, std::move(f)};
}

Dataset sample_functional(const TrueKernel& truth, Regime regime, long n, MSpec m, double sigma2,
                          std::uint64_t seed) {
  if (regime == Regime::Matrix) throw std::invalid_argument("sample_functional needs a functional regime");
  if (!(1 <= m.m_min && m.m_min <= m.m_max)) throw std::invalid_argument("m-spec must satisfy 1 <= m_min <= m_max");
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("sigma2 must be nonnegative");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> mdist(m.m_min, m.m_max);
  std::uniform_real_distribution<double> udist(0.0, 1.0);
  std::normal_distribution<double> ndist(0.0, 1.0);
  const double sigma = std::sqrt(sigma2);
  const int rbar = truth.rank();
  std::vector<CurveData> curves;
  curves.reserve(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    CurveData c;
    c.id = "c" + std::to_string(i + 1);
    const int mi = mdist(rng);
    Eigen::VectorXd score(rbar);
    for (int k = 0; k < rbar; ++k) score[k] = std::sqrt(truth.eigenvalues[k]) * ndist(rng);
    for (int j = 0; j < mi; ++j) {
      const double t = udist(rng);
      const double noise = ndist(rng);
      c.times.push_back(t);
      c.values.push_back(truth.eigenfunctions(t).dot(score) + sigma * noise);
    }
    curves.push_back(std::move(c));
  }
  return Dataset::functional(regime, std::move(curves));
}

Dataset sample_matrix(const ModelParams& truth, long n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  const int M = truth.basis_dim();
  const int r = truth.rank();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> ndist(0.0, 1.0);
  Eigen::MatrixXd Xi(r, n), E(M, n);
  for (long i = 0; i < n; ++i) {
    for (int k = 0; k < r; ++k) Xi(k, i) = ndist(rng);
    for (int a = 0; a < M; ++a) E(a, i) = ndist(rng);
  }
  const Eigen::VectorXd scale = (truth.s * truth.lambda.array()).sqrt().matrix();
  const Eigen::MatrixXd Y = truth.B.matrix() * scale.asDiagonal() * Xi + std::sqrt(truth.sigma2) * E;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(M, M);
  S.selfadjointView<Eigen::Lower>().rankUpdate(Y, 1.0 / static_cast<double>(n));
  S = S.selfadjointView<Eigen::Lower>();
  return Dataset::matrix(std::move(S), n);
}

int ExperimentConfig::M_for(long n) const {
  if (schedule == MSchedule::Fixed) return fixed_M;
  const double nn = static_cast<double>(n);
  const int M = static_cast<int>(std::lround(schedule_c * std::pow(nn / std::log(nn), 1.0 / 9.0)));
  return std::max(M, min_M);
}

void ExperimentConfig::validate() const {
  if (n_grid.empty()) throw std::invalid_argument("n_grid must not be empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2) throw std::invalid_argument("n_grid entries must be at least 2");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw std::invalid_argument("n_grid must be increasing");
  }
  if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
  if (r < 1) throw std::invalid_argument("r must be at least 1");
  if (min_M < 4 && regime != Regime::Matrix) throw std::invalid_argument("min_M must be at least 4");
  if (!(sigma2 > 0.0) || !(s > 0.0)) throw std::invalid_argument("sigma2 and s must be positive");
  check_eigenvalues(eigenvalues);
  if (regime == Regime::Matrix && eigenvalues.size() != r)
    throw std::invalid_argument("matrix regime needs exactly r eigenvalues");
  if (regime == Regime::Matrix && r > fixed_M) throw std::invalid_argument("r exceeds fixed_M");
  if (regime != Regime::Matrix && !(1 <= m.m_min && m.m_min <= m.m_max))
    throw std::invalid_argument("m-spec must satisfy 1 <= m_min <= m_max");
  fit.validate();
}

ModelParams matrix_truth(const ExperimentConfig& c) {
  std::mt19937_64 rng(counter_seed(c.base_seed, 0, 0));
  Eigen::MatrixXd B = random_stiefel(c.fixed_M, c.r, rng);
  canonicalize_signs(B);
  return ModelParams{StiefelPoint(std::move(B)), c.eigenvalues, c.sigma2, c.s};
}

std::optional<Slope> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t k = std::min(x.size(), y.size());
  if (k < 2) return std::nullopt;
  Eigen::VectorXd lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = lx.mean(), my = ly.mean();
  const double sxx = (lx.array() - mx).square().sum();
  if (!(sxx > 0.0)) return std::nullopt;
  const double b = ((lx.array() - mx) * (ly.array() - my)).sum() / sxx;
  Slope out{b, 0.0};
  if (k > 2) {
    const double rss = (ly.array() - my - b * (lx.array() - mx)).square().sum();
    out.se = std::sqrt(rss / static_cast<double>(k - 2) / sxx);
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t h = values.size() / 2;
  return values.size() % 2 == 1 ? values[h] : 0.5 * (values[h - 1] + values[h]);
}

RateResult rate_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto dims = cell_count(config);
  const std::size_t cells = dims[0] * dims[1];
  std::optional<ModelParams> truth;
  if (config.regime == Regime::Matrix) truth = matrix_truth(config);
  FitConfig fc = config.fit;
  fc.threads = 1;
  ExperimentConfig cfg = config;
  cfg.fit = fc;

  std::vector<RateRow> rows(cells);
  parallel_for(cells, config.threads, [&](std::size_t idx) {
    const long n = cfg.n_grid[idx / dims[1]];
    const int rep = static_cast<int>(idx % dims[1]);
    rows[idx] = cfg.regime == Regime::Matrix ? matrix_cell(cfg, *truth, n, rep) : functional_cell(cfg, n, rep);
  });

  RateResult out;
  out.rows = std::move(rows);
  for (const auto& row : out.rows)
    if (!row.converged) ++out.excluded;
  if (config.regime != Regime::Matrix) out.slope_kernel = slope_of(config, out.rows, &RateRow::loss_kernel);
  out.slope_B = slope_of(config, out.rows, &RateRow::error_B);
  out.slope_lambda = slope_of(config, out.rows, &RateRow::error_lambda);
  if (config.regime == Regime::Matrix) out.slope_kernel = slope_of(config, out.rows, &RateRow::loss_kernel);
  return out;
}

std::vector<ScoreRow> score_experiment(const ExperimentConfig& config) {
  if (config.regime != Regime::Matrix) throw std::invalid_argument("score_experiment needs the matrix regime");
  config.validate();
  const ModelParams truth = matrix_truth(config);
  const auto dims = cell_count(config);
  std::vector<ScoreRow> rows(dims[0] * dims[1]);
  parallel_for(rows.size(), config.threads, [&](std::size_t idx) {
    const long n = config.n_grid[idx / dims[1]];
    const int rep = static_cast<int>(idx % dims[1]);
    const Eigen::MatrixXd S =
        config.dry_run ? model_cov(truth) : sample_matrix(truth, n, cell_seed(config, n, rep)).sample_cov;
    rows[idx] = {n, rep, score_residual(truth, S, n, 0.0)};
  });
  return rows;
}

std::vector<KlRow> kl_ellipsoid_scan(const ModelParams& theta_star, const std::vector<double>& alphas,
                                     int samples_per_alpha, std::uint64_t seed) {
  theta_star.validate(false);
  if (samples_per_alpha < 1) throw std::invalid_argument("samples_per_alpha must be positive");
  const double ratio = theta_star.sigma2 / theta_star.s;
  for (double a : alphas)
    if (!(a > 0.0) || a * std::sqrt(1.0 / ratio) > 0.2)
      throw std::invalid_argument("alpha must be positive with alpha * sqrt(s / sigma2) <= 0.2");

  const int M = theta_star.basis_dim();
  const int r = theta_star.rank();
  const Eigen::MatrixXd Gamma_star = model_cov(theta_star);

  // Unit directions on the weighted ellipsoid, shared by all alphas.
  std::mt19937_64 rng(seed);
  std::vector<TangentVector> dirs;
  std::vector<Eigen::VectorXd> dz;
  for (int k = 0; k < samples_per_alpha; ++k) {
    Eigen::MatrixXd L = random_gaussian(r, r, rng).triangularView<Eigen::StrictlyLower>();
    const Eigen::MatrixXd A = L - L.transpose();
    const TangentVector U(theta_star.B, A, random_gaussian(M, r, rng));
    const Eigen::VectorXd D = random_gaussian(r, 1, rng);
    const double norm2 = ratio * U.A().squaredNorm() + U.C().squaredNorm() + ratio * D.squaredNorm();
    const double scale = 1.0 / std::sqrt(norm2);
    dirs.push_back(U.scaled(scale));
    dz.push_back(D * scale);
  }

  std::vector<KlRow> out;
  for (double a : alphas) {
    KlRow row;
    row.alpha = a;
    for (int k = 0; k < samples_per_alpha; ++k) {
      const StiefelPoint Bn = exp_map(dirs[k], a);
      const Eigen::VectorXd ln = (theta_star.lambda.array() * (a * dz[k].array()).exp()).matrix();
      const ModelParams p{Bn, ln, theta_star.sigma2, theta_star.s};
      row.ratios.push_back(kl_divergence(model_cov(p), Gamma_star) / (a * a));
    }
    row.min_ratio = *std::min_element(row.ratios.begin(), row.ratios.end());
    row.max_ratio = *std::max_element(row.ratios.begin(), row.ratios.end());
    row.median_ratio = median(row.ratios);
    out.push_back(std::move(row));
  }
  return out;
}

DesignStats design_concentration(const OrthoBasis& basis, int m, long n, const Eigen::MatrixXd& B_star,
                                 std::uint64_t seed) {
  if (m < 1 || n < 1) throw std::invalid_argument("design_concentration needs m, n >= 1");
  if (B_star.rows() != basis.size()) throw std::invalid_argument("B_star rows must equal the basis size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> udist(0.0, 1.0);
  const int M = basis.size();
  const Eigen::Index r = B_star.cols();
  DesignStats out;
  std::vector<double> times(static_cast<std::size_t>(m));
  for (long i = 0; i < n; ++i) {
    for (auto& t : times) t = udist(rng);
    const Eigen::MatrixXd Phi = design_matrix(basis, times);
    Eigen::MatrixXd R = Phi * Phi.transpose() / static_cast<double>(m);
    const Eigen::MatrixXd BRB = B_star.transpose() * R * B_star - Eigen::MatrixXd::Identity(r, r);
    R -= Eigen::MatrixXd::Identity(M, M);
    out.max_R_dev = std::max(out.max_R_dev, op_norm_sym(R));
    out.max_BRB_dev = std::max(out.max_BRB_dev, op_norm_sym(BRB));
  }
  return out;
}

InequalityReport inequality_oracles(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || B.cols() != A.cols())
    throw std::invalid_argument("inequality_oracles: A and B must be square of equal size");
  const SymEig ea = sym_eig_desc(A);
  const SymEig eb = sym_eig_desc(A + B);
  const Eigen::Index p = A.rows();
  InequalityReport rep;
  rep.weilandt_lhs = (ea.values - eb.values).squaredNorm();
  rep.weilandt_rhs = B.squaredNorm();
  const double slack = 1e-12 * (1.0 + A.norm());
  if (rep.weilandt_lhs > rep.weilandt_rhs * (1.0 + 1e-10) + slack * slack) ++rep.violations;

  const double bnorm = p > 0 ? op_norm_sym(B) : 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double up = j == 0 ? std::numeric_limits<double>::infinity() : ea.values[j - 1] - ea.values[j];
    const double down = ea.values[j] - (j + 1 < p ? ea.values[j + 1] : 0.0);
    const double tau = std::max(1.0 / up, 1.0 / down);
    Eigen::VectorXd q = eb.vectors.col(j);
    if (q.dot(ea.vectors.col(j)) < 0.0) q = -q;
    const double lhs = (q - ea.vectors.col(j)).norm();
    const double x = bnorm * tau;
    const double rhs = 5.0 * x + 4.0 * x * x;
    rep.eigvec_lhs.push_back(lhs);
    rep.eigvec_rhs.push_back(rhs);
    if (lhs > rhs + 1e-12) ++rep.violations;
  }
  return rep;
}

}  // namespace fpca
