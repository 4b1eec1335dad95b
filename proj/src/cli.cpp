#include "fpca/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "fpca/bspline.hpp"
#include "fpca/io.hpp"
#include "fpca/linalg.hpp"
#include "fpca/matrixcase.hpp"
#include "fpca/optimizer.hpp"
#include "fpca/parallel.hpp"
#include "fpca/sim.hpp"

namespace fpca::cli {

namespace {

struct OptionSpec {
  const char* name;
  const char* help;
  bool required;
};

struct VerbSpec {
  const char* verb;
  const char* help;
  std::vector<OptionSpec> options;
};

const std::vector<VerbSpec>& specs() {
  static const std::vector<VerbSpec> s = {
      {"basis",
       "Evaluate the orthonormal spline basis on a grid",
       {{"M", "basis size (>= 4)", true}, {"grid", "number of grid points (default 101)", false},
        {"out", "output CSV t,phi_1,...,phi_M", true}}},
      {"simulate",
       "Draw one dataset from an experiment config (first n, replicate 0)",
       {{"config", "experiment config JSON", true}, {"out", "output CSV", true}}},
      {"fit",
       "Fit the rank-r model by restricted maximum likelihood",
       {{"data", "curve CSV (curve_id,t,y) or covariance CSV for --regime matrix", true},
        {"M", "basis size (functional regimes)", false},
        {"r", "rank", true},
        {"sigma2", "noise variance", true},
        {"s", "signal scale (default 1)", false},
        {"regime", "sparse | dense | matrix (default sparse)", false},
        {"n", "sample size behind the covariance (matrix regime; default: sidecar JSON, else 1)", false},
        {"init", "pooled | random | given (default pooled)", false},
        {"start", "starting model JSON (implies --init given)", false},
        {"restarts", "random restarts (default 3)", false},
        {"max-iter", "iteration limit (default 500)", false},
        {"tol", "gradient-norm tolerance (default 1e-8)", false},
        {"out", "output model JSON", true},
        {"trace", "optional per-iteration CSV", false}}},
      {"pca",
       "Closed-form PCA estimate from a sample covariance",
       {{"cov", "covariance CSV", true},
        {"n", "sample size (default: sidecar JSON)", false},
        {"r", "rank", true},
        {"s", "signal scale (default 1)", false},
        {"sigma2", "noise variance (default 1)", false},
        {"out", "output model JSON", true}}},
      {"rates",
       "Monte Carlo rate experiment",
       {{"config", "experiment config JSON", true}, {"out", "output CSV", true}}},
      {"score-check",
       "Score-representation residuals (matrix regime)",
       {{"config", "experiment config JSON (matrix regime)", true}, {"out", "output CSV", true}}},
      {"kl-scan",
       "KL divergence on ellipsoid boundaries around theta*",
       {{"model", "theta* model JSON", false},
        {"config", "experiment config JSON (matrix truth) when --model is absent", false},
        {"alphas", "comma-separated radii (default 1e-3,3e-3,1e-2,3e-2)", false},
        {"samples", "directions per radius (default 200)", false},
        {"out", "output CSV", true}}},
      {"design-check",
       "Concentration of R_i = Phi_i Phi_i^T / m around the identity",
       {{"M", "basis size", true},
        {"m", "comma-separated points per curve", true},
        {"n", "curves per m", true},
        {"r", "columns of the random B* (default 2)", false},
        {"out", "output CSV", true}}},
  };
  return s;
}

const VerbSpec& spec_of(const std::string& verb) {
  for (const auto& s : specs())
    if (verb == s.verb) return s;
  throw UsageError("unknown verb '" + verb + "'");
}

bool has(const Command& c, const std::string& key) { return c.options.count(key) > 0; }

const std::string& raw(const Command& c, const std::string& key) {
  const auto it = c.options.find(key);
  if (it == c.options.end()) throw UsageError("missing --" + key);
  return it->second;
}

long get_long(const Command& c, const std::string& key) {
  const std::string& v = raw(c, key);
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw UsageError("--" + key + ": expected an integer, got '" + v + "'");
  return out;
}

int get_int(const Command& c, const std::string& key) { return static_cast<int>(get_long(c, key)); }

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw UsageError("--" + key + ": expected a number, got '" + v + "'");
  return out;
}

double get_double(const Command& c, const std::string& key) { return to_double(key, raw(c, key)); }

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

template <class T, class Get>
T opt_or(const Command& c, const std::string& key, T fallback, Get get) {
  return has(c, key) ? get(c, key) : fallback;
}

void say(const Command& c, std::ostream& out, const std::string& msg) {
  if (!c.quiet) out << msg << "\n";
}

ExperimentConfig load_config(const Command& c) {
  ExperimentConfig cfg = read_config_json(raw(c, "config"));
  if (c.seed) {
    cfg.base_seed = *c.seed;
    cfg.fit.seed = *c.seed;
  }
  if (c.threads > 0) cfg.threads = c.threads;
  return cfg;
}

int run_basis(const Command& c, std::ostream& out) {
  const int M = get_int(c, "M");
  const int grid = opt_or(c, "grid", 101, get_int);
  if (grid < 2) throw UsageError("--grid: must be at least 2");
  OrthoBasis basis = [&] {
    try {
      return make_basis(M);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--M: ") + e.what());
    }
  }();
  std::string csv = "t";
  for (int k = 1; k <= M; ++k) csv += ",phi_" + std::to_string(k);
  csv += "\n";
  for (int i = 0; i < grid; ++i) {
    const double t = static_cast<double>(i) / (grid - 1);
    const Eigen::VectorXd phi = eval_basis(basis, t);
    csv += format_double(t);
    for (int k = 0; k < M; ++k) csv += "," + format_double(phi[k]);
    csv += "\n";
  }
  write_atomic(raw(c, "out"), csv);
  say(c, out, "wrote basis M=" + std::to_string(M) + " on " + std::to_string(grid) + " points");
  return kExitOk;
}

int run_simulate(const Command& c, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c);
  const long n = cfg.n_grid.front();
  const std::uint64_t seed = replicate_seed(cfg.base_seed, n, 0);
  if (cfg.regime == Regime::Matrix) {
    const Dataset d = sample_matrix(matrix_truth(cfg), n, seed);
    write_atomic(raw(c, "out"), matrix_to_csv(d.sample_cov));
    write_atomic(sidecar_path(raw(c, "out")), sidecar_json(n));
  } else {
    const TrueKernel truth = make_true_kernel(cfg.family, cfg.eigenvalues, cfg.reference_M);
    write_atomic(raw(c, "out"), curves_to_csv(sample_functional(truth, cfg.regime, n, cfg.m, cfg.sigma2, seed)));
  }
  say(c, out, "simulated " + regime_name(cfg.regime) + " data, n=" + std::to_string(n));
  return kExitOk;
}

int run_fit(const Command& c, std::ostream& out) {
  Regime regime = Regime::Sparse;
  if (has(c, "regime")) {
    try {
      regime = parse_regime(raw(c, "regime"));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--regime: ") + e.what());
    }
  }
  const int r = get_int(c, "r");
  const double sigma2 = get_double(c, "sigma2");
  const double s = opt_or(c, "s", 1.0, get_double);
  if (!(sigma2 > 0.0)) throw UsageError("--sigma2: must be positive");
  if (!(s > 0.0)) throw UsageError("--s: must be positive");
  if (r < 1) throw UsageError("--r: must be at least 1");

  FitConfig fc;
  fc.max_iter = opt_or(c, "max-iter", fc.max_iter, get_int);
  fc.grad_tol = opt_or(c, "tol", fc.grad_tol, get_double);
  fc.restarts = opt_or(c, "restarts", fc.restarts, get_int);
  fc.threads = c.threads;
  if (c.seed) fc.seed = *c.seed;
  if (has(c, "init")) {
    try {
      fc.init = parse_init(raw(c, "init"));
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--init: ") + e.what());
    }
  }
  if (has(c, "start")) {
    fc.init = InitKind::Given;
    fc.start = read_model_json(raw(c, "start"));
  }
  if (fc.init == InitKind::Given && !fc.start) throw UsageError("--init given needs --start");
  try {
    fc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  std::optional<OrthoBasis> basis;
  Dataset data;
  if (regime == Regime::Matrix) {
    const Eigen::MatrixXd S = read_matrix_csv(raw(c, "data"));
    if (S.rows() != S.cols()) throw DataFormatError("covariance matrix must be square");
    if ((S - S.transpose()).norm() > 1e-8 * (1.0 + S.norm())) throw DataFormatError("covariance matrix must be symmetric");
    const auto side = sidecar_path(raw(c, "data"));
    const long n = has(c, "n") ? get_long(c, "n") : (std::filesystem::exists(side) ? read_sidecar_n(side) : 1L);
    data = Dataset::matrix(0.5 * (S + S.transpose()), n);
  } else {
    if (!has(c, "M")) throw UsageError("--M is required for functional regimes");
    const int M = get_int(c, "M");
    if (M < 4) throw UsageError("--M: must be at least 4");
    basis.emplace(make_basis(M));
    data = read_curves_csv(raw(c, "data"), regime);
  }
  const FitResult fr = fit(data, basis ? &*basis : nullptr, r, sigma2, s, fc);
  write_atomic(raw(c, "out"), model_to_json(fr.params));
  if (has(c, "trace")) {
    std::string csv = "iteration,loss,grad_norm,step\n";
    for (std::size_t i = 0; i < fr.trace.size(); ++i)
      csv += std::to_string(i) + "," + format_double(fr.trace[i].loss) + "," + format_double(fr.trace[i].grad_norm) +
             "," + format_double(fr.trace[i].step) + "\n";
    write_atomic(raw(c, "trace"), csv);
  }
  say(c, out,
      std::string(fr.converged ? "converged" : "did not converge") + " after " + std::to_string(fr.iterations) +
          " iterations, loss " + format_double(fr.final_loss) + ", gradient norm " + format_double(fr.grad_norm));
  return fr.converged ? kExitOk : kExitNotConverged;
}

int run_pca(const Command& c, std::ostream& out) {
  const Eigen::MatrixXd S = read_matrix_csv(raw(c, "cov"));
  if (S.rows() != S.cols()) throw DataFormatError("covariance matrix must be square");
  const auto side = sidecar_path(raw(c, "cov"));
  const long n = has(c, "n") ? get_long(c, "n") : (std::filesystem::exists(side) ? read_sidecar_n(side) : 0L);
  if (n < 1) throw UsageError("--n: must be positive (or provide a sidecar JSON with field 'n')");
  const ModelParams p =
      pca_fit(0.5 * (S + S.transpose()), get_int(c, "r"), opt_or(c, "s", 1.0, get_double), opt_or(c, "sigma2", 1.0, get_double));
  write_atomic(raw(c, "out"), model_to_json(p));
  say(c, out, "wrote PCA model with r=" + std::to_string(p.rank()));
  return kExitOk;
}

std::string rate_csv(const RateResult& res) {
  std::string csv = "n,replicate,M,loss_kernel,error_B,principal_angle,error_lambda,beta,converged,iterations\n";
  for (const auto& r : res.rows)
    csv += std::to_string(r.n) + "," + std::to_string(r.replicate) + "," + std::to_string(r.M) + "," +
           format_double(r.loss_kernel) + "," + format_double(r.error_B) + "," + format_double(r.principal_angle) +
           "," + format_double(r.error_lambda) + "," + format_double(r.beta) + "," + (r.converged ? "1" : "0") + "," +
           std::to_string(r.iterations) + "\n";
  auto slope_line = [](const char* name, const std::optional<Slope>& s) {
    return std::string("# ") + name + "," + (s ? format_double(s->slope) + "," + format_double(s->se) : "NA,NA") + "\n";
  };
  csv += slope_line("slope_kernel", res.slope_kernel);
  csv += slope_line("slope_B", res.slope_B);
  csv += slope_line("slope_lambda", res.slope_lambda);
  csv += "# excluded," + std::to_string(res.excluded) + "\n";
  return csv;
}

int run_rates(const Command& c, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c);
  const RateResult res = rate_experiment(cfg);
  write_atomic(raw(c, "out"), rate_csv(res));
  if (res.slope_kernel) say(c, out, "kernel-loss slope " + format_double(res.slope_kernel->slope));
  if (res.slope_lambda) say(c, out, "eigenvalue-error slope " + format_double(res.slope_lambda->slope));
  if (res.excluded > 0) say(c, out, "warning: " + std::to_string(res.excluded) + " unconverged cells excluded");
  return kExitOk;
}

int run_score(const Command& c, std::ostream& out) {
  const ExperimentConfig cfg = load_config(c);
  const auto rows = score_experiment(cfg);
  std::string csv =
      "n,replicate,gamma_n,residual_B,residual_lambda,error_B,error_lambda,route_gap,residual_B_over_gamma2,"
      "error_B_over_gamma\n";
  for (const auto& row : rows) {
    const ScoreReport& r = row.report;
    csv += std::to_string(row.n) + "," + std::to_string(row.replicate) + "," + format_double(r.gamma_n) + "," +
           format_double(r.residual_B) + "," + format_double(r.residual_lambda) + "," + format_double(r.error_B) +
           "," + format_double(r.error_lambda) + "," + format_double(r.route_gap) + "," +
           format_double(r.residual_B / (r.gamma_n * r.gamma_n)) + "," + format_double(r.error_B / r.gamma_n) + "\n";
  }
  for (long n : cfg.n_grid) {
    std::vector<double> a, b;
    for (const auto& row : rows)
      if (row.n == n) {
        a.push_back(row.report.residual_B / (row.report.gamma_n * row.report.gamma_n));
        b.push_back(row.report.error_B / row.report.gamma_n);
      }
    csv += "# median," + std::to_string(n) + "," + format_double(median(a)) + "," + format_double(median(b)) + "\n";
  }
  write_atomic(raw(c, "out"), csv);
  say(c, out, "wrote " + std::to_string(rows.size()) + " score rows");
  return kExitOk;
}

int run_kl(const Command& c, std::ostream& out) {
  ModelParams theta = [&] {
    if (has(c, "model")) return read_model_json(raw(c, "model"));
    if (has(c, "config")) return matrix_truth(load_config(c));
    throw UsageError("kl-scan needs --model or --config");
  }();
  std::vector<double> alphas = {1e-3, 3e-3, 1e-2, 3e-2};
  if (has(c, "alphas")) {
    alphas.clear();
    for (const auto& a : split_commas(raw(c, "alphas"))) alphas.push_back(to_double("alphas", a));
  }
  const int samples = opt_or(c, "samples", 200, get_int);
  std::vector<KlRow> rows;
  try {
    rows = kl_ellipsoid_scan(theta, alphas, samples, c.seed.value_or(0));
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--alphas/--samples: ") + e.what());
  }
  std::string csv = "alpha,min_ratio,median_ratio,max_ratio\n";
  for (const auto& r : rows)
    csv += format_double(r.alpha) + "," + format_double(r.min_ratio) + "," + format_double(r.median_ratio) + "," +
           format_double(r.max_ratio) + "\n";
  write_atomic(raw(c, "out"), csv);
  say(c, out, "scanned " + std::to_string(rows.size()) + " radii");
  return kExitOk;
}

int run_design(const Command& c, std::ostream& out) {
  const int M = get_int(c, "M");
  if (M < 4) throw UsageError("--M: must be at least 4");
  const int r = opt_or(c, "r", 2, get_int);
  if (r < 1 || r > M) throw UsageError("--r: must lie in [1, M]");
  const long n = get_long(c, "n");
  if (n < 1) throw UsageError("--n: must be positive");
  const OrthoBasis basis = make_basis(M);
  const std::uint64_t seed = c.seed.value_or(0);
  std::mt19937_64 rng(counter_seed(seed, 0, 0));
  const Eigen::MatrixXd Bs = random_stiefel(M, r, rng);
  std::string csv = "m,max_R_dev,max_BRB_dev\n";
  for (const auto& ms : split_commas(raw(c, "m"))) {
    long m = 0;
    const auto [ptr, ec] = std::from_chars(ms.data(), ms.data() + ms.size(), m);
    if (ec != std::errc() || ptr != ms.data() + ms.size() || m < 1) throw UsageError("--m: bad entry '" + ms + "'");
    const DesignStats d = design_concentration(basis, static_cast<int>(m), n, Bs, counter_seed(seed, m, 1));
    csv += std::to_string(m) + "," + format_double(d.max_R_dev) + "," + format_double(d.max_BRB_dev) + "\n";
  }
  write_atomic(raw(c, "out"), csv);
  say(c, out, "wrote design statistics");
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v = [] {
    std::vector<std::string> out;
    for (const auto& s : specs()) out.push_back(s.verb);
    return out;
  }();
  return v;
}

Command parse(const std::vector<std::string>& args) {
  CLI::App app{"REML estimation of functional and spiked-covariance principal components", "fpca"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Command cmd;
  int threads = 0;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "worker threads (default: hardware concurrency)");
  app.add_flag("--quiet", cmd.quiet, "suppress progress output");
  auto* seed_opt = app.add_option("--seed", seed, "base seed");

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& spec : specs()) {
    CLI::App* sub = app.add_subcommand(spec.verb, spec.help);
    auto& vals = values[spec.verb];
    for (const auto& o : spec.options) {
      auto* opt = sub->add_option(std::string("--") + o.name, vals[o.name], o.help);
      if (o.required) opt->required();
    }
    subs[spec.verb] = sub;
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    CLI::App* active = nullptr;
    for (auto* s : app.get_subcommands()) active = s;
    throw HelpRequested(active ? active->help() : app.help());
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (msg.empty()) msg = e.get_name();
    throw UsageError(msg + "\n" + app.help());
  }
  const auto chosen = app.get_subcommands();
  cmd.verb = chosen.front()->get_name();
  for (const auto& o : spec_of(cmd.verb).options) {
    CLI::App* sub = subs[cmd.verb];
    if (sub->count(std::string("--") + o.name) > 0) cmd.options[o.name] = values[cmd.verb][o.name];
  }
  if (threads < 0) throw UsageError("--threads: must be nonnegative");
  cmd.threads = threads;
  if (seed_opt->count() > 0) cmd.seed = seed;
  return cmd;
}

int run(const Command& cmd, std::ostream& out, std::ostream& err) {
  if (cmd.threads > 0) set_default_threads(cmd.threads);
  try {
    if (cmd.verb == "basis") return run_basis(cmd, out);
    if (cmd.verb == "simulate") return run_simulate(cmd, out);
    if (cmd.verb == "fit") return run_fit(cmd, out);
    if (cmd.verb == "pca") return run_pca(cmd, out);
    if (cmd.verb == "rates") return run_rates(cmd, out);
    if (cmd.verb == "score-check") return run_score(cmd, out);
    if (cmd.verb == "kl-scan") return run_kl(cmd, out);
    if (cmd.verb == "design-check") return run_design(cmd, out);
    throw UsageError("unknown verb '" + cmd.verb + "'");
  } catch (const UsageError& e) {
    err << "fpca " << cmd.verb << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const FileNotFoundError& e) {
    err << "fpca " << cmd.verb << ": " << e.what() << "\n";
    return kExitNoInput;
  } catch (const DataFormatError& e) {
    err << "fpca " << cmd.verb << ": " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const std::invalid_argument& e) {
    err << "fpca " << cmd.verb << ": invalid input: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const std::runtime_error& e) {
    err << "fpca " << cmd.verb << ": " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const std::exception& e) {
    err << "fpca " << cmd.verb << ": internal error: " << e.what() << "\n";
    return kExitSoftware;
  }
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    cmd = parse(args);
  } catch (const HelpRequested& h) {
    out << h.what();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "fpca: " << e.what();
    return kExitUsage;
  }
  return run(cmd, out, err);
}

}  // namespace fpca::cli
