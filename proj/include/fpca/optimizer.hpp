#pragma once

/**
 * @file optimizer.hpp
 * @brief Geodesic descent with Armijo backtracking on S_{M,r} x R^r.
 *
 * Directions are preconditioned by the inverse Fisher information at the
 * current iterate. In the matrix regime this is Fisher scoring; in the
 * functional regimes the same operator (with the skew part capped) serves
 * only as a preconditioner.
 */

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fpca/bspline.hpp"
#include "fpca/calculus.hpp"
#include "fpca/model.hpp"

namespace fpca {

enum class InitKind { Pooled, Given, Random };

InitKind parse_init(const std::string& name);

struct FitConfig {
  int max_iter = 500;
  double grad_tol = 1e-8;
  double step_shrink = 0.5;
  double armijo_c = 1e-4;
  int max_halvings = 60;
  InitKind init = InitKind::Pooled;
  std::optional<ModelParams> start;  // used with InitKind::Given
  std::uint64_t seed = 0;            // used with InitKind::Random
  int restarts = 3;                  // used with InitKind::Random
  int threads = 0;                   // restarts in parallel; <= 0 means default

  void validate() const;
};

struct TraceRow {
  double loss;
  double grad_norm;
  double step;
};

struct FitResult {
  ModelParams params;
  double final_loss = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool stalled = false;
  std::vector<TraceRow> trace;
};

/// Loss and intrinsic gradient of one dataset, with the model's fixed
/// (sigma^2, s). In the functional regimes the per-curve designs are cached.
class Objective {
 public:
  /// `basis` may be null for the matrix regime.
  Objective(const Dataset& data, const OrthoBasis* basis, double sigma2, double s);

  Regime regime() const { return regime_; }
  int basis_dim() const { return M_; }
  double sigma2() const { return sigma2_; }
  double s() const { return s_; }

  double loss(const ModelParams& params) const;
  LossGrad loss_grad(const ModelParams& params) const;
  /// Descent direction P(grad) for the preconditioner at params.
  ProductTangent direction(const ModelParams& params, const GradPair& grad) const;

 private:
  Regime regime_;
  int M_;
  double sigma2_;
  double s_;
  Eigen::MatrixXd S_;
  std::optional<CurveDesigns> designs_;
};

/// Pooled starting value. Matrix regime: top-r eigenpairs (l_k, v_k) of S with
/// lambda_k = max((l_k - sigma^2)/s, 1e-6). Functional regimes: ridge
/// least-squares fit of the off-diagonal products Y_ij Y_ik onto
/// phi(T_ij) (x) phi(T_ik), then its top-r eigenpairs.
/// Throws std::invalid_argument if r exceeds what the data can identify.
ModelParams init_params(const Dataset& data, const OrthoBasis* basis, int r, double sigma2, double s = 1.0);

inline constexpr double kInitLambdaFloor = 1e-6;

struct StepResult {
  ModelParams params;
  double loss;
  double step_size;  // 0 when the line search stalled
  bool stalled;
};

/// One preconditioned geodesic step with Armijo backtracking.
StepResult step(const ModelParams& params, const Objective& objective, const FitConfig& config);

/// Minimizes the negative log-likelihood; returns the canonicalized result
/// of the best restart (lowest loss, earliest restart on ties).
FitResult fit(const Dataset& data, const OrthoBasis* basis, int r, double sigma2, double s,
              const FitConfig& config);

}  // namespace fpca
