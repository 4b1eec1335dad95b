#pragma once

/**
 * @file io.hpp
 * @brief CSV/JSON readers and writers for datasets, models and experiment
 *        configurations. All writers go through write_atomic.
 *
 * Curve CSV: header `curve_id,t,y`, one observation per row; rows are
 * grouped into curves by id in order of first appearance.
 * Covariance CSV: M rows of M comma-separated numbers, no header, with the
 * sample size in a sidecar JSON `{"n": ...}` next to it (same stem, .json).
 * Model JSON: {"M", "r", "sigma2", "s", "lambda": [..], "B": [[row], ...]}.
 */

#include <filesystem>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "fpca/model.hpp"
#include "fpca/sim.hpp"

namespace fpca {

/// Malformed input; row is 1-based (header = row 1), 0 when not row-specific.
class DataFormatError : public std::runtime_error {
 public:
  DataFormatError(const std::string& what, long row = 0) : std::runtime_error(what), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

class FileNotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest round-trip representation of a double.
std::string format_double(double x);

Dataset parse_curves_csv(const std::string& text, Regime regime);
Dataset read_curves_csv(const std::filesystem::path& path, Regime regime);
std::string curves_to_csv(const Dataset& data);

Eigen::MatrixXd parse_matrix_csv(const std::string& text);
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);
std::string matrix_to_csv(const Eigen::MatrixXd& A);

std::string model_to_json(const ModelParams& params);
ModelParams model_from_json(const std::string& text);
ModelParams read_model_json(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& cov_path);
long read_sidecar_n(const std::filesystem::path& path);
std::string sidecar_json(long n);

/// Keys mirror ExperimentConfig: regime, n_grid, M_schedule ("fixed" |
/// "corollary1"), schedule_c, M, min_M, m_min, m_max, m, replicates,
/// base_seed, family, reference_M, eigenvalues, r, sigma2, s, max_iter,
/// grad_tol, threads, dry_run. Unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig read_config_json(const std::filesystem::path& path);

}  // namespace fpca
