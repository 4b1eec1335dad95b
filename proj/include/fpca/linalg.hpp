#pragma once

#include <cstdint>
#include <random>
#include <span>

#include <Eigen/Dense>

namespace fpca {

/// Eigenpairs of a symmetric matrix, eigenvalues in decreasing order.
struct SymEig {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

SymEig sym_eig_desc(const Eigen::MatrixXd& A);

/// (A + A^T) / 2
inline Eigen::MatrixXd sym_part(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }
/// (A - A^T) / 2
inline Eigen::MatrixXd skew_part(const Eigen::MatrixXd& A) { return 0.5 * (A - A.transpose()); }

/// Flips each column so that its largest-magnitude entry is positive
/// (ties go to the lowest row index).
void canonicalize_signs(Eigen::MatrixXd& B);

/// Flips each column of B so that B_k^T ref_k >= 0.
void align_signs(Eigen::MatrixXd& B, const Eigen::MatrixXd& ref);

/// ||sin Theta||_F between the column spans of two orthonormal frames.
double principal_angle_distance(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2);

/// Largest principal angle (radians) between two orthonormal frames.
double max_principal_angle(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2);

/// Q factor of the QR decomposition of an M x r standard Gaussian matrix.
Eigen::MatrixXd random_stiefel(int M, int r, std::mt19937_64& rng);

Eigen::MatrixXd random_gaussian(int rows, int cols, std::mt19937_64& rng);

/// Pairwise (cascade) summation; order depends only on the input length.
double pairwise_sum(std::span<const double> values);

/// Mixes a base seed with two counters into a replicate seed (splitmix64 steps).
std::uint64_t counter_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

}  // namespace fpca
