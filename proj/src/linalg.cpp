#include "fpca/linalg.hpp"
#include "fpca/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace fpca {

SymEig sym_eig_desc(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym_part(A));
  SymEig out;
  out.values = eig.eigenvalues().reverse();
  out.vectors = eig.eigenvectors().rowwise().reverse();
  return out;
}

void canonicalize_signs(Eigen::MatrixXd& B) {
  for (Eigen::Index k = 0; k < B.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < B.rows(); ++i) {
      if (std::abs(B(i, k)) > best) {
        best = std::abs(B(i, k));
        arg = i;
      }
    }
    if (B(arg, k) < 0.0) B.col(k) *= -1.0;
  }
}

void align_signs(Eigen::MatrixXd& B, const Eigen::MatrixXd& ref) {
  for (Eigen::Index k = 0; k < B.cols(); ++k)
    if (B.col(k).dot(ref.col(k)) < 0.0) B.col(k) *= -1.0;
}

double principal_angle_distance(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2) {
  // ||sin Theta||_F^2 = r - ||B1^T B2||_F^2
  const double r = static_cast<double>(B1.cols());
  return std::sqrt(std::max(0.0, r - (B1.transpose() * B2).squaredNorm()));
}

double max_principal_angle(const Eigen::MatrixXd& B1, const Eigen::MatrixXd& B2) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B1.transpose() * B2);
  const double smallest = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smallest, -1.0, 1.0));
}

Eigen::MatrixXd random_gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd Z(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) Z(i, j) = normal(rng);
  return Z;
}

Eigen::MatrixXd random_stiefel(int M, int r, std::mt19937_64& rng) {
  const Eigen::MatrixXd Z = random_gaussian(M, r, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(M, r);
  // Make the factorization unique: diag(R) > 0.
  const Eigen::MatrixXd R = qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  for (int k = 0; k < r; ++k)
    if (R(k, k) < 0.0) Q.col(k) *= -1.0;
  return Q;
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 16;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t counter_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0x2545F4914F6CDD1DULL));
}

}  // namespace fpca

namespace fpca {

namespace {
std::atomic<int> g_threads{0};
}

int default_threads() {
  const int t = g_threads.load();
  if (t > 0) return t;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_default_threads(int threads) { g_threads.store(threads > 0 ? threads : 0); }

}  // namespace fpca
