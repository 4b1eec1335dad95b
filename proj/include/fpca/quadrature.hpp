#pragma once

#include <span>
#include <vector>

namespace fpca {

/// Nodes and weights of a quadrature rule.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// n-point Gauss-Legendre rule on [a, b]; exact for polynomials of degree 2n-1.
QuadratureRule gauss_legendre(int n, double a = 0.0, double b = 1.0);

/// Composite rule: an n-point Gauss-Legendre rule on each panel
/// [breaks[i], breaks[i+1]]. Zero-length panels are skipped.
QuadratureRule composite_gauss_legendre(std::span<const double> breaks, int n);

}  // namespace fpca
