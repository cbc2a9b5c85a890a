#pragma once

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <functional>
#include <span>
#include <vector>

#include "svf/errors.hpp"

namespace svf {

/// Nodes and weights for the weight function exp(-x^2) on (-inf, inf).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Hermite rule by Golub-Welsch: eigenvalues of the Jacobi matrix
/// (zero diagonal, off-diagonal sqrt(j/2)) via symmetric tridiagonal QL with
/// implicit shifts, carrying the first eigenvector row for the weights.
/// Nodes returned in ascending order; weights sum to sqrt(pi).
inline GaussHermiteRule gauss_hermite(int n) {
  if (n < 1) throw ParameterError("gauss_hermite: need at least one node");
  const auto un = static_cast<std::size_t>(n);
  std::vector<double> d(un, 0.0);      // diagonal -> eigenvalues
  std::vector<double> e(un, 0.0);      // subdiagonal, e[0..n-2]
  std::vector<double> z(un, 0.0);      // first row of the eigenvector matrix
  z[0] = 1.0;
  for (std::size_t j = 0; j + 1 < un; ++j) e[j] = std::sqrt(0.5 * static_cast<double>(j + 1));

  for (std::size_t l = 0; l < un; ++l) {
    int iterations = 0;
    while (true) {
      std::size_t m = l;
      for (; m + 1 < un; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= 1e-15 * dd) break;
      }
      if (m == l) break;
      if (++iterations > 60)
        throw Error("gauss_hermite: QL iteration failed to converge");
      double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
      double r = std::hypot(g, 1.0);
      g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, p = 0.0;
      bool underflow = false;
      for (std::size_t i = m; i-- > l;) {
        double f = s * e[i];
        const double b = c * e[i];
        r = std::hypot(f, g);
        e[i + 1] = r;
        if (r == 0.0) {
          d[i + 1] -= p;
          e[m] = 0.0;
          underflow = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[i + 1] - p;
        r = (d[i] - g) * s + 2.0 * c * b;
        p = s * r;
        d[i + 1] = g + p;
        g = c * r - b;
        f = z[i + 1];
        z[i + 1] = s * z[i] + c * f;
        z[i] = c * z[i] - s * f;
      }
      if (underflow) continue;
      d[l] -= p;
      e[l] = g;
      e[m] = 0.0;
    }
  }

  std::vector<std::size_t> order(un);
  for (std::size_t i = 0; i < un; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  GaussHermiteRule rule;
  rule.nodes.reserve(un);
  rule.weights.reserve(un);
  const double mu0 = std::sqrt(M_PI);  // total mass of exp(-x^2)
  for (std::size_t i : order) {
    rule.nodes.push_back(d[i]);
    rule.weights.push_back(mu0 * z[i] * z[i]);
  }
  return rule;
}

/// E[g(Z)] for Z ~ N(0, sigma2), by n-node Gauss-Hermite quadrature.
template <typename G>
double gauss_expect_1d(G&& g, double sigma2, int n = 21) {
  const GaussHermiteRule rule = gauss_hermite(n);
  const double scale = std::sqrt(2.0 * sigma2);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += rule.weights[i] * g(scale * rule.nodes[i]);
  return acc / std::sqrt(M_PI);
}

/// E[f(Z_1,...,Z_k)] for i.i.d. Z_j ~ N(0, sigma2), by tensorized
/// Gauss-Hermite quadrature with n nodes per dimension (n^k evaluations).
template <typename F>
double gauss_expect_nd(F&& f, int k, double sigma2, int n = 21) {
  if (k < 1) throw ParameterError("gauss_expect_nd: dimension must be positive");
  const GaussHermiteRule rule = gauss_hermite(n);
  const double scale = std::sqrt(2.0 * sigma2);
  const double norm = std::pow(M_PI, -0.5 * k);

  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  std::vector<double> x(static_cast<std::size_t>(k), 0.0);
  double acc = 0.0;
  while (true) {
    double w = 1.0;
    for (int j = 0; j < k; ++j) {
      const auto i = static_cast<std::size_t>(idx[static_cast<std::size_t>(j)]);
      w *= rule.weights[i];
      x[static_cast<std::size_t>(j)] = scale * rule.nodes[i];
    }
    acc += w * f(std::span<const double>(x));
    // Odometer increment over the k-fold index.
    int j = 0;
    for (; j < k; ++j) {
      auto& ij = idx[static_cast<std::size_t>(j)];
      if (++ij < n) break;
      ij = 0;
    }
    if (j == k) break;
  }
  return acc * norm;
}

}  // namespace svf
