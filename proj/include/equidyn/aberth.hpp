#pragma once

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "equidyn/core.hpp"

namespace equidyn {

// Simultaneous root finding for dense univariate complex polynomials
// (coefficients ascending). Aberth-Ehrlich sweeps with a companion-matrix
// eigenvalue fallback, then Newton polishing.

struct RootResult {
  std::vector<Cx> roots;          // finite roots, repeated per multiplicity
  int leading_drop = 0;           // leading coefficients treated as zero
  bool used_fallback = false;
};

namespace detail {

// Evaluates p and p' by a joint Horner pass.
inline void horner2(const std::vector<Cx>& c, Cx z, Cx& p, Cx& dp) {
  p = Cx(0.0);
  dp = Cx(0.0);
  for (std::size_t i = c.size(); i-- > 0;) {
    dp = dp * z + p;
    p = p * z + c[i];
  }
}

inline std::vector<Cx> companion_roots(const std::vector<Cx>& c) {
  int m = static_cast<int>(c.size()) - 1;
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    a(i, m - 1) = -c[static_cast<std::size_t>(i)] / c[static_cast<std::size_t>(m)];
    if (i > 0) a(i, i - 1) = Cx(1.0);
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(a);
  std::vector<Cx> roots(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) roots[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
  return roots;
}

inline void newton_polish(const std::vector<Cx>& c, std::vector<Cx>& roots) {
  for (Cx& z : roots) {
    Cx best = z;
    Cx p, dp;
    horner2(c, z, p, dp);
    double best_res = std::abs(p);
    Cx cur = z;
    for (int it = 0; it < 8; ++it) {
      horner2(c, cur, p, dp);
      if (std::abs(dp) < 1e-300) break;
      cur -= p / dp;
      horner2(c, cur, p, dp);
      double res = std::abs(p);
      if (res < best_res) {
        best_res = res;
        best = cur;
      } else {
        break;
      }
    }
    z = best;
  }
}

}  // namespace detail

// Roots of sum c_i z^i. Leading coefficients below drop_tol (relative to the
// largest coefficient) are stripped and reported in leading_drop; the caller
// owns their projective interpretation.
inline RootResult polynomial_roots(std::vector<Cx> c, double drop_tol = 1e-14,
                                   double update_tol = 1e-13, int max_sweeps = 200) {
  RootResult out;
  double cmax = 0.0;
  for (const Cx& v : c) cmax = std::max(cmax, std::abs(v));
  require(cmax > 0.0, "DegenerateForm", "polynomial is identically zero");
  for (Cx& v : c) v /= cmax;

  while (c.size() > 1 && std::abs(c.back()) <= drop_tol) {
    c.pop_back();
    ++out.leading_drop;
  }
  // Exact zero roots come off without iteration.
  std::size_t zero_roots = 0;
  while (c.size() > 1 && c.front() == Cx(0.0)) {
    c.erase(c.begin());
    ++zero_roots;
  }
  out.roots.assign(zero_roots, Cx(0.0));
  int m = static_cast<int>(c.size()) - 1;
  if (m == 0) return out;

  double r0 = std::pow(std::abs(c.front()) / std::abs(c.back()), 1.0 / m);
  r0 = std::clamp(r0 * 1.3 + 0.1, 1e-8, 1e8);
  std::vector<Cx> z(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double t = 2.0 * kPi * (i + 0.25) / m + 0.79;
    z[static_cast<std::size_t>(i)] = r0 * Cx(std::cos(t), std::sin(t));
  }

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double worst = 0.0;
    for (int i = 0; i < m; ++i) {
      Cx zi = z[static_cast<std::size_t>(i)];
      Cx p, dp;
      detail::horner2(c, zi, p, dp);
      if (p == Cx(0.0)) continue;
      if (std::abs(dp) < 1e-300) {
        z[static_cast<std::size_t>(i)] = zi + Cx(1e-8, 1e-8);
        worst = 1.0;
        continue;
      }
      Cx newton = p / dp;
      Cx repulse(0.0);
      for (int j = 0; j < m; ++j) {
        if (j == i) continue;
        Cx diff = zi - z[static_cast<std::size_t>(j)];
        if (std::abs(diff) < 1e-300) diff = Cx(1e-14, 1e-14);
        repulse += Cx(1.0) / diff;
      }
      Cx denom = Cx(1.0) - newton * repulse;
      Cx w = (std::abs(denom) < 1e-300) ? newton : newton / denom;
      z[static_cast<std::size_t>(i)] = zi - w;
      worst = std::max(worst, std::abs(w) / std::max(1.0, std::abs(zi)));
    }
    converged = worst <= update_tol;
  }

  if (!converged) {
    z = detail::companion_roots(c);
    out.used_fallback = true;
  }
  detail::newton_polish(c, z);
  out.roots.insert(out.roots.end(), z.begin(), z.end());
  return out;
}

}  // namespace equidyn
