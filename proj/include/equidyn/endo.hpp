#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "equidyn/aberth.hpp"
#include "equidyn/core.hpp"
#include "equidyn/poly.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

// A degree-d holomorphic endomorphism of P^k given by k+1 homogeneous
// components without common zeros. Partials are cached at construction.
struct HomogeneousMap {
  int k = 1;
  int d = 2;
  std::vector<HomPoly> comps;                    // size k+1
  std::vector<std::array<HomPoly, 3>> partials;  // partials[i][v] = d comps[i] / d Z_v
};

inline HomogeneousMap make_map(int k, int d, std::vector<HomPoly> comps) {
  require(k == 1 || k == 2, "SchemaError", "k must be 1 or 2");
  require(d >= 2, "SchemaError", "degree must be at least 2");
  require(static_cast<int>(comps.size()) == k + 1, "SchemaError",
          "component count must be k+1");
  HomogeneousMap f;
  f.k = k;
  f.d = d;
  bool any_terms = false;
  for (auto& p : comps) {
    require(p.k == k && p.degree == d, "SchemaError",
            "component degree/arity mismatch");
    any_terms = any_terms || !p.terms.empty();
  }
  require(any_terms, "SchemaError", "map has no nonzero component");
  f.comps = std::move(comps);
  f.partials.resize(f.comps.size());
  for (std::size_t i = 0; i < f.comps.size(); ++i)
    for (int v = 0; v <= k; ++v)
      f.partials[i][static_cast<std::size_t>(v)] = partial(f.comps[i], v);
  return f;
}

// Coefficient expansion of f after g; degrees multiply.
inline HomogeneousMap compose_map(const HomogeneousMap& f, const HomogeneousMap& g) {
  require(f.k == g.k, "DimensionMismatch", "composed maps must share the dimension");
  std::vector<HomPoly> comps;
  for (const HomPoly& p : f.comps) comps.push_back(compose(p, g.comps));
  return make_map(f.k, f.d * g.d, std::move(comps));
}

inline HomogeneousMap iterate_map(const HomogeneousMap& f, int n) {
  require(n >= 1, "SchemaError", "iterate count must be positive");
  HomogeneousMap out = f;
  for (int i = 1; i < n; ++i) out = compose_map(f, out);
  return out;
}

inline double coeff_scale(const HomogeneousMap& f) {
  double s = 0.0;
  for (const auto& p : f.comps) s = std::max(s, max_coeff_modulus(p));
  return s;
}

// Raw component values on the given homogeneous coordinates.
inline std::array<Cx, 3> evaluate_raw(const HomogeneousMap& f,
                                      const std::array<Cx, 3>& z) {
  std::array<Cx, 3> w{Cx(0.0), Cx(0.0), Cx(0.0)};
  for (std::size_t i = 0; i < f.comps.size(); ++i) w[i] = eval_poly(f.comps[i], z);
  return w;
}

inline ProjPoint evaluate(const HomogeneousMap& f, const ProjPoint& x) {
  require(x.k == f.k, "DimensionMismatch", "point/map arity mismatch");
  std::array<Cx, 3> w = evaluate_raw(f, x.coords);
  double m = 0.0;
  for (int i = 0; i <= f.k; ++i) m = std::max(m, std::abs(w[static_cast<std::size_t>(i)]));
  require(m > 1e-12 * coeff_scale(f), "DegenerateImage",
          "all components vanish at the point");
  return normalize(w, f.k);
}

inline ProjPoint iterate_eval(const HomogeneousMap& f, int n, const ProjPoint& x) {
  ProjPoint p = x;
  for (int i = 0; i < n; ++i) p = evaluate(f, p);
  return p;
}

inline std::vector<ProjPoint> orbit(const HomogeneousMap& f, const ProjPoint& x,
                                    int n) {
  std::vector<ProjPoint> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  out.push_back(x);
  for (int i = 0; i < n; ++i) out.push_back(evaluate(f, out.back()));
  return out;
}

// Jacobian of the affine map between the pivot charts of x and f(x),
// assembled from homogeneous partials by the quotient rule.
inline Eigen::MatrixXcd jacobian_chart(const HomogeneousMap& f, const ProjPoint& x) {
  int k = f.k;
  ProjPoint y = evaluate(f, x);
  int ci = pivot_index(x);
  int cj = pivot_index(y);
  std::array<Cx, 3> vals = evaluate_raw(f, x.coords);
  Cx fj = vals[static_cast<std::size_t>(cj)];

  std::vector<int> rows, cols;  // homogeneous indices kept in each chart
  for (int i = 0; i <= k; ++i) {
    if (i != cj) rows.push_back(i);
    if (i != ci) cols.push_back(i);
  }
  Eigen::MatrixXcd jac(k, k);
  for (int r = 0; r < k; ++r) {
    std::size_t m = static_cast<std::size_t>(rows[static_cast<std::size_t>(r)]);
    for (int c = 0; c < k; ++c) {
      std::size_t v = static_cast<std::size_t>(cols[static_cast<std::size_t>(c)]);
      Cx dm = eval_poly(f.partials[m][v], x.coords);
      Cx dj = eval_poly(f.partials[static_cast<std::size_t>(cj)][v], x.coords);
      jac(r, c) = (dm * fj - vals[m] * dj) / (fj * fj);
    }
  }
  return jac;
}

inline Eigen::MatrixXcd fs_metric_matrix(const ProjPoint& x) {
  return fs_form(to_chart(x, pivot_index(x)));
}

// Derivative of f at x measured in the Fubini-Study metric on both sides:
// H(f x)^{1/2} J H(x)^{-1/2}. Its singular values are chart-free.
inline Eigen::MatrixXcd fs_derivative(const HomogeneousMap& f, const ProjPoint& x) {
  Eigen::MatrixXcd j = jacobian_chart(f, x);
  ProjPoint y = evaluate(f, x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hx(fs_metric_matrix(x));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> hy(fs_metric_matrix(y));
  return hy.operatorSqrt() * j * hx.operatorInverseSqrt();
}

// Point with the modulus of its metric Jacobian determinant; the FS-metric
// determinant is chart-free, so one tolerance works everywhere.
struct CriticalSample {
  ProjPoint point;
  double jac_det_modulus = 0.0;
};

inline CriticalSample critical_sample(const HomogeneousMap& f, const ProjPoint& x) {
  return {x, std::abs(fs_derivative(f, x).determinant())};
}

inline bool is_critical(const HomogeneousMap& f, const ProjPoint& x,
                        double tol = 1e-9) {
  return critical_sample(f, x).jac_det_modulus <= tol;
}

// Matrix with an explicit log-scale so long derivative products neither
// overflow nor underflow.
struct ScaledMatrix {
  Eigen::MatrixXcd m;
  double log_scale = 0.0;
};

inline ScaledMatrix scaled_identity(int k) {
  return {Eigen::MatrixXcd::Identity(k, k), 0.0};
}

inline void scaled_multiply_left(ScaledMatrix& acc, const Eigen::MatrixXcd& a) {
  acc.m = a * acc.m;
  double s = acc.m.cwiseAbs().maxCoeff();
  if (s > 0.0 && (s > 1e8 || s < 1e-8)) {
    acc.m /= s;
    acc.log_scale += std::log(s);
  }
}

// Chart-to-chart derivative of f^n at x by the chain rule, as a scaled
// product along the orbit (f^n is never expanded symbolically).
inline ScaledMatrix iterate_jacobian(const HomogeneousMap& f, int n,
                                     const ProjPoint& x) {
  ScaledMatrix acc = scaled_identity(f.k);
  ProjPoint p = x;
  for (int i = 0; i < n; ++i) {
    scaled_multiply_left(acc, jacobian_chart(f, p));
    p = evaluate(f, p);
  }
  return acc;
}

// Same product measured in the FS metric on both ends of every factor.
inline ScaledMatrix iterate_fs_derivative(const HomogeneousMap& f,
                                          const ProjPoint& x, int n) {
  ScaledMatrix acc = scaled_identity(f.k);
  ProjPoint p = x;
  for (int i = 0; i < n; ++i) {
    scaled_multiply_left(acc, fs_derivative(f, p));
    p = evaluate(f, p);
  }
  return acc;
}

// Monte Carlo value of the pairing E_Omega[det(J^H H(fx) J)/det H(x)],
// i.e. the integral of the pulled-back volume form; equals d^k for a
// degree-d endomorphism.
inline MeanStdErr degree_pairing_estimate(const HomogeneousMap& f, int n_samples,
                                          std::uint64_t seed) {
  std::vector<double> vals(static_cast<std::size_t>(n_samples));
  parallel_for(vals.size(), [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(seed, i));
    ProjPoint x = sample_fs_point(f.k, rng);
    ProjPoint y = evaluate(f, x);
    Eigen::MatrixXcd j = jacobian_chart(f, x);
    Eigen::MatrixXcd hx = fs_metric_matrix(x);
    Eigen::MatrixXcd hy = fs_metric_matrix(y);
    double num = std::abs((j.adjoint() * hy * j).determinant());
    double den = std::abs(hx.determinant());
    vals[i] = num / den;
  });
  return mean_std_error(vals);
}

inline double log_sigma_min(const ScaledMatrix& a) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a.m);
  double s = svd.singularValues()(svd.singularValues().size() - 1);
  require(s > 0.0, "SingularDerivative", "derivative product is singular");
  return a.log_scale + std::log(s);
}

inline double log_sigma_max(const ScaledMatrix& a) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a.m);
  return a.log_scale + std::log(svd.singularValues()(0));
}

// --- k = 1 algebra -------------------------------------------------------

// Critical points of a rational map as roots of the Wronskian
// dP0/ds dP1/dt - dP0/dt dP1/ds, a binary form of degree 2d-2.
inline std::vector<ProjPoint> critical_points_p1(const HomogeneousMap& f) {
  require(f.k == 1, "DimensionMismatch", "rational-map routine needs k=1");
  HomPoly w = add_polys(multiply(f.partials[0][0], f.partials[1][1]),
                        scale_poly(multiply(f.partials[0][1], f.partials[1][0]),
                                   Cx(-1.0)));
  require(!w.terms.empty(), "DegenerateForm", "vanishing Wronskian");
  std::vector<Cx> coeffs = binary_form_coeffs(w);
  RootResult rr = polynomial_roots(coeffs);
  std::vector<ProjPoint> out;
  for (const Cx& z : rr.roots) out.push_back(point_p1(z));
  for (int i = 0; i < rr.leading_drop; ++i) out.push_back(infinity_p1());
  return out;
}

// Resultant of the two components via the Sylvester matrix; nonvanishing
// certifies there is no common root, i.e. the pair defines an endomorphism.
inline double resultant_p1(const HomogeneousMap& f) {
  require(f.k == 1, "DimensionMismatch", "resultant needs k=1");
  int d = f.d;
  std::vector<Cx> a = binary_form_coeffs(f.comps[0]);  // sum a_j s^j t^(d-j)
  std::vector<Cx> b = binary_form_coeffs(f.comps[1]);
  int n = 2 * d;
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(n, n);
  for (int r = 0; r < d; ++r)
    for (int j = 0; j <= d; ++j) {
      s(r, r + j) = a[static_cast<std::size_t>(d - j)];
      s(d + r, r + j) = b[static_cast<std::size_t>(d - j)];
    }
  return std::abs(s.determinant());
}

inline bool nondegenerate_p1(const HomogeneousMap& f, double tol = 1e-10) {
  double scale = std::pow(coeff_scale(f), 2 * f.d);
  return resultant_p1(f) > tol * scale;
}

}  // namespace equidyn
