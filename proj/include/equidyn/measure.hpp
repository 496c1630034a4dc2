#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "equidyn/empirical.hpp"
#include "equidyn/endo.hpp"
#include "equidyn/fiber.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

// --- test functions --------------------------------------------------------

enum class TestFunctionKind { chart_moment, gaussian_bump, coordinate_modulus };

// Observables normalized to sup-norm at most one on all of P^k.
struct TestFunction {
  TestFunctionKind kind = TestFunctionKind::chart_moment;
  int i = 0, j = 1, p = 1;   // chart-moment: 2^p Re((Z_i conj(Z_j))^p) / |Z|^{2p}
  ProjPoint center;          // gaussian bump
  double bandwidth = 0.1;
  int index = 0;             // coordinate-modulus: |Z_index|^2 / |Z|^2
};

inline TestFunction chart_moment(int i, int j, int p) {
  require(i != j && i >= 0 && j >= 0 && p >= 0, "SchemaError",
          "chart moment needs distinct nonnegative indices and p >= 0");
  TestFunction t;
  t.kind = TestFunctionKind::chart_moment;
  t.i = i;
  t.j = j;
  t.p = p;
  return t;
}

inline TestFunction gaussian_bump(const ProjPoint& center, double bandwidth) {
  require(bandwidth > 0.0, "BandwidthInvalid", "bandwidth must be positive");
  TestFunction t;
  t.kind = TestFunctionKind::gaussian_bump;
  t.center = center;
  t.bandwidth = bandwidth;
  return t;
}

inline TestFunction coordinate_modulus(int index) {
  require(index >= 0, "SchemaError", "negative coordinate index");
  TestFunction t;
  t.kind = TestFunctionKind::coordinate_modulus;
  t.index = index;
  return t;
}

inline double evaluate_test_function(const TestFunction& t, const ProjPoint& x) {
  switch (t.kind) {
    case TestFunctionKind::chart_moment: {
      require(t.i <= x.k && t.j <= x.k, "DimensionMismatch",
              "moment index out of range");
      Cx zi = x.coords[static_cast<std::size_t>(t.i)];
      Cx zj = x.coords[static_cast<std::size_t>(t.j)];
      Cx base = zi * std::conj(zj) / norm_squared(x);
      Cx pw(1.0);
      for (int q = 0; q < t.p; ++q) pw *= base;
      // |Z_i Z_j| <= |Z|^2 / 2, so the 2^p factor normalizes the sup to 1.
      return std::pow(2.0, t.p) * pw.real();
    }
    case TestFunctionKind::gaussian_bump: {
      double d = fs_distance(x, t.center);
      return std::exp(-d * d / (2.0 * t.bandwidth * t.bandwidth));
    }
    case TestFunctionKind::coordinate_modulus: {
      require(t.index <= x.k, "DimensionMismatch", "coordinate index out of range");
      double m = std::norm(x.coords[static_cast<std::size_t>(t.index)]);
      return m / norm_squared(x);
    }
  }
  fail("SchemaError", "unknown test function kind");
}

inline double integrate(const EmpiricalMeasure& nu, const TestFunction& phi) {
  std::vector<double> terms(nu.atoms.size());
  for (std::size_t i = 0; i < nu.atoms.size(); ++i)
    terms[i] = nu.weights[i] * evaluate_test_function(phi, nu.atoms[i]);
  return sum_in_order(terms);
}

// --- pullback / pushforward -----------------------------------------------

// The operator d^{-k} f^*: every atom is replaced by its fiber, weighted by
// multiplicity over d^k.
inline EmpiricalMeasure pullback_operator(const HomogeneousMap& f,
                                          const EmpiricalMeasure& nu,
                                          std::uint64_t budget = 1ULL << 20,
                                          std::uint64_t seed = 0x13198a2e03707344ULL) {
  require(f.k == nu.k, "DimensionMismatch", "measure lives on the wrong space");
  std::uint64_t dk = topological_degree(f);
  require(nu.atoms.size() <= budget / dk, "BudgetExceeded",
          "fiber expansion exceeds the atom budget");
  std::vector<std::vector<std::pair<ProjPoint, double>>> slots(nu.atoms.size());
  parallel_for(nu.atoms.size(), [&](std::size_t i) {
    try {
      FiberResult fr = fiber(f, nu.atoms[i], derive_seed(seed, i));
      for (std::size_t j = 0; j < fr.points.size(); ++j)
        slots[i].emplace_back(fr.points[j],
                              nu.weights[i] * fr.multiplicities[j] /
                                  static_cast<double>(dk));
    } catch (const Error& e) {
      fail(e.code(), std::string(e.what()) + " at atom " + std::to_string(i));
    }
  });
  std::vector<ProjPoint> pts;
  std::vector<double> w;
  for (auto& s : slots)
    for (auto& [p, wt] : s) {
      pts.push_back(p);
      w.push_back(wt);
    }
  return make_measure(f.k, pts, w, nu.provenance);
}

inline EmpiricalMeasure pushforward(const HomogeneousMap& f,
                                    const EmpiricalMeasure& nu) {
  require(f.k == nu.k, "DimensionMismatch", "measure lives on the wrong space");
  std::vector<ProjPoint> pts;
  for (const ProjPoint& x : nu.atoms) pts.push_back(evaluate(f, x));
  return make_measure(f.k, pts, nu.weights, nu.provenance);
}

// --- kernel discrepancy ----------------------------------------------------

namespace detail {

// Row sums of the kernel pairing; identical loop structure for all three
// terms keeps discrepancy(nu, nu) exactly zero.
inline double kernel_pairing(const std::vector<ProjPoint>& xs,
                             const std::vector<double>& ws,
                             const std::vector<ProjPoint>& ys,
                             const std::vector<double>& vs, double h) {
  std::vector<double> rows(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) {
    KahanSum acc;
    for (std::size_t j = 0; j < ys.size(); ++j) {
      double d = fs_distance(xs[i], ys[j]);
      acc.add(ws[i] * vs[j] * std::exp(-d * d / (2.0 * h * h)));
    }
    rows[i] = acc.value();
  });
  return sum_in_order(rows);
}

}  // namespace detail

// Kernel maximum mean discrepancy with a chordal Gaussian kernel.
inline double discrepancy(const EmpiricalMeasure& nu1, const EmpiricalMeasure& nu2,
                          double bandwidth = 0.1) {
  require(bandwidth > 0.0, "BandwidthInvalid", "bandwidth must be positive");
  require(nu1.k == nu2.k, "DimensionMismatch", "measures on different spaces");
  double t11 = detail::kernel_pairing(nu1.atoms, nu1.weights, nu1.atoms,
                                      nu1.weights, bandwidth);
  double t22 = detail::kernel_pairing(nu2.atoms, nu2.weights, nu2.atoms,
                                      nu2.weights, bandwidth);
  double t12 = detail::kernel_pairing(nu1.atoms, nu1.weights, nu2.atoms,
                                      nu2.weights, bandwidth);
  double d2 = t11 + t22 - 2.0 * t12;
  return d2 > 0.0 ? std::sqrt(d2) : 0.0;
}

// Report-grade sweep over the standard bandwidths.
inline std::vector<std::pair<double, double>> discrepancy_sweep(
    const EmpiricalMeasure& nu1, const EmpiricalMeasure& nu2) {
  std::vector<std::pair<double, double>> out;
  for (double h : {0.05, 0.1, 0.2}) out.emplace_back(h, discrepancy(nu1, nu2, h));
  return out;
}

// --- equilibrium measure construction --------------------------------------

// A point whose cycle (length at most two) pulls back onto itself soaks up
// all backward mass; starting a tree there only ever yields point masses.
inline bool totally_invariant_point(const HomogeneousMap& f, const ProjPoint& x,
                                    double tol = 1e-8,
                                    std::uint64_t seed = 0x0a4d5e6f70818304ULL) {
  ProjPoint fx = evaluate(f, x);
  ProjPoint ffx = evaluate(f, fx);
  if (fs_distance(ffx, x) > tol) return false;  // not periodic with period <= 2
  std::vector<ProjPoint> cycle{x};
  if (fs_distance(fx, x) > tol) cycle.push_back(fx);
  for (std::size_t c = 0; c < cycle.size(); ++c) {
    FiberResult fr = fiber(f, cycle[c], derive_seed(seed, c));
    for (const ProjPoint& z : fr.points) {
      bool inside = false;
      for (const ProjPoint& s : cycle)
        if (fs_distance(z, s) <= tol) inside = true;
      if (!inside) return false;
    }
  }
  return true;
}

enum class EquilibriumMethod { tree, backward, cesaro };

struct EquilibriumOptions {
  EquilibriumMethod method = EquilibriumMethod::tree;
  ProjPoint start;               // tree and backward methods
  int n = 8;                     // tree depth / cesaro depth range
  int samples = 1024;            // backward orbit count / cesaro sample count
  int depth = 30;                // backward burn-in depth
  std::uint64_t budget = 1ULL << 20;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

inline EmpiricalMeasure equilibrium_measure(const HomogeneousMap& f,
                                            const EquilibriumOptions& opts) {
  switch (opts.method) {
    case EquilibriumMethod::tree: {
      require(!totally_invariant_point(f, opts.start), "ExceptionalStart",
              "tree start is a totally invariant cycle");
      return pullback_tree(f, opts.start, opts.n, opts.budget, opts.seed);
    }
    case EquilibriumMethod::backward: {
      require(!totally_invariant_point(f, opts.start), "ExceptionalStart",
              "backward start is a totally invariant cycle");
      std::vector<ProjPoint> pts(static_cast<std::size_t>(opts.samples));
      parallel_for(pts.size(), [&](std::size_t i) {
        std::vector<ProjPoint> orbit =
            backward_orbit(f, opts.start, opts.depth, derive_seed(opts.seed, i));
        pts[i] = orbit.back();
      });
      std::vector<double> w(pts.size(), 1.0 / static_cast<double>(pts.size()));
      return make_measure(f.k, pts, w, MeasureProvenance::backward_sample);
    }
    case EquilibriumMethod::cesaro: {
      // Unbiased sampling of n^{-1} sum_m d^{-km} f^{m*} Omega: draw an FS
      // volume sample and pull it back a uniform random number of steps.
      std::vector<ProjPoint> pts(static_cast<std::size_t>(opts.samples));
      parallel_for(pts.size(), [&](std::size_t i) {
        Rng rng = make_rng(derive_seed(opts.seed, i));
        ProjPoint y = sample_fs_point(f.k, rng);
        int m = 1 + static_cast<int>(uniform01(rng) * opts.n);
        if (m > opts.n) m = opts.n;
        std::vector<ProjPoint> orbit = backward_orbit(f, y, m, rng());
        pts[i] = orbit.back();
      });
      std::vector<double> w(pts.size(), 1.0 / static_cast<double>(pts.size()));
      return make_measure(f.k, pts, w, MeasureProvenance::cesaro);
    }
  }
  fail("SchemaError", "unknown construction method");
}

// --- convergence diagnostics ------------------------------------------------

// Discrepancy between the preimage trees of two starts, per depth.
inline std::vector<std::pair<int, double>> equidistribution_test(
    const HomogeneousMap& f, const ProjPoint& x, const ProjPoint& y, int n_max,
    double bandwidth = 0.1, std::uint64_t budget = 1ULL << 20) {
  std::vector<std::pair<int, double>> out;
  for (int n = 0; n <= n_max; ++n) {
    EmpiricalMeasure mx = pullback_tree(f, x, n, budget);
    EmpiricalMeasure my = pullback_tree(f, y, n, budget);
    out.emplace_back(n, discrepancy(mx, my, bandwidth));
  }
  return out;
}

// Tree mass inside a tube of chordal radius tau around the critical locus.
inline std::vector<double> critical_mass_decay(const HomogeneousMap& f,
                                               const ProjPoint& x, int n_max,
                                               double tau = 0.05,
                                               std::uint64_t budget = 1ULL << 20) {
  std::vector<ProjPoint> crit =
      sample_critical_locus(f, 36, 0x2545f4914f6cdd1dULL);
  std::vector<double> out;
  for (int n = 0; n <= n_max; ++n) {
    EmpiricalMeasure mu = pullback_tree(f, x, n, budget);
    std::vector<double> terms(mu.atoms.size());
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
      double dmin = 2.0;
      for (const ProjPoint& c : crit)
        dmin = std::min(dmin, fs_distance(mu.atoms[i], c));
      terms[i] = dmin <= tau ? mu.weights[i] : 0.0;
    }
    out.push_back(sum_in_order(terms));
  }
  return out;
}

// Correlation defect |int phi (psi o f^n) - int phi int psi| on the atoms.
inline double mixing_correlation(const HomogeneousMap& f,
                                 const EmpiricalMeasure& mu,
                                 const TestFunction& phi, const TestFunction& psi,
                                 int n, double invariance_tol = 0.05) {
  double inv = discrepancy(pushforward(f, mu), mu, 0.1);
  require(inv < invariance_tol, "NonInvariantMeasure",
          "measure moves under pushforward; correlation would be meaningless");
  std::vector<double> cross(mu.atoms.size());
  for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
    ProjPoint y = iterate_eval(f, n, mu.atoms[i]);
    cross[i] = mu.weights[i] * evaluate_test_function(phi, mu.atoms[i]) *
               evaluate_test_function(psi, y);
  }
  double joint = sum_in_order(cross);
  return std::abs(joint - integrate(mu, phi) * integrate(mu, psi));
}

// --- Lyapunov exponents -----------------------------------------------------

struct LyapunovEstimate {
  double min_exponent = 0.0;  // mean of (1/n) log sigma_min over sampled atoms
  double max_exponent = 0.0;
  double min_std_error = 0.0;
  double max_std_error = 0.0;
  int rejected = 0;           // orbits resampled for passing too close to C
};

// Singular values of the FS-metric derivative of f^n along mu-sampled orbits.
inline LyapunovEstimate lyapunov_min(const HomogeneousMap& f,
                                     const EmpiricalMeasure& mu, int n,
                                     int sample_count, std::uint64_t seed,
                                     double critical_tol = 1e-12) {
  require(n > 0, "SchemaError", "need at least one iteration");
  require(sample_count > 0, "SchemaError", "need at least one sample");
  std::vector<double> lo, hi;
  Rng rng = make_rng(seed);
  int rejected = 0;
  int attempts = 0;
  while (static_cast<int>(lo.size()) < sample_count) {
    require(++attempts <= 20 * sample_count + 100, "OrbitNearCritical",
            "orbits keep passing within tolerance of the critical locus");
    double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = mu.atoms.size() - 1;
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
      acc += mu.weights[i];
      if (u <= acc) {
        pick = i;
        break;
      }
    }
    ProjPoint x = mu.atoms[pick];
    bool clean = true;
    ProjPoint p = x;
    for (int q = 0; q < n && clean; ++q) {
      if (critical_sample(f, p).jac_det_modulus <= critical_tol) clean = false;
      p = evaluate(f, p);
    }
    if (!clean) {
      ++rejected;
      continue;
    }
    ScaledMatrix d = iterate_fs_derivative(f, x, n);
    lo.push_back(log_sigma_min(d) / n);
    hi.push_back(log_sigma_max(d) / n);
  }
  LyapunovEstimate out;
  MeanStdErr mlo = mean_std_error(lo);
  MeanStdErr mhi = mean_std_error(hi);
  out.min_exponent = mlo.mean;
  out.max_exponent = mhi.mean;
  out.min_std_error = mlo.std_error;
  out.max_std_error = mhi.std_error;
  out.rejected = rejected;
  return out;
}

// --- mass near algebraic sets -----------------------------------------------

enum class AlgebraicSetKind { hyperplane, point };

struct AlgebraicSet {
  AlgebraicSetKind kind = AlgebraicSetKind::point;
  std::array<Cx, 3> form{Cx(0.0), Cx(0.0), Cx(0.0)};  // hyperplane coefficients
  ProjPoint point;
};

inline AlgebraicSet hyperplane_set(const std::array<Cx, 3>& form) {
  double m = 0.0;
  for (const Cx& c : form) m = std::max(m, std::abs(c));
  require(m > 0.0, "SchemaError", "zero linear form");
  AlgebraicSet s;
  s.kind = AlgebraicSetKind::hyperplane;
  s.form = form;
  return s;
}

inline AlgebraicSet point_set(const ProjPoint& p) {
  AlgebraicSet s;
  s.kind = AlgebraicSetKind::point;
  s.point = p;
  return s;
}

inline double distance_to_set(const AlgebraicSet& s, const ProjPoint& x) {
  if (s.kind == AlgebraicSetKind::point) return fs_distance(s.point, x);
  Cx pairing(0.0);
  double nf = 0.0;
  for (int i = 0; i <= x.k; ++i) {
    pairing += s.form[static_cast<std::size_t>(i)] * x.coords[static_cast<std::size_t>(i)];
    nf += std::norm(s.form[static_cast<std::size_t>(i)]);
  }
  return std::abs(pairing) / std::sqrt(nf * norm_squared(x));
}

// mu-mass of the chordal tube of each radius around the set.
inline std::vector<double> algebraic_mass(const EmpiricalMeasure& mu,
                                          const AlgebraicSet& set,
                                          const std::vector<double>& radii) {
  std::vector<double> out;
  for (double r : radii) {
    std::vector<double> terms(mu.atoms.size());
    for (std::size_t i = 0; i < mu.atoms.size(); ++i)
      terms[i] = distance_to_set(set, mu.atoms[i]) <= r ? mu.weights[i] : 0.0;
    out.push_back(sum_in_order(terms));
  }
  return out;
}

}  // namespace equidyn
