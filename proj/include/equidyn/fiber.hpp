#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "equidyn/aberth.hpp"
#include "equidyn/disk_types.hpp"
#include "equidyn/empirical.hpp"
#include "equidyn/endo.hpp"
#include "equidyn/poly.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

enum class FiberSolver { univariate, homotopy };

struct FiberResult {
  std::vector<ProjPoint> points;       // pairwise distinct
  std::vector<int> multiplicities;     // sums to d^k
  std::vector<double> residuals;       // chordal distance of f(point) to target
  FiberSolver solver = FiberSolver::univariate;
};

inline std::uint64_t topological_degree(const HomogeneousMap& f) {
  std::uint64_t dk = 1;
  for (int i = 0; i < f.k; ++i) dk *= static_cast<std::uint64_t>(f.d);
  return dk;
}

namespace detail {

// Union-find clustering at the given chordal radius.
inline std::vector<std::vector<int>> cluster_points(
    const std::vector<ProjPoint>& pts, double radius) {
  int n = static_cast<int>(pts.size());
  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  std::function<int(int)> find = [&](int i) {
    while (parent[static_cast<std::size_t>(i)] != i) {
      parent[static_cast<std::size_t>(i)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
      i = parent[static_cast<std::size_t>(i)];
    }
    return i;
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (fs_distance(pts[static_cast<std::size_t>(i)],
                      pts[static_cast<std::size_t>(j)]) <= radius) {
        parent[static_cast<std::size_t>(find(i))] = find(j);
      }
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) groups[static_cast<std::size_t>(find(i))].push_back(i);
  std::vector<std::vector<int>> out;
  for (auto& g : groups)
    if (!g.empty()) out.push_back(std::move(g));
  return out;
}

// Phase-aligned chordal mean of a cluster.
inline ProjPoint cluster_representative(const std::vector<ProjPoint>& pts,
                                        const std::vector<int>& idx, int k) {
  const ProjPoint& ref = pts[static_cast<std::size_t>(idx[0])];
  std::array<Cx, 3> acc{Cx(0.0), Cx(0.0), Cx(0.0)};
  for (int i : idx) {
    const ProjPoint& p = pts[static_cast<std::size_t>(i)];
    Cx inner = hermitian_inner(ref, p);
    Cx phase = (std::abs(inner) > 0.0) ? inner / std::abs(inner) : Cx(1.0);
    for (int c = 0; c <= k; ++c) {
      acc[static_cast<std::size_t>(c)] +=
          p.coords[static_cast<std::size_t>(c)] * phase;
    }
  }
  return normalize(acc, k);
}

// Multiplicities by cluster merging at 1e-6 with a one-decade stability
// sweep; the kept order is canonical.
inline FiberResult merge_clusters(const HomogeneousMap& f, const ProjPoint& y,
                                  const std::vector<ProjPoint>& raw,
                                  FiberSolver solver) {
  std::size_t n5 = cluster_points(raw, 1e-5).size();
  auto clusters = cluster_points(raw, 1e-6);
  std::size_t n7 = cluster_points(raw, 1e-7).size();
  require(n5 == clusters.size() && n7 == clusters.size(), "MultiplicityAmbiguity",
          "cluster count is unstable across merge tolerances");
  FiberResult out;
  out.solver = solver;
  std::vector<std::pair<ProjPoint, int>> reps;
  for (const auto& c : clusters)
    reps.emplace_back(cluster_representative(raw, c, f.k),
                      static_cast<int>(c.size()));
  std::sort(reps.begin(), reps.end(), [](const auto& a, const auto& b) {
    return canonical_less(a.first, b.first);
  });
  for (auto& [p, m] : reps) {
    double res = fs_distance(evaluate(f, p), y);
    require(res < 1e-6, "SolverDivergence", "fiber point residual too large");
    out.points.push_back(p);
    out.multiplicities.push_back(m);
    out.residuals.push_back(res);
  }
  return out;
}

}  // namespace detail

// --- fibers on the line ----------------------------------------------------

// Roots of P0 y1 - P1 y0, with projective handling of [1:0].
inline FiberResult fiber_p1(const HomogeneousMap& f, const ProjPoint& y) {
  require(f.k == 1, "DimensionMismatch", "fiber_p1 needs k=1");
  require(y.k == 1, "DimensionMismatch", "target arity mismatch");
  std::vector<Cx> a = binary_form_coeffs(f.comps[0]);
  std::vector<Cx> b = binary_form_coeffs(f.comps[1]);
  std::vector<Cx> q(a.size());
  for (std::size_t j = 0; j < q.size(); ++j)
    q[j] = a[j] * y.coords[1] - b[j] * y.coords[0];
  double qmax = 0.0;
  for (const Cx& c : q) qmax = std::max(qmax, std::abs(c));
  require(qmax > 1e-14 * coeff_scale(f), "DegenerateForm",
          "fiber form vanishes identically");
  RootResult rr = polynomial_roots(q);
  std::vector<ProjPoint> raw;
  for (const Cx& z : rr.roots) raw.push_back(point_p1(z));
  for (int i = 0; i < rr.leading_drop; ++i) raw.push_back(infinity_p1());
  require(raw.size() == static_cast<std::size_t>(f.d), "SolverDivergence",
          "root count does not match the degree");
  return detail::merge_clusters(f, y, raw, FiberSolver::univariate);
}

// --- fibers on the plane by homotopy continuation --------------------------

namespace detail {

struct HomotopyTarget {
  const HomogeneousMap* f;
  int d;
  Eigen::Matrix3cd u;              // random unitary domain frame
  std::vector<HomPoly> g;          // the two target equations
  std::vector<std::array<HomPoly, 3>> dg;

  std::array<Cx, 3> embed(const Eigen::Vector2cd& x) const {
    std::array<Cx, 3> z;
    for (int m = 0; m < 3; ++m)
      z[static_cast<std::size_t>(m)] = u(m, 0) * x(0) + u(m, 1) * x(1) + u(m, 2);
    return z;
  }
  Eigen::Vector2cd value(const Eigen::Vector2cd& x) const {
    std::array<Cx, 3> z = embed(x);
    return {eval_poly(g[0], z), eval_poly(g[1], z)};
  }
  Eigen::Matrix2cd jacobian(const Eigen::Vector2cd& x) const {
    std::array<Cx, 3> z = embed(x);
    Eigen::Matrix2cd j;
    for (int i = 0; i < 2; ++i)
      for (int c = 0; c < 2; ++c) {
        Cx s(0.0);
        for (int m = 0; m < 3; ++m)
          s += eval_poly(dg[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)], z) * u(m, c);
        j(i, c) = s;
      }
    return j;
  }
};

inline Eigen::Matrix3cd random_unitary3(Rng& rng) {
  Eigen::Matrix3cd a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = gaussian_cx(rng);
  Eigen::HouseholderQR<Eigen::Matrix3cd> qr(a);
  Eigen::Matrix3cd q = qr.householderQ();
  Eigen::Matrix3cd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < 3; ++i) {
    Cx d = r(i, i);
    if (std::abs(d) > 0.0) q.col(i) *= d / std::abs(d);
  }
  return q;
}

// Tracks one total-degree path; returns the endpoint or nothing on a stall.
inline std::optional<Eigen::Vector2cd> track_path(const HomotopyTarget& tgt, Cx gamma,
                                                  Cx a, Cx b,
                                                  Eigen::Vector2cd x) {
  int d = tgt.d;
  auto start_value = [&](const Eigen::Vector2cd& p) {
    return Eigen::Vector2cd(std::pow(p(0), d) - a, std::pow(p(1), d) - b);
  };
  auto start_jac = [&](const Eigen::Vector2cd& p) {
    Eigen::Matrix2cd j = Eigen::Matrix2cd::Zero();
    j(0, 0) = static_cast<double>(d) * std::pow(p(0), d - 1);
    j(1, 1) = static_cast<double>(d) * std::pow(p(1), d - 1);
    return j;
  };
  auto h_value = [&](const Eigen::Vector2cd& p, double s) {
    return ((1.0 - s) * gamma * start_value(p) + s * tgt.value(p)).eval();
  };
  auto h_jac = [&](const Eigen::Vector2cd& p, double s) {
    return ((1.0 - s) * gamma * start_jac(p) + s * tgt.jacobian(p)).eval();
  };

  double s = 0.0, ds = 0.02;
  const double s_star = 1.0 - 1e-6;
  while (s < s_star) {
    double step = std::min(ds, s_star - s);
    // Euler predictor
    Eigen::Vector2cd hs = tgt.value(x) - gamma * start_value(x);
    Eigen::Matrix2cd jx = h_jac(x, s);
    Eigen::Vector2cd pred = x;
    Eigen::FullPivLU<Eigen::Matrix2cd> lu(jx);
    if (lu.isInvertible()) pred = x - lu.solve(hs) * step;
    // Newton corrector
    double snew = s + step;
    Eigen::Vector2cd cur = pred;
    bool ok = false;
    for (int it = 0; it < 5; ++it) {
      Eigen::FullPivLU<Eigen::Matrix2cd> lc(h_jac(cur, snew));
      if (!lc.isInvertible()) break;
      Eigen::Vector2cd delta = lc.solve(h_value(cur, snew));
      cur -= delta;
      if (delta.norm() <= 1e-9 * (1.0 + cur.norm())) {
        ok = true;
        break;
      }
    }
    if (ok) {
      x = cur;
      s = snew;
      ds = std::min(ds * 1.7, 0.1);
      if (x.norm() > 1e8) return std::nullopt;  // fiber point escapes the frame
    } else {
      ds *= 0.5;
      if (ds < 1e-12) return std::nullopt;
    }
  }
  // Final Newton on the target itself; linear convergence suffices for
  // multiple endpoints, so allow many cheap iterations.  Solve by Cramer:
  // near a multiplicity-m endpoint the pivot shrinks like dist^{m-1}, and LU
  // rank thresholds would declare the step singular long before the
  // determinant stops being representable.
  Eigen::Vector2cd best = x;
  double best_res = tgt.value(x).norm();
  bool settled = false;
  for (int it = 0; it < 240; ++it) {
    Eigen::Matrix2cd jm = tgt.jacobian(x);
    Cx det = jm(0, 0) * jm(1, 1) - jm(0, 1) * jm(1, 0);
    if (!(std::abs(det) > 1e-300)) break;
    Eigen::Vector2cd v = tgt.value(x);
    Eigen::Vector2cd delta((jm(1, 1) * v(0) - jm(0, 1) * v(1)) / det,
                           (jm(0, 0) * v(1) - jm(1, 0) * v(0)) / det);
    x -= delta;
    double res = tgt.value(x).norm();
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    if (delta.norm() <= 1e-13 * (1.0 + x.norm())) {
      settled = true;
      break;
    }
  }
  // A settled iterate beats the best-residual one: near a multiple endpoint
  // the computed residual floors out at rounding level while the steps keep
  // shrinking geometrically, so the residual stops ranking iterates there.
  return settled ? x : best;
}

}  // namespace detail

// All d^2 fiber points of a plane endomorphism by a total-degree homotopy in
// a random unitary frame (generic frames keep every solution affine).
inline FiberResult fiber_homotopy(const HomogeneousMap& f, const ProjPoint& y,
                                  std::uint64_t seed) {
  require(f.k == 2, "DimensionMismatch", "fiber_homotopy needs k=2");
  require(y.k == 2, "DimensionMismatch", "target arity mismatch");
  int d = f.d;
  int pivot = pivot_index(y);
  detail::HomotopyTarget tgt;
  tgt.f = &f;
  tgt.d = d;
  tgt.g.clear();
  for (int i = 0; i < 3; ++i) {
    if (i == pivot) continue;
    tgt.g.push_back(add_polys(
        scale_poly(f.comps[static_cast<std::size_t>(i)], y.coords[static_cast<std::size_t>(pivot)]),
        scale_poly(f.comps[static_cast<std::size_t>(pivot)], -y.coords[static_cast<std::size_t>(i)])));
  }
  tgt.dg.resize(2);
  for (std::size_t i = 0; i < 2; ++i)
    for (int m = 0; m < 3; ++m)
      tgt.dg[i][static_cast<std::size_t>(m)] = partial(tgt.g[i], m);

  Rng frame_rng = make_rng(derive_seed(seed, 0));
  tgt.u = detail::random_unitary3(frame_rng);

  for (int attempt = 0; attempt < 4; ++attempt) {
    Rng rng = make_rng(derive_seed(seed, 1 + static_cast<std::uint64_t>(attempt)));
    if (attempt == 3) tgt.u = detail::random_unitary3(rng);  // last resort: new frame
    Cx gamma = unit_phase(rng);
    Cx a = 1.3 * unit_phase(rng);
    Cx b = 0.7 * unit_phase(rng);
    Cx ra = std::pow(a, 1.0 / d);
    Cx rb = std::pow(b, 1.0 / d);
    std::vector<ProjPoint> raw;
    bool failed = false;
    for (int j1 = 0; j1 < d && !failed; ++j1) {
      for (int j2 = 0; j2 < d && !failed; ++j2) {
        Cx w1 = std::polar(1.0, 2.0 * kPi * j1 / d);
        Cx w2 = std::polar(1.0, 2.0 * kPi * j2 / d);
        auto end = detail::track_path(tgt, gamma, a, b,
                                      Eigen::Vector2cd(ra * w1, rb * w2));
        if (!end) {
          failed = true;
          break;
        }
        raw.push_back(normalize(tgt.embed(*end), 2));
      }
    }
    if (!failed) {
      FiberResult out = detail::merge_clusters(f, y, raw, FiberSolver::homotopy);
      int total = 0;
      for (int m : out.multiplicities) total += m;
      require(total == d * d, "PathFailure", "endpoint count mismatch");
      return out;
    }
  }
  fail("PathFailure", "a homotopy path stalled after gamma retries");
}

// Dispatch on the dimension; the seed only matters for k=2.
inline FiberResult fiber(const HomogeneousMap& f, const ProjPoint& y,
                         std::uint64_t seed = 0x6b9fcb5138a2d17bULL) {
  return f.k == 1 ? fiber_p1(f, y) : fiber_homotopy(f, y, seed);
}

// Nondegeneracy probe for plane maps: a random fiber must carry exactly d^2
// paths to honest solutions.
inline bool nondegenerate_p2(const HomogeneousMap& f, std::uint64_t seed) {
  require(f.k == 2, "DimensionMismatch", "nondegenerate_p2 needs k=2");
  Rng rng = make_rng(seed);
  for (int trial = 0; trial < 3; ++trial) {
    ProjPoint y = sample_fs_point(2, rng);
    try {
      FiberResult fr = fiber_homotopy(f, y, derive_seed(seed, 100 + static_cast<std::uint64_t>(trial)));
      int total = 0;
      for (int m : fr.multiplicities) total += m;
      if (total != f.d * f.d) return false;
    } catch (const Error&) {
      return false;
    }
  }
  return true;
}

// --- local degree by fiber probing ----------------------------------------

// Number of preimages near x of a generic point near f(x): probe targets at
// distance (r/4)^{d^k} so every nearby preimage stays inside radius r/4.
inline int local_degree(const HomogeneousMap& f, const ProjPoint& x,
                        double probe_radius = 1e-2, int probe_count = 3,
                        std::uint64_t seed = 0x9ae16a3b2f90404fULL) {
  ProjPoint y0 = evaluate(f, x);
  FiberResult base = fiber(f, y0, derive_seed(seed, 0));
  for (const ProjPoint& z : base.points) {
    double dist = fs_distance(z, x);
    require(dist <= probe_radius || dist > 3.0 * probe_radius, "IsolationFailure",
            "another fiber point sits within the probe annulus");
  }
  double dk = std::pow(static_cast<double>(f.d), f.k);
  double eta = std::pow(probe_radius / 4.0, dk);
  int cy = pivot_index(y0);
  ChartVector yc = to_chart(y0, cy);
  Rng rng = make_rng(derive_seed(seed, 1));
  int first = -1;
  for (int probe = 0; probe < probe_count; ++probe) {
    ChartVector moved = yc;
    for (int i = 0; i < f.k; ++i)
      moved.affine[static_cast<std::size_t>(i)] = yc.affine[static_cast<std::size_t>(i)] + eta * unit_phase(rng);
    ProjPoint y = from_chart(moved);
    FiberResult fr = fiber(f, y, derive_seed(seed, 10 + static_cast<std::uint64_t>(probe)));
    int count = 0;
    for (std::size_t i = 0; i < fr.points.size(); ++i)
      if (fs_distance(fr.points[i], x) <= probe_radius)
        count += fr.multiplicities[i];
    if (first < 0) first = count;
    require(count == first, "UnstableDegree", "probe counts disagree");
  }
  require(first >= 1 && first <= static_cast<int>(dk), "UnstableDegree",
          "degree out of range");
  return first;
}

// --- pullback trees and backward orbits ------------------------------------

struct TreeAtom {
  ProjPoint point;
  std::uint64_t count;  // local multiplicity of f^n at the point
};

// Full preimage tree f^{-n}(x) with exact integer multiplicity bookkeeping.
inline std::vector<TreeAtom> pullback_atoms(const HomogeneousMap& f,
                                            const ProjPoint& x, int n,
                                            std::uint64_t budget = 1ULL << 20,
                                            std::uint64_t seed = 0x243f6a8885a308d3ULL) {
  std::uint64_t dk = topological_degree(f);
  std::uint64_t leaves = 1;
  for (int q = 0; q < n; ++q) {
    require(leaves <= budget / dk, "BudgetExceeded",
            "d^{kn} exceeds the tree budget");
    leaves *= dk;
  }
  std::vector<TreeAtom> atoms{{x, 1}};
  for (int level = 0; level < n; ++level) {
    std::vector<std::vector<TreeAtom>> slots(atoms.size());
    std::uint64_t level_seed = derive_seed(seed, static_cast<std::uint64_t>(level));
    parallel_for(atoms.size(), [&](std::size_t i) {
      try {
        FiberResult fr = fiber(f, atoms[i].point, derive_seed(level_seed, i));
        for (std::size_t j = 0; j < fr.points.size(); ++j)
          slots[i].push_back(
              {fr.points[j],
               atoms[i].count * static_cast<std::uint64_t>(fr.multiplicities[j])});
      } catch (const Error& e) {
        fail(e.code(), std::string(e.what()) + " at tree node level=" +
                           std::to_string(level) + " index=" + std::to_string(i));
      }
    });
    std::vector<TreeAtom> next;
    for (auto& s : slots)
      for (auto& a : s) next.push_back(a);
    std::sort(next.begin(), next.end(), [](const TreeAtom& a, const TreeAtom& b) {
      return canonical_less(a.point, b.point);
    });
    std::vector<TreeAtom> merged;
    detail::merge_sorted_clusters(
        next.size(),
        [&](std::size_t i) -> const ProjPoint& { return next[i].point; },
        kPointEqualityTol, [&](const std::vector<std::size_t>& members) {
          TreeAtom a = next[members.front()];
          for (std::size_t j = 1; j < members.size(); ++j)
            a.count += next[members[j]].count;
          merged.push_back(a);
        });
    atoms = std::move(merged);
  }
  return atoms;
}

// mu_{n,x}: normalized counting measure on f^{-n}(x).
inline EmpiricalMeasure pullback_tree(const HomogeneousMap& f, const ProjPoint& x,
                                      int n, std::uint64_t budget = 1ULL << 20,
                                      std::uint64_t seed = 0x243f6a8885a308d3ULL) {
  std::vector<TreeAtom> atoms = pullback_atoms(f, x, n, budget, seed);
  double total = 0.0;
  for (const auto& a : atoms) total += static_cast<double>(a.count);
  std::vector<ProjPoint> pts;
  std::vector<double> w;
  for (const auto& a : atoms) {
    pts.push_back(a.point);
    w.push_back(static_cast<double>(a.count) / total);
  }
  EmpiricalMeasure m = make_measure(f.k, pts, w, MeasureProvenance::tree);
  return m;
}

// Markov chain x_{q+1} ~ uniform-with-multiplicity on f^{-1}(x_q); its
// transition operator is exactly d^{-k} f_* on functions.
inline std::vector<ProjPoint> backward_orbit(const HomogeneousMap& f,
                                             const ProjPoint& x, int n,
                                             std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<ProjPoint> orbit{x};
  double dk = static_cast<double>(topological_degree(f));
  for (int q = 0; q < n; ++q) {
    FiberResult fr = fiber(f, orbit.back(), rng());
    double u = uniform01(rng) * dk;
    double acc = 0.0;
    std::size_t pick = fr.points.size() - 1;
    for (std::size_t i = 0; i < fr.points.size(); ++i) {
      acc += static_cast<double>(fr.multiplicities[i]);
      if (u <= acc) {
        pick = i;
        break;
      }
    }
    orbit.push_back(fr.points[pick]);
  }
  return orbit;
}

// --- analytic continuation of inverse branches -----------------------------

struct BranchGerm {
  ProjPoint base;   // point downstairs
  ProjPoint lift;   // chosen preimage under f^n
  int depth = 0;
};

// Derivative of the change of chart at p, rows indexed by the target chart's
// coordinates, columns by the source chart's.
inline Eigen::MatrixXcd chart_transition_jacobian(const ProjPoint& p, int from,
                                                  int to) {
  int k = p.k;
  std::array<Cx, 3> z = p.coords;
  Cx zf = z[static_cast<std::size_t>(from)];
  require(std::abs(zf) > 1e-300, "ChartUndefined", "source chart undefined");
  for (int i = 0; i <= k; ++i) z[static_cast<std::size_t>(i)] /= zf;
  Cx zt = z[static_cast<std::size_t>(to)];
  require(std::abs(zt) > 1e-12, "ChartUndefined", "target chart undefined");
  std::vector<int> rows, cols;
  for (int i = 0; i <= k; ++i) {
    if (i != to) rows.push_back(i);
    if (i != from) cols.push_back(i);
  }
  Eigen::MatrixXcd t(k, k);
  for (int r = 0; r < k; ++r)
    for (int c = 0; c < k; ++c) {
      int m = rows[static_cast<std::size_t>(r)];
      int l = cols[static_cast<std::size_t>(c)];
      Cx num = ((m == l) ? zt : Cx(0.0)) - ((l == to) ? z[static_cast<std::size_t>(m)] : Cx(0.0));
      t(r, c) = num / (zt * zt);
    }
  return t;
}

enum class LiftStatus { ok, no_convergence, singular };

// Newton iteration for the branch equation f^n(z) = y from a nearby guess.
inline LiftStatus newton_lift(const HomogeneousMap& f, int n, const ProjPoint& y,
                              ProjPoint& z, int max_iter = 14,
                              double tol = 1e-11) {
  int k = f.k;
  int cy = pivot_index(y);
  ChartVector yc = to_chart(y, cy);
  for (int it = 0; it < max_iter; ++it) {
    ProjPoint w = iterate_eval(f, n, z);
    if (std::abs(w.coords[static_cast<std::size_t>(cy)]) < 1e-8)
      return LiftStatus::no_convergence;
    ChartVector wc = to_chart(w, cy);
    Eigen::VectorXcd r(k);
    for (int i = 0; i < k; ++i)
      r(i) = wc.affine[static_cast<std::size_t>(i)] - yc.affine[static_cast<std::size_t>(i)];
    ScaledMatrix j = iterate_jacobian(f, n, z);
    Eigen::MatrixXcd a = j.m;
    if (pivot_index(w) != cy)
      a = chart_transition_jacobian(w, pivot_index(w), cy) * a;
    double anorm = a.cwiseAbs().maxCoeff();
    double adet = std::abs(a.determinant());
    if (adet <= 1e-12 * std::max(1e-30, std::pow(anorm, k)))
      return LiftStatus::singular;
    Eigen::VectorXcd delta =
        a.fullPivLu().solve(r) * std::exp(-j.log_scale);
    if (delta.norm() > 0.5) return LiftStatus::no_convergence;
    ChartVector zc = to_chart(z);
    for (int i = 0; i < k; ++i) zc.affine[static_cast<std::size_t>(i)] -= delta(i);
    z = from_chart(zc);
    // Pivot-chart coordinates have modulus at most one; absolute tolerance.
    if (delta.norm() <= tol) return LiftStatus::ok;
  }
  return LiftStatus::no_convergence;
}

namespace detail {

// Forward declaration; defined with the critical-locus samplers below.
inline std::vector<ProjPoint> critical_samples_cached(const HomogeneousMap& f);

}  // namespace detail

// Continues the inverse branch of f^n along a discrete path. A failure near
// the sampled critical locus is reported as a collision; a failure in clear
// territory means the path step outran the Newton basin.
inline std::vector<BranchGerm> continue_branch(const HomogeneousMap& f, int n,
                                               const std::vector<ProjPoint>& path,
                                               const BranchGerm& germ,
                                               double max_path_step = 0.1,
                                               double max_lift_step = 0.25) {
  require(!path.empty(), "SchemaError", "empty path");
  require(germ.depth == n, "SchemaError", "germ depth mismatch");
  require(fs_distance(iterate_eval(f, n, germ.lift), path[0]) < 1e-6,
          "SchemaError", "germ does not lift the path start");
  for (std::size_t j = 0; j + 1 < path.size(); ++j)
    require(fs_distance(path[j], path[j + 1]) <= max_path_step, "StepTooLarge",
            "consecutive path points too far apart");

  std::vector<BranchGerm> out{{path[0], germ.lift, n}};
  ProjPoint lift = germ.lift;
  for (std::size_t j = 1; j < path.size(); ++j) {
    ProjPoint next = lift;
    LiftStatus st = newton_lift(f, n, path[j], next);
    if (st == LiftStatus::singular) {
      fail("CriticalCollision", "Jacobian below tolerance at a lift");
    }
    if (st == LiftStatus::no_convergence) {
      double near_c = 1.0;
      for (const ProjPoint& c : detail::critical_samples_cached(f))
        near_c = std::min(near_c, fs_distance(next, c));
      if (near_c < 0.05) {
        fail("CriticalCollision", "lift stalled next to the critical locus");
      }
      fail("StepTooLarge", "Newton basin check failed along the path");
    }
    if (fs_distance(next, lift) > max_lift_step)
      fail("StepTooLarge", "consecutive lifts exceed the contraction threshold");
    lift = next;
    out.push_back({path[j], lift, n});
  }
  return out;
}

// --- critical locus sampling -----------------------------------------------

// Homogeneous Jacobian determinant; its zero set is the critical locus.
inline HomPoly critical_determinant(const HomogeneousMap& f) {
  if (f.k == 1) {
    return add_polys(multiply(f.partials[0][0], f.partials[1][1]),
                     scale_poly(multiply(f.partials[0][1], f.partials[1][0]),
                                Cx(-1.0)));
  }
  HomPoly det = constant_poly(2, Cx(0.0));
  det.degree = 3 * (f.d - 1);
  int perm[6][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}, {0, 2, 1}, {2, 1, 0}, {1, 0, 2}};
  for (int p = 0; p < 6; ++p) {
    Cx sign = (p < 3) ? Cx(1.0) : Cx(-1.0);
    HomPoly prod = constant_poly(2, sign);
    for (int i = 0; i < 3; ++i)
      prod = multiply(prod, f.partials[static_cast<std::size_t>(i)]
                                      [static_cast<std::size_t>(perm[p][i])]);
    prod.degree = det.degree;
    det = add_polys(det, prod);
  }
  return det;
}

// Points on the critical locus: exact roots for k=1; intersections with
// random lines for k=2.
inline std::vector<ProjPoint> sample_critical_locus(const HomogeneousMap& f,
                                                    int count,
                                                    std::uint64_t seed) {
  if (f.k == 1) return critical_points_p1(f);
  HomPoly det = critical_determinant(f);
  require(!det.terms.empty(), "DegenerateForm", "vanishing Jacobian determinant");
  std::vector<ProjPoint> out;
  Rng rng = make_rng(seed);
  int guard = 0;
  while (static_cast<int>(out.size()) < count && guard++ < 64) {
    // line A + zeta B, encoded as degree-1 substitutions in (s,t)
    std::array<Cx, 3> a, b;
    for (int i = 0; i < 3; ++i) {
      a[static_cast<std::size_t>(i)] = gaussian_cx(rng);
      b[static_cast<std::size_t>(i)] = gaussian_cx(rng);
    }
    std::vector<HomPoly> lift;
    for (int i = 0; i < 3; ++i)
      lift.push_back(make_poly(1, 1,
                               {{{1, 0, 0}, b[static_cast<std::size_t>(i)]},
                                {{0, 1, 0}, a[static_cast<std::size_t>(i)]}}));
    HomPoly restricted = compose(det, lift);
    std::vector<Cx> coeffs = binary_form_coeffs(restricted);
    double cmax = 0.0;
    for (const Cx& c : coeffs) cmax = std::max(cmax, std::abs(c));
    if (cmax == 0.0) continue;  // line inside the locus; resample
    RootResult rr = polynomial_roots(coeffs);
    for (const Cx& zeta : rr.roots) {
      std::array<Cx, 3> z;
      for (int i = 0; i < 3; ++i)
        z[static_cast<std::size_t>(i)] =
            a[static_cast<std::size_t>(i)] + zeta * b[static_cast<std::size_t>(i)];
      out.push_back(normalize(z, 2));
    }
  }
  return out;
}

namespace detail {

inline std::vector<ProjPoint> critical_samples_cached(const HomogeneousMap& f) {
  // Small fixed sample set for collision classification; exact for k=1.
  return sample_critical_locus(f, 36, 0x2545f4914f6cdd1dULL);
}

}  // namespace detail

// Forward images f(C), f^2(C), ..., f^l(C) of critical samples.
inline std::vector<ProjPoint> sample_postcritical(const HomogeneousMap& f, int l,
                                                  int count, std::uint64_t seed) {
  std::vector<ProjPoint> c = sample_critical_locus(f, count, seed);
  std::vector<ProjPoint> out;
  for (const ProjPoint& p : c) {
    ProjPoint cur = p;
    for (int q = 1; q <= l; ++q) {
      cur = evaluate(f, cur);
      out.push_back(cur);
    }
  }
  return out;
}

// --- branch enumeration over a disk ----------------------------------------

struct BranchLift {
  int id = 0;
  double diameter = 0.0;
  ProjPoint center_lift;
  std::vector<ProjPoint> grid;  // ring-major lifts matching the base grid
};

struct BranchEnumeration {
  std::uint64_t attempted = 0;  // d^{kn}
  std::uint64_t succeeded = 0;
  std::uint64_t lost_critical = 0;  // collisions (incl. multiple center germs)
  std::uint64_t lost_other = 0;
  std::vector<double> ring_radii;
  int angular_count = 0;
  std::vector<BranchLift> branches;
};

namespace detail {

// Newton continuation with adaptive parameter bisection between base points.
inline LiftStatus continue_adaptive(const HomogeneousMap& f, int n,
                                    const ParamDisk& disk, Cx from, Cx to,
                                    ProjPoint& lift, int depth = 0) {
  ProjPoint guess = lift;
  LiftStatus st = newton_lift(f, n, disk_point(disk, to), guess);
  if (st == LiftStatus::ok) {
    lift = guess;
    return LiftStatus::ok;
  }
  if (st == LiftStatus::singular || depth >= 12) return st;
  Cx mid = 0.5 * (from + to);
  LiftStatus first = continue_adaptive(f, n, disk, from, mid, lift, depth + 1);
  if (first != LiftStatus::ok) return first;
  return continue_adaptive(f, n, disk, mid, to, lift, depth + 1);
}

}  // namespace detail

// Enumerates the inverse branches of f^n over a flat disk, lifting a radial
// grid; branches lost to critical collisions are counted, not raised.
inline BranchEnumeration inverse_branches_on_disk(const HomogeneousMap& f, int n,
                                                  const ParamDisk& disk, int l,
                                                  int n_rings = 3,
                                                  int n_angles = 12,
                                                  std::uint64_t budget = 1ULL << 20,
                                                  std::uint64_t seed = 0x452821e638d01377ULL) {
  require(!disk.grid_type(), "SchemaError",
          "branch enumeration needs a parametrized disk");
  require(n >= 0, "SchemaError", "negative depth");

  // Base grid.
  std::vector<double> radii;
  for (int i = 1; i <= n_rings; ++i)
    radii.push_back(static_cast<double>(i) / n_rings);
  std::vector<ProjPoint> base;
  ProjPoint center = disk_point(disk, Cx(0.0));
  for (double r : radii)
    for (int j = 0; j < n_angles; ++j)
      base.push_back(disk_point(disk, std::polar(r, 2.0 * kPi * j / n_angles)));

  // Postcritical clearance: the disk must avoid V_l by twice the grid step.
  double grid_step = 0.0;
  for (int j = 0; j < n_angles; ++j) {
    grid_step = std::max(grid_step,
                         fs_distance(center, base[static_cast<std::size_t>(j)]));
    for (int i = 0; i + 1 < n_rings; ++i)
      grid_step = std::max(
          grid_step,
          fs_distance(base[static_cast<std::size_t>(i * n_angles + j)],
                      base[static_cast<std::size_t>((i + 1) * n_angles + j)]));
  }
  if (l > 0) {
    std::vector<ProjPoint> vl = sample_postcritical(f, l, 36, derive_seed(seed, 1));
    for (const ProjPoint& v : vl) {
      double dmin = fs_distance(center, v);
      for (const ProjPoint& p : base) dmin = std::min(dmin, fs_distance(p, v));
      require(dmin > 2.0 * grid_step, "DiskMeetsPostcritical",
              "disk too close to a sampled postcritical point");
    }
  }

  BranchEnumeration out;
  out.ring_radii = radii;
  out.angular_count = n_angles;
  std::uint64_t dk = topological_degree(f);
  out.attempted = 1;
  for (int q = 0; q < n; ++q) out.attempted *= dk;

  std::vector<TreeAtom> atoms =
      pullback_atoms(f, center, n, budget, derive_seed(seed, 2));
  std::vector<const TreeAtom*> germs;
  for (const auto& a : atoms) {
    if (a.count == 1) {
      germs.push_back(&a);
    } else {
      out.lost_critical += a.count;  // branches collide already at the center
    }
  }

  std::vector<std::optional<BranchLift>> slots(germs.size());
  std::vector<int> failures(germs.size(), 0);  // 0 ok, 1 critical, 2 other
  parallel_for(germs.size(), [&](std::size_t g) {
    BranchLift bl;
    bl.id = static_cast<int>(g);
    bl.center_lift = germs[g]->point;
    bl.grid.assign(base.size(), bl.center_lift);
    for (int j = 0; j < n_angles; ++j) {
      ProjPoint lift = bl.center_lift;
      Cx prev(0.0);
      for (int i = 0; i < n_rings; ++i) {
        Cx zeta = std::polar(radii[static_cast<std::size_t>(i)],
                             2.0 * kPi * j / n_angles);
        LiftStatus st = detail::continue_adaptive(f, n, disk, prev, zeta, lift);
        if (st != LiftStatus::ok) {
          failures[g] = (st == LiftStatus::singular) ? 1 : 2;
          return;
        }
        bl.grid[static_cast<std::size_t>(i * n_angles + j)] = lift;
        prev = zeta;
      }
    }
    double diam = 0.0;
    std::vector<ProjPoint> all = bl.grid;
    all.push_back(bl.center_lift);
    for (std::size_t a = 0; a < all.size(); ++a)
      for (std::size_t b = a + 1; b < all.size(); ++b)
        diam = std::max(diam, fs_distance(all[a], all[b]));
    bl.diameter = diam;
    slots[g] = std::move(bl);
  });
  for (std::size_t g = 0; g < germs.size(); ++g) {
    if (slots[g]) {
      out.branches.push_back(std::move(*slots[g]));
      ++out.succeeded;
    } else if (failures[g] == 1) {
      ++out.lost_critical;
    } else {
      ++out.lost_other;
    }
  }
  for (std::size_t i = 0; i < out.branches.size(); ++i)
    out.branches[i].id = static_cast<int>(i);
  return out;
}

}  // namespace equidyn
