#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include <Eigen/Dense>

#include "equidyn/core.hpp"
#include "equidyn/empirical.hpp"
#include "equidyn/endo.hpp"
#include "equidyn/fiber.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

using BigInt = boost::multiprecision::cpp_int;

// --- dynamical distance ----------------------------------------------------

// d_n(x,y) = max chordal distance along the first n steps of both orbits.
// The metric is capped at 1, so the scan stops once the max saturates.
inline double dyn_distance(const HomogeneousMap& f, const ProjPoint& x,
                           const ProjPoint& y, int n) {
  require(n >= 1, "SchemaError", "horizon must be positive");
  require(x.k == f.k && y.k == f.k, "DimensionMismatch",
          "points do not live on the map's space");
  ProjPoint px = x, py = y;
  double best = fs_distance(px, py);
  for (int q = 1; q < n && best < 1.0; ++q) {
    px = evaluate(f, px);
    py = evaluate(f, py);
    best = std::max(best, fs_distance(px, py));
  }
  return best;
}

struct SeparatedSetResult {
  int n = 1;
  double epsilon = 0.0;
  std::vector<ProjPoint> points;
  std::size_t cardinality = 0;
};

namespace detail {

// Row-major orbit table: row i holds the first `horizon` points of the orbit
// of pts[i]. Rows are filled in parallel; the layout is thread-count free.
inline std::vector<ProjPoint> orbit_table(const HomogeneousMap& f,
                                          const std::vector<ProjPoint>& pts,
                                          int horizon) {
  std::vector<ProjPoint> table(pts.size() * static_cast<std::size_t>(horizon));
  parallel_for(pts.size(), [&](std::size_t i) {
    ProjPoint p = pts[i];
    for (int q = 0; q < horizon; ++q) {
      table[i * static_cast<std::size_t>(horizon) + static_cast<std::size_t>(q)] = p;
      if (q + 1 < horizon) p = evaluate(f, p);
    }
  });
  return table;
}

inline double table_dyn_distance(const std::vector<ProjPoint>& table, int stride,
                                 int n, std::size_t a, std::size_t b,
                                 double stop_at) {
  double best = 0.0;
  for (int q = 0; q < n; ++q) {
    best = std::max(best, fs_distance(table[a * static_cast<std::size_t>(stride) +
                                            static_cast<std::size_t>(q)],
                                      table[b * static_cast<std::size_t>(stride) +
                                            static_cast<std::size_t>(q)]));
    if (best >= stop_at) break;
  }
  return best;
}

// Greedy pass over `order`; sequential by contract so the packing does not
// depend on the thread count.
inline std::vector<std::size_t> greedy_separated(const std::vector<ProjPoint>& table,
                                                 int stride, int n, double eps,
                                                 const std::vector<std::size_t>& order) {
  std::vector<std::size_t> accepted;
  for (std::size_t c : order) {
    bool ok = true;
    for (std::size_t a : accepted) {
      if (table_dyn_distance(table, stride, n, c, a, eps) < eps) {
        ok = false;
        break;
      }
    }
    if (ok) accepted.push_back(c);
  }
  return accepted;
}

inline std::vector<std::size_t> canonical_order(const std::vector<ProjPoint>& pts) {
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return canonical_less(pts[a], pts[b]);
  });
  return order;
}

}  // namespace detail

inline SeparatedSetResult separated_set(const HomogeneousMap& f, int n, double epsilon,
                                        const std::vector<ProjPoint>& candidates) {
  require(n >= 1, "SchemaError", "horizon must be positive");
  require(epsilon > 0.0, "SchemaError", "separation radius must be positive");
  require(!candidates.empty(), "SchemaError", "candidate pool is empty");
  for (const ProjPoint& p : candidates)
    require(p.k == f.k, "DimensionMismatch", "candidate arity mismatch");

  std::vector<std::size_t> order = detail::canonical_order(candidates);
  std::vector<ProjPoint> table = detail::orbit_table(f, candidates, n);
  std::vector<std::size_t> accepted =
      detail::greedy_separated(table, n, n, epsilon, order);

  SeparatedSetResult out;
  out.n = n;
  out.epsilon = epsilon;
  for (std::size_t i : accepted) out.points.push_back(candidates[i]);
  out.cardinality = out.points.size();
  return out;
}

// Max over epsilon of the least-squares slope of log cardinality against the
// horizon. A pool that the packing exhausts cannot witness further growth,
// hence the saturation guard.
inline double entropy_estimate(const HomogeneousMap& f, const std::vector<int>& n_range,
                               const std::vector<double>& epsilon_list,
                               const std::vector<ProjPoint>& candidates) {
  require(n_range.size() >= 4, "SchemaError", "need at least four horizons");
  require(!epsilon_list.empty(), "SchemaError", "epsilon list is empty");
  require(!candidates.empty(), "SchemaError", "candidate pool is empty");
  int nmax = 0;
  for (int n : n_range) {
    require(n >= 1, "SchemaError", "horizon must be positive");
    nmax = std::max(nmax, n);
  }
  for (const ProjPoint& p : candidates)
    require(p.k == f.k, "DimensionMismatch", "candidate arity mismatch");

  std::vector<std::size_t> order = detail::canonical_order(candidates);
  std::vector<ProjPoint> table = detail::orbit_table(f, candidates, nmax);

  double best = -1e300;
  for (double eps : epsilon_list) {
    require(eps > 0.0, "SchemaError", "separation radius must be positive");
    std::vector<double> xs, ys;
    for (int n : n_range) {
      std::size_t card =
          detail::greedy_separated(table, nmax, n, eps, order).size();
      require(10 * card < 9 * candidates.size(), "InsufficientGrowth",
              "separated set saturates the candidate pool");
      xs.push_back(static_cast<double>(n));
      ys.push_back(std::log(static_cast<double>(card)));
    }
    best = std::max(best, fit_slope(xs, ys).slope);
  }
  return best;
}

// --- Brin-Katok local entropy ----------------------------------------------

// Masses of dynamical balls around x, reported as -(1/n) log mass for each
// requested horizon. Horizons are taken in the given order and the sequence
// stops at the first empty ball.
inline std::vector<double> brin_katok(const HomogeneousMap& f,
                                      const EmpiricalMeasure& mu, const ProjPoint& x,
                                      double epsilon, const std::vector<int>& n_range) {
  require(mu.k == f.k && x.k == f.k, "DimensionMismatch",
          "measure, point, and map must share arity");
  require(epsilon > 0.0, "SchemaError", "ball radius must be positive");
  require(!n_range.empty(), "SchemaError", "horizon list is empty");
  require(!mu.atoms.empty(), "SchemaError", "measure has no atoms");
  int nmax = 0;
  for (int n : n_range) {
    require(n >= 1, "SchemaError", "horizon must be positive");
    nmax = std::max(nmax, n);
  }

  std::vector<ProjPoint> ox = orbit(f, x, nmax - 1);

  // horizon[i] = largest n with the atom inside B_n(x, eps); the dynamical
  // distance is non-decreasing in n, so each atom leaves the ball exactly once.
  std::vector<int> horizon(mu.atoms.size(), 0);
  parallel_for(mu.atoms.size(), [&](std::size_t i) {
    ProjPoint p = mu.atoms[i];
    int h = 0;
    for (int q = 0; q < nmax; ++q) {
      if (fs_distance(ox[static_cast<std::size_t>(q)], p) >= epsilon) break;
      ++h;
      if (q + 1 < nmax) p = evaluate(f, p);
    }
    horizon[i] = h;
  });

  std::vector<double> mass_leaving(static_cast<std::size_t>(nmax) + 1, 0.0);
  for (std::size_t i = 0; i < mu.atoms.size(); ++i)
    mass_leaving[static_cast<std::size_t>(horizon[i])] += mu.weights[i];
  // ball_mass[n-1] = mass of atoms with horizon >= n, by suffix sums.
  std::vector<double> ball_mass(static_cast<std::size_t>(nmax) + 1, 0.0);
  for (int n = nmax; n >= 1; --n)
    ball_mass[static_cast<std::size_t>(n - 1)] =
        ball_mass[static_cast<std::size_t>(n)] + mass_leaving[static_cast<std::size_t>(n)];

  std::vector<double> out;
  for (int n : n_range) {
    double m = ball_mass[static_cast<std::size_t>(n - 1)];
    if (m <= 0.0) break;
    out.push_back(-std::log(m) / static_cast<double>(n));
  }
  require(!out.empty(), "EmptyBall", "no atoms inside the first dynamical ball");
  return out;
}

// --- Gromov graph volume ---------------------------------------------------

struct VolumeEstimate {
  int n = 1;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t sample_count = 0;
};

namespace detail {

inline VolumeEstimate summarize_volume(int n, const std::vector<double>& vals) {
  MeanStdErr m = mean_std_error(vals);
  return {n, m.mean, m.std_error, m.count};
}

}  // namespace detail

// Polarized pairing of two Hermitian (1,1)-forms in a plane chart. The halved
// convention makes D(A,A) = det A, so D(H,H) is the chart volume density.
inline double mixed_discriminant(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Cx v = a(0, 0) * b(1, 1) + a(1, 1) * b(0, 0) - a(0, 1) * b(1, 0) - a(1, 0) * b(0, 1);
  return 0.5 * v.real();
}

// Monte Carlo volume of the iterated graph: the sum over all index tuples of
// mixed pullback densities collapses to det(sum of pulled-back forms) by
// bilinearity, against the FS volume at the sample. Closed form:
// ((d^n - 1)/(d - 1))^k.
inline VolumeEstimate graph_volume(const HomogeneousMap& f, int n,
                                   std::size_t mc_samples, Rng& rng) {
  require(n >= 1, "SchemaError", "horizon must be positive");
  require(mc_samples >= 1, "SchemaError", "need at least one sample");
  std::uint64_t base = rng();
  int k = f.k;
  std::vector<double> vals(mc_samples, 0.0);
  parallel_for(mc_samples, [&](std::size_t s) {
    Rng r = make_rng(derive_seed(base, s));
    ProjPoint x = sample_fs_point(k, r);
    Eigen::MatrixXcd h0 = fs_metric_matrix(x);
    Eigen::MatrixXcd jac = Eigen::MatrixXcd::Identity(k, k);
    Eigen::MatrixXcd form = Eigen::MatrixXcd::Zero(k, k);
    ProjPoint p = x;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXcd hi = (i == 0) ? h0 : fs_metric_matrix(p);
      form += jac.adjoint() * hi * jac;
      if (i + 1 < n) {
        jac = jacobian_chart(f, p) * jac;
        p = evaluate(f, p);
      }
    }
    vals[s] = (form.determinant() / h0.determinant()).real();
  });
  return detail::summarize_volume(n, vals);
}

// Single diagonal term of the graph volume: all slots pull back along f^i, so
// the expectation is the mapping degree d^{ki} of module endo's degree test.
inline VolumeEstimate graph_volume_term(const HomogeneousMap& f, int i,
                                        std::size_t mc_samples, Rng& rng) {
  require(i >= 0, "SchemaError", "iterate index must be non-negative");
  require(mc_samples >= 1, "SchemaError", "need at least one sample");
  std::uint64_t base = rng();
  int k = f.k;
  std::vector<double> vals(mc_samples, 0.0);
  parallel_for(mc_samples, [&](std::size_t s) {
    Rng r = make_rng(derive_seed(base, s));
    ProjPoint x = sample_fs_point(k, r);
    Eigen::MatrixXcd h0 = fs_metric_matrix(x);
    ScaledMatrix jac = iterate_jacobian(f, i, x);
    ProjPoint p = iterate_eval(f, i, x);
    Eigen::MatrixXcd m = jac.m.adjoint() * fs_metric_matrix(p) * jac.m;
    double logdet = std::log(std::abs((m.determinant() / h0.determinant()).real()) + 1e-300);
    vals[s] = std::exp(logdet + 2.0 * static_cast<double>(k) * jac.log_scale);
  });
  return detail::summarize_volume(i, vals);
}

// --- restricted graph volume over a curve ----------------------------------

// Quadrature node on a curve: a point plus a homogeneous tangent direction.
// Any lift of the tangent works; radial components drop out of the densities.
struct VarietySample {
  ProjPoint point;
  std::array<Cx, 3> tangent{};
};

// FS-uniform nodes on the line {form . Z = 0} with the tangent of the line at
// each node. Weights 1/count then integrate (1,1)-forms against omega
// restricted to the line (total mass = degree 1).
inline std::vector<VarietySample> line_quadrature(const std::array<Cx, 3>& form,
                                                  std::size_t count,
                                                  std::uint64_t seed) {
  require(count >= 1, "SchemaError", "need at least one node");
  double fn = 0.0;
  for (const Cx& c : form) fn += std::norm(c);
  require(fn > 0.0, "SchemaError", "zero linear form");

  Eigen::Vector3cd a;
  a << std::conj(form[0]), std::conj(form[1]), std::conj(form[2]);
  Eigen::HouseholderQR<Eigen::Matrix<Cx, 3, 1>> qr(a);
  Eigen::Matrix3cd q = qr.householderQ();
  Eigen::Vector3cd u = q.col(1), v = q.col(2);

  std::vector<VarietySample> out(count);
  parallel_for(count, [&](std::size_t s) {
    Rng r = make_rng(derive_seed(seed, s));
    Cx al = gaussian_cx(r), be = gaussian_cx(r);
    while (std::norm(al) + std::norm(be) < 1e-12) {
      al = gaussian_cx(r);
      be = gaussian_cx(r);
    }
    Eigen::Vector3cd y = al * u + be * v;
    Eigen::Vector3cd t = -std::conj(be) * u + std::conj(al) * v;
    out[s].point = normalize(y(0), y(1), y(2));
    out[s].tangent = {t(0), t(1), t(2)};
  });
  return out;
}

namespace detail {

// Chart tangent of a homogeneous tangent lift at p, in p's pivot chart.
inline Eigen::VectorXcd chart_tangent(const ProjPoint& p, const std::array<Cx, 3>& t) {
  int piv = pivot_index(p);
  Cx zp = p[piv], tp = t[static_cast<std::size_t>(piv)];
  Eigen::VectorXcd out(p.k);
  int slot = 0;
  for (int i = 0; i < p.dim(); ++i) {
    if (i == piv) continue;
    out(slot++) = (t[static_cast<std::size_t>(i)] * zp - p[i] * tp) / (zp * zp);
  }
  return out;
}

// ratio[j][i] = density of f^{i*}omega against omega along the curve tangent
// at node j.
inline std::vector<std::vector<double>> restricted_density_table(
    const HomogeneousMap& f, int n, const std::vector<VarietySample>& nodes) {
  std::vector<std::vector<double>> table(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t j) {
    const VarietySample& node = nodes[j];
    Eigen::VectorXcd t = chart_tangent(node.point, node.tangent);
    Eigen::MatrixXcd h = fs_metric_matrix(node.point);
    double den = (t.adjoint() * h * t)(0).real();
    require(den > 1e-300, "SchemaError", "tangent lift is radial at a node");
    std::vector<double> row(static_cast<std::size_t>(n), 0.0);
    ProjPoint p = node.point;
    Eigen::VectorXcd v = t;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXcd hi = (i == 0) ? h : fs_metric_matrix(p);
      row[static_cast<std::size_t>(i)] = (v.adjoint() * hi * v)(0).real() / den;
      if (i + 1 < n) {
        v = jacobian_chart(f, p) * v;
        p = evaluate(f, p);
      }
    }
    table[j] = std::move(row);
  });
  return table;
}

}  // namespace detail

// Sum over i < n of the integrals of f^{i*}omega over the curve carrying the
// nodes; exact value tau * (d^n - 1)/(d - 1) for a curve of degree tau.
inline VolumeEstimate restricted_graph_volume(const HomogeneousMap& f, int n,
                                              const std::vector<VarietySample>& variety_samples,
                                              const std::vector<double>& mc_weights) {
  require(f.k == 2, "DimensionMismatch", "restricted volume needs k=2");
  require(n >= 1, "SchemaError", "horizon must be positive");
  require(!variety_samples.empty(), "SchemaError", "no quadrature nodes");
  require(mc_weights.size() == variety_samples.size(), "SchemaError",
          "one weight per node required");
  std::vector<std::vector<double>> table =
      detail::restricted_density_table(f, n, variety_samples);
  double m = static_cast<double>(variety_samples.size());
  std::vector<double> vals(variety_samples.size(), 0.0);
  for (std::size_t j = 0; j < variety_samples.size(); ++j) {
    require(mc_weights[j] >= 0.0, "SchemaError", "negative quadrature weight");
    vals[j] = m * mc_weights[j] * sum_in_order(table[j]);
  }
  return detail::summarize_volume(n, vals);
}

// Per-index terms of the restricted volume; term i estimates tau * d^i.
inline std::vector<VolumeEstimate> restricted_volume_terms(
    const HomogeneousMap& f, int n, const std::vector<VarietySample>& variety_samples,
    const std::vector<double>& mc_weights) {
  require(f.k == 2, "DimensionMismatch", "restricted volume needs k=2");
  require(n >= 1, "SchemaError", "horizon must be positive");
  require(!variety_samples.empty(), "SchemaError", "no quadrature nodes");
  require(mc_weights.size() == variety_samples.size(), "SchemaError",
          "one weight per node required");
  std::vector<std::vector<double>> table =
      detail::restricted_density_table(f, n, variety_samples);
  double m = static_cast<double>(variety_samples.size());
  std::vector<VolumeEstimate> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> vals(variety_samples.size(), 0.0);
    for (std::size_t j = 0; j < variety_samples.size(); ++j)
      vals[j] = m * mc_weights[j] * table[j][static_cast<std::size_t>(i)];
    out.push_back(detail::summarize_volume(i, vals));
  }
  return out;
}

// --- constant Jacobian test ------------------------------------------------

namespace detail {

// Unitary sending x to the last coordinate axis; the affine chart there has
// FS metric = identity at the origin, so chart radii are metric radii.
inline Eigen::MatrixXcd normal_frame(const ProjPoint& x) {
  int dim = x.dim();
  Eigen::MatrixXcd z(dim, 1);
  for (int i = 0; i < dim; ++i) z(i, 0) = x[i];
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(z);
  Eigen::MatrixXcd q = qr.householderQ();
  Eigen::MatrixXcd u(dim, dim);
  for (int c = 1; c < dim; ++c) u.row(c - 1) = q.col(c).adjoint();
  u.row(dim - 1) = q.col(0).adjoint();
  return u;
}

// Derivative of f between the normal charts of c and f(c); first order in
// metric coordinates on both sides.
inline Eigen::MatrixXcd normal_jacobian(const HomogeneousMap& f,
                                        const Eigen::MatrixXcd& uc,
                                        const Eigen::MatrixXcd& ufc) {
  int k = f.k, dim = k + 1;
  Eigen::VectorXcd zc = uc.adjoint().col(dim - 1);
  std::array<Cx, 3> zarr{Cx(0.0), Cx(0.0), Cx(0.0)};
  for (int i = 0; i < dim; ++i) zarr[static_cast<std::size_t>(i)] = zc(i);
  Eigen::MatrixXcd df(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      df(i, j) = eval_poly(f.partials[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], zarr);
  std::array<Cx, 3> varr = evaluate_raw(f, zarr);
  Eigen::VectorXcd v0(dim);
  for (int i = 0; i < dim; ++i) v0(i) = varr[static_cast<std::size_t>(i)];
  v0 = ufc * v0;
  Eigen::MatrixXcd dv = ufc * df * uc.adjoint().leftCols(k);
  Eigen::MatrixXcd jac(k, k);
  Cx vl = v0(dim - 1);
  for (int m = 0; m < k; ++m)
    for (int j = 0; j < k; ++j)
      jac(j, m) = (dv(j, m) * vl - v0(j) * dv(dim - 1, m)) / (vl * vl);
  return jac;
}

}  // namespace detail

// Compares the mass of small balls with d^{-k} times the mass of their image
// (first-order ellipse through the normal-chart Jacobian), over balls on
// which f is injective. Injectivity uses fiber separation: the matching
// fiber point must be simple and every other one at distance > 3 radius.
inline double jacobian_constant_check(const HomogeneousMap& f, const EmpiricalMeasure& mu,
                                      int patch_count, Rng& rng, double radius = 0.05,
                                      double mass_floor = 0.01) {
  require(mu.k == f.k, "DimensionMismatch", "measure/map arity mismatch");
  require(patch_count >= 1, "SchemaError", "need at least one patch");
  require(radius > 0.0 && radius < 0.3, "SchemaError",
          "patch radius must sit in (0, 0.3)");
  require(!mu.atoms.empty(), "SchemaError", "measure has no atoms");
  std::uint64_t base = rng();
  double dk = std::pow(static_cast<double>(f.d), f.k);

  double worst = -1.0;
  for (int patch = 0; patch < patch_count; ++patch) {
    Rng r = make_rng(derive_seed(base, static_cast<std::uint64_t>(patch)));
    std::size_t ci = std::min(mu.atoms.size() - 1,
                              static_cast<std::size_t>(uniform01(r) *
                                                       static_cast<double>(mu.atoms.size())));
    const ProjPoint& c = mu.atoms[ci];
    ProjPoint fc = evaluate(f, c);

    FiberResult fib = fiber(f, fc, derive_seed(base, 1000 + static_cast<std::uint64_t>(patch)));
    std::size_t match = fib.points.size();
    bool injective = true;
    for (std::size_t i = 0; i < fib.points.size(); ++i) {
      double dist = fs_distance(fib.points[i], c);
      if (dist <= radius) {
        if (match != fib.points.size()) injective = false;  // two close preimages
        match = i;
      } else if (dist <= 3.0 * radius) {
        injective = false;
      }
    }
    if (!injective || match == fib.points.size() || fib.multiplicities[match] != 1)
      continue;

    Eigen::MatrixXcd uc = detail::normal_frame(c);
    Eigen::MatrixXcd ufc = detail::normal_frame(fc);
    Eigen::MatrixXcd jac = detail::normal_jacobian(f, uc, ufc);
    if (std::abs(jac.determinant()) < 1e-12) continue;
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(jac);

    double ball_mass = 0.0, image_mass = 0.0;
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
      if (fs_distance(c, mu.atoms[i]) < radius) ball_mass += mu.weights[i];
      if (fs_distance(fc, mu.atoms[i]) < 0.8) {
        Eigen::VectorXcd a(f.k + 1);
        for (int m = 0; m <= f.k; ++m) a(m) = mu.atoms[i][m];
        a = ufc * a;
        Cx al = a(f.k);
        Eigen::VectorXcd w(f.k);
        for (int m = 0; m < f.k; ++m) w(m) = a(m) / al;
        if (lu.solve(w).norm() < radius) image_mass += mu.weights[i];
      }
    }
    if (ball_mass < mass_floor) continue;
    double pushed = image_mass / dk;
    double dev = std::abs(ball_mass - pushed) / std::max(ball_mass, pushed);
    worst = std::max(worst, dev);
  }
  require(worst >= 0.0, "NoValidPatch",
          "no patch passed the injectivity and mass-floor screens");
  return worst;
}

// --- counting lemma --------------------------------------------------------

// Exact cardinality of the set of words in {1..d^k}^n whose symbol 1 appears
// at least ceil(n sigma) times.
inline BigInt sigma_count(int dk, int n, double sigma) {
  require(dk >= 2, "SchemaError", "alphabet needs at least two symbols");
  require(n >= 1, "SchemaError", "word length must be positive");
  require(sigma > 1.0 / static_cast<double>(dk) && sigma <= 1.0, "SchemaError",
          "sigma must lie in (1/d^k, 1]");
  int m = static_cast<int>(std::ceil(static_cast<double>(n) * sigma - 1e-9));
  if (m < 0) m = 0;
  if (m > n) m = n;

  BigInt binom = 1;  // C(n, m), built by exact stepwise products
  for (int t = 1; t <= m; ++t) binom = binom * (n - m + t) / t;
  BigInt pw = boost::multiprecision::pow(BigInt(dk - 1), static_cast<unsigned>(n - m));
  BigInt total = 0;
  for (int j = m; j <= n; ++j) {
    total += binom * pw;
    if (j < n) {
      binom = binom * (n - j) / (j + 1);
      pw /= (dk - 1);
    }
  }
  return total;
}

}  // namespace equidyn
