#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "equidyn/core.hpp"
#include "equidyn/disk_types.hpp"
#include "equidyn/endo.hpp"
#include "equidyn/fiber.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

namespace detail {

// Gauss-Legendre nodes and weights on [0,1], by Newton iteration on P_m.
inline void gauss_legendre(int m, std::vector<double>& nodes,
                           std::vector<double>& weights) {
  nodes.assign(static_cast<std::size_t>(m), 0.0);
  weights.assign(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (m + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= m; ++j) {
        double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = m * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[static_cast<std::size_t>(m - 1 - i)] = 0.5 * (1.0 + x);
    weights[static_cast<std::size_t>(m - 1 - i)] =
        1.0 / ((1.0 - x * x) * dp * dp);
  }
}

// Raw polynomial lift sigma(zeta) in C^{k+1} (unnormalized).
inline std::array<Cx, 3> disk_lift(const ParamDisk& d, Cx zeta) {
  std::array<Cx, 3> z{Cx(0.0), Cx(0.0), Cx(0.0)};
  Cx p(1.0);
  for (const auto& c : d.coeffs) {
    for (int i = 0; i <= d.k; ++i)
      z[static_cast<std::size_t>(i)] += c[static_cast<std::size_t>(i)] * p;
    p *= zeta;
  }
  return z;
}

// Density of the pulled-back normalized Fubini-Study form against Lebesgue
// measure in the parameter: (1/pi) (|s|^2|s'|^2 - |<s',s>|^2) / |s|^4.
inline double fs_pullback_density(const ParamDisk& d, Cx zeta) {
  std::array<Cx, 3> s = disk_lift(d, zeta);
  std::array<Cx, 3> sp = disk_point_derivative(d, zeta);
  double nn = 0.0, nd = 0.0;
  Cx ip(0.0);
  for (int i = 0; i <= d.k; ++i) {
    nn += std::norm(s[static_cast<std::size_t>(i)]);
    nd += std::norm(sp[static_cast<std::size_t>(i)]);
    ip += sp[static_cast<std::size_t>(i)] * std::conj(s[static_cast<std::size_t>(i)]);
  }
  require(nn > 1e-300, "SchemaError", "disk lift vanishes");
  return (nn * nd - std::norm(ip)) / (kPi * nn * nn);
}

inline double disk_area_quadrature(const ParamDisk& d, double radius, int nr,
                                   int na) {
  std::vector<double> xs, ws;
  gauss_legendre(nr, xs, ws);
  KahanSum acc;
  for (int i = 0; i < nr; ++i) {
    double r = radius * xs[static_cast<std::size_t>(i)];
    double wr = radius * ws[static_cast<std::size_t>(i)] * r * (2.0 * kPi / na);
    for (int j = 0; j < na; ++j) {
      Cx zeta = std::polar(r, 2.0 * kPi * j / na);
      acc.add(fs_pullback_density(d, zeta) * wr);
    }
  }
  return acc.value();
}

inline double heron(double a, double b, double c) {
  double s = 0.5 * (a + b + c);
  double q = s * (s - a) * (s - b) * (s - c);
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

// Triangulated area of a grid disk in the chordal metric, every step-th
// angular sample; divided by pi this approximates the normalized FS area for
// small triangles (documented small-diameter bias).
inline double grid_area_triangulated(const ParamDisk& d, int rings, int step) {
  int na = d.angular_count;
  auto at = [&](int i, int j) -> const ProjPoint& {
    return d.grid[static_cast<std::size_t>(i * na + (j % na))];
  };
  KahanSum acc;
  for (int j = 0; j < na; j += step) {
    int jn = (j + step) % na;
    // fan around the center lift
    double a = fs_distance(d.center, at(0, j));
    double b = fs_distance(d.center, at(0, jn));
    double c = fs_distance(at(0, j), at(0, jn));
    acc.add(heron(a, b, c));
    for (int i = 0; i + 1 < rings; ++i) {
      double e00 = fs_distance(at(i, j), at(i + 1, j));
      double e01 = fs_distance(at(i, j), at(i + 1, jn));
      double e11 = fs_distance(at(i + 1, j), at(i + 1, jn));
      double e0 = fs_distance(at(i, j), at(i, jn));
      double e1 = fs_distance(at(i, jn), at(i + 1, jn));
      acc.add(heron(e00, e11, e01));
      acc.add(heron(e0, e1, e01));
    }
  }
  return acc.value() / kPi;
}

inline int included_rings(const std::vector<double>& ring_radii, double radius) {
  int rings = 0;
  for (double r : ring_radii) {
    if (r <= radius + 1e-12) ++rings;
  }
  return rings;
}

}  // namespace detail

// Normalized Fubini-Study area of the sub-disk |zeta| <= radius, counted with
// covering multiplicity for non-injective parametrizations.  Parametrized
// disks integrate the pullback form by Gauss-Legendre x trapezoid; grid disks
// are triangulated in the chordal metric.  Two refinement levels must agree
// within 1% (grid disks coarsen the angular sampling; with fewer than 16
// angular samples there is no room to coarsen and the check is skipped).
inline double disk_area(const ParamDisk& d, double radius, int nr = 24,
                        int na = 64) {
  require(radius > 0.0 && radius <= d.outer_radius + 1e-12, "SchemaError",
          "radius outside the parameter disk");
  if (!d.grid_type()) {
    double coarse = detail::disk_area_quadrature(d, radius, nr, na);
    double fine = detail::disk_area_quadrature(d, radius, 2 * nr, 2 * na);
    require(std::abs(fine - coarse) <= 0.01 * std::max(std::abs(fine), 1e-9),
            "QuadratureNonConvergent",
            "refined quadrature moves the area by more than 1%");
    return fine;
  }
  int rings = detail::included_rings(d.ring_radii, radius);
  require(rings >= 1, "SchemaError", "radius excludes every grid ring");
  double fine = detail::grid_area_triangulated(d, rings, 1);
  if (d.angular_count >= 16 && d.angular_count % 2 == 0) {
    double coarse = detail::grid_area_triangulated(d, rings, 2);
    require(std::abs(fine - coarse) <= 0.01 * std::max(std::abs(fine), 1e-9),
            "QuadratureNonConvergent",
            "angular coarsening moves the area by more than 1%");
  }
  return fine;
}

// Max pairwise chordal distance over samples of the sub-disk |zeta| <= radius.
inline double disk_diameter(const ParamDisk& d, double radius, int nr = 12,
                            int na = 48) {
  require(radius > 0.0 && radius <= d.outer_radius + 1e-12, "SchemaError",
          "radius outside the parameter disk");
  std::vector<ProjPoint> pts;
  if (!d.grid_type()) {
    pts.push_back(disk_point(d, Cx(0.0)));
    for (int i = 1; i <= nr; ++i)
      for (int j = 0; j < na; ++j)
        pts.push_back(disk_point(
            d, std::polar(radius * i / nr, 2.0 * kPi * j / na)));
  } else {
    pts.push_back(d.center);
    int rings = detail::included_rings(d.ring_radii, radius);
    for (int i = 0; i < rings; ++i)
      for (int j = 0; j < d.angular_count; ++j)
        pts.push_back(d.grid[static_cast<std::size_t>(i * d.angular_count + j)]);
  }
  double diam = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b)
      diam = std::max(diam, fs_distance(pts[a], pts[b]));
  return diam;
}

// Conformal modulus of the parameter annulus r < |zeta| < R.  The branch
// parametrizations are conformal onto their images, so this equals the
// modulus of the image annulus without any numerical module estimation.
inline double annulus_modulus(double r, double R) {
  require(r > 0.0 && r < R, "SchemaError", "need 0 < r < R");
  return std::log(R / r) / (2.0 * kPi);
}

// Diam(D)^2 mod(A) / Area(D~) for the concentric pair D = {|zeta| <= r},
// D~ = {|zeta| <= R}; the comparison lemma says this is bounded by a
// universal constant, reported empirically over disk families.
inline double area_diameter_check(const ParamDisk& d, double r, double R) {
  require(r > 0.0 && r < R, "SchemaError", "need 0 < r < R");
  double area = disk_area(d, R);
  require(area > 1e-300, "SchemaError", "degenerate disk has no area");
  double diam = disk_diameter(d, r);
  return diam * diam * annulus_modulus(r, R) / area;
}

// --- inverse-branch experiment ----------------------------------------------

struct LjubichRow {
  int n = 0;
  std::uint64_t attempted = 0;
  std::uint64_t succeeded = 0;
  std::uint64_t lost_critical = 0;
  std::uint64_t lost_other = 0;
  double target = 0.0;     // (1 - epsilon) d^{kn}
  bool count_ok = false;   // succeeded >= target
  double diam_median = 0.0;
  double diam_max = 0.0;
  double small_fraction = 0.0;  // diameters <= c_hat d^{-n/2}
  double area_sum = 0.0;        // sum of branch areas over the full grid
  double area_bound = 0.0;      // d^{(k-1)n}
  std::vector<double> diameters;  // per-branch, in enumeration order
};

struct LjubichReport {
  int l = 0;
  double epsilon = 0.0;
  double tau = 0.0;    // degree of the critical locus
  double c_hat = 0.0;  // max diam * d^{n/2} at the smallest depth
  double diam_slope = 0.0;  // regression of log median diameter on n
  std::vector<LjubichRow> rows;
  std::vector<double> ratios;  // area-diameter ratios of all branch disks
};

// Enumerates inverse branches of f^n over a flat disk of chordal radius
// tilde_radius around `center` (inside the line `line` when k=2), for each n
// in n_range, and reports counts against the (1-epsilon) d^{kn} target plus
// diameter and area statistics of the branch disks.  `l` must satisfy
// 2 tau d^{-l} (1-1/d)^{-1} < epsilon with tau the critical-locus degree, and
// the disk must clear the sampled first l critical images by twice the grid
// step; both are preconditions.
inline LjubichReport ljubich_experiment(
    const HomogeneousMap& f, const std::array<Cx, 3>& line,
    const ProjPoint& center, double delta_radius, double tilde_radius,
    int l, const std::vector<int>& n_range, double epsilon,
    int n_rings = 3, int n_angles = 12, std::uint64_t budget = 1ULL << 20,
    int vl_samples = 10000, std::uint64_t seed = 0x9e3779b97f4a7c15ULL) {
  require(center.k == f.k, "DimensionMismatch", "center dimension mismatch");
  require(delta_radius > 0.0 && delta_radius < tilde_radius &&
              tilde_radius < 1.0,
          "SchemaError", "need 0 < delta_radius < tilde_radius < 1");
  require(!n_range.empty(), "SchemaError", "empty depth range");
  require(epsilon > 0.0 && epsilon < 1.0, "SchemaError",
          "epsilon must lie in (0,1)");

  double d = static_cast<double>(f.d);
  double tau = (f.k == 1 ? 2.0 : 3.0) * (d - 1.0);
  require(l >= 0 && 2.0 * tau * std::pow(d, -l) / (1.0 - 1.0 / d) < epsilon,
          "PreconditionViolated",
          "l too small: 2 tau d^{-l} (1-1/d)^{-1} >= epsilon");

  // Concentric chordal disk, linear in homogeneous coordinates.
  ParamDisk disk;
  if (f.k == 1) {
    disk = chordal_disk_p1(center, tilde_radius);
  } else {
    double fn = 0.0;
    for (const Cx& c : line) fn += std::norm(c);
    require(fn > 0.0, "SchemaError", "zero linear form");
    Cx on_line = line[0] * center.coords[0] + line[1] * center.coords[1] +
                 line[2] * center.coords[2];
    require(std::abs(on_line) <=
                1e-9 * std::sqrt(fn * norm_squared(center)),
            "PreconditionViolated", "center does not lie on the line");
    Eigen::Vector3cd w;
    w << std::conj(line[0]), std::conj(line[1]), std::conj(line[2]);
    Eigen::HouseholderQR<Eigen::Matrix<Cx, 3, 1>> qr(w);
    Eigen::Matrix3cd q = qr.householderQ();
    Eigen::Vector3cd a;
    a << center.coords[0], center.coords[1], center.coords[2];
    a /= a.norm();
    Eigen::Vector3cd b = q.col(1) - a * a.dot(q.col(1));
    if (b.norm() < 1e-8) b = q.col(2) - a * a.dot(q.col(2));
    b /= b.norm();
    disk = chordal_disk_on_line({a(0), a(1), a(2)}, {b(0), b(1), b(2)},
                                tilde_radius);
  }
  double inner_param = chordal_affine_radius(delta_radius) /
                       chordal_affine_radius(tilde_radius);
  disk.inner_radius = inner_param;

  // Postcritical clearance, checked on the lifted base grid.
  std::vector<ProjPoint> base{disk_point(disk, Cx(0.0))};
  for (int i = 1; i <= n_rings; ++i)
    for (int j = 0; j < n_angles; ++j)
      base.push_back(disk_point(
          disk, std::polar(static_cast<double>(i) / n_rings,
                           2.0 * kPi * j / n_angles)));
  double grid_step = 0.0;
  for (int j = 0; j < n_angles; ++j)
    for (int i = 0; i < n_rings; ++i)
      grid_step = std::max(
          grid_step,
          fs_distance(base[static_cast<std::size_t>(
                          i == 0 ? 0 : (i - 1) * n_angles + j + 1)],
                      base[static_cast<std::size_t>(i * n_angles + j + 1)]));
  if (l > 0) {
    std::vector<ProjPoint> vl =
        sample_postcritical(f, l, vl_samples, derive_seed(seed, 1));
    for (const ProjPoint& v : vl) {
      double dmin = 1.0;
      for (const ProjPoint& p : base) dmin = std::min(dmin, fs_distance(p, v));
      if (dmin <= 2.0 * grid_step) {
        ChartVector vc = to_chart(v);
        std::string where;
        for (const Cx& c : vc.affine)
          where += " (" + std::to_string(c.real()) + "," +
                   std::to_string(c.imag()) + ")";
        fail("PreconditionViolated",
             "disk within twice the grid step of a sampled critical image at"
             " chart point" + where);
      }
    }
  }

  LjubichReport rep;
  rep.l = l;
  rep.epsilon = epsilon;
  rep.tau = tau;

  double dk = static_cast<double>(topological_degree(f));
  std::vector<double> slope_n, slope_logdiam;
  for (std::size_t idx = 0; idx < n_range.size(); ++idx) {
    int n = n_range[idx];
    require(n >= 0, "SchemaError", "negative depth");
    BranchEnumeration en = inverse_branches_on_disk(
        f, n, disk, 0, n_rings, n_angles, budget, derive_seed(seed, 2 + idx));

    LjubichRow row;
    row.n = n;
    row.attempted = en.attempted;
    row.succeeded = en.succeeded;
    row.lost_critical = en.lost_critical;
    row.lost_other = en.lost_other;
    row.target = (1.0 - epsilon) * std::pow(dk, n);
    row.count_ok =
        static_cast<double>(en.succeeded) >= row.target - 1e-9;
    row.area_bound = std::pow(d, (f.k - 1) * n);

    std::vector<double> diams;
    KahanSum areas;
    for (const BranchLift& bl : en.branches) {
      ParamDisk gd;
      gd.k = f.k;
      gd.inner_radius = inner_param;
      gd.outer_radius = 1.0;
      gd.ring_radii = en.ring_radii;
      gd.angular_count = en.angular_count;
      gd.center = bl.center_lift;
      gd.grid = bl.grid;
      diams.push_back(disk_diameter(gd, inner_param));
      areas.add(disk_area(gd, 1.0));
      rep.ratios.push_back(area_diameter_check(gd, inner_param, 1.0));
    }
    row.area_sum = areas.value();
    row.diameters = diams;
    if (!diams.empty()) {
      std::vector<double> sorted = diams;
      std::sort(sorted.begin(), sorted.end());
      row.diam_max = sorted.back();
      row.diam_median = sorted[sorted.size() / 2];
      if (idx == 0)
        rep.c_hat = row.diam_max * std::pow(d, 0.5 * n);
      double cut = rep.c_hat * std::pow(d, -0.5 * n);
      std::size_t small = 0;
      for (double dm : diams)
        if (dm <= cut * (1.0 + 1e-12)) ++small;
      row.small_fraction =
          static_cast<double>(small) / static_cast<double>(diams.size());
      if (row.diam_median > 0.0 && n > 0) {
        slope_n.push_back(static_cast<double>(n));
        slope_logdiam.push_back(std::log(row.diam_median));
      }
    }
    rep.rows.push_back(row);
  }
  if (slope_n.size() >= 2)
    rep.diam_slope = fit_slope(slope_n, slope_logdiam).slope;
  return rep;
}

}  // namespace equidyn
