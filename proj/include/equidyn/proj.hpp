#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "equidyn/core.hpp"

namespace equidyn {

// ---------------------------------------------------------------------------
// Points of P^k(C), k = 1 or 2, in canonical homogeneous coordinates:
// the largest-modulus coordinate has modulus 1, and the first coordinate
// attaining the maximum is real and nonnegative. With that representative,
// equality of projective points is chordal distance below tolerance.
// ---------------------------------------------------------------------------

struct ProjPoint {
  int k = 1;                    // dimension of the ambient P^k
  std::array<Cx, 3> coords{};   // k+1 entries used

  int dim() const { return k + 1; }
  const Cx& operator[](int i) const { return coords[static_cast<std::size_t>(i)]; }
  Cx& operator[](int i) { return coords[static_cast<std::size_t>(i)]; }
};

namespace detail {

// Pivot = first coordinate whose modulus is within a relative 1e-6 band of
// the maximum.  A strict argmax would flip between representatives when two
// moduli tie up to rounding (points on |z| = 1 in P^1 are the common case).
// The band is kept well above kPointEqualityTol so that two copies of the
// same point, apart by at most that tolerance, select the same pivot.
inline int stable_pivot(const std::array<Cx, 3>& raw, int dim) {
  double max_mod = 0.0;
  for (int i = 0; i < dim; ++i) {
    max_mod = std::max(max_mod, std::abs(raw[static_cast<std::size_t>(i)]));
  }
  double band = max_mod * (1.0 - 1e-6);
  for (int i = 0; i < dim; ++i) {
    if (std::abs(raw[static_cast<std::size_t>(i)]) >= band) return i;
  }
  return 0;
}

}  // namespace detail

inline ProjPoint normalize(const std::array<Cx, 3>& raw, int k) {
  int dim = k + 1;
  int pivot = detail::stable_pivot(raw, dim);
  double max_mod = std::abs(raw[static_cast<std::size_t>(pivot)]);
  require(max_mod >= 1e-300, "ZeroVector", "cannot normalize the zero vector");
  ProjPoint p;
  p.k = k;
  // Multiplying by conj(pivot)/|pivot|^2 rescales the pivot to exactly 1.
  Cx scale = std::conj(raw[static_cast<std::size_t>(pivot)]) / (max_mod * max_mod);
  for (int i = 0; i < dim; ++i) {
    p[i] = raw[static_cast<std::size_t>(i)] * scale;
  }
  p[pivot] = Cx(1.0, 0.0);
  return p;
}

inline ProjPoint normalize(Cx a, Cx b) { return normalize({a, b, Cx(0)}, 1); }
inline ProjPoint normalize(Cx a, Cx b, Cx c) { return normalize({a, b, c}, 2); }

// Point of P^1 from an affine coordinate.
inline ProjPoint point_p1(Cx z) { return normalize(z, Cx(1.0)); }
inline ProjPoint infinity_p1() { return normalize(Cx(1.0), Cx(0.0)); }

// Point of P^2 from affine coordinates in the last chart.
inline ProjPoint point_p2(Cx z, Cx w) { return normalize(z, w, Cx(1.0)); }

inline int pivot_index(const ProjPoint& p) {
  return detail::stable_pivot(p.coords, p.dim());
}

inline Cx hermitian_inner(const ProjPoint& x, const ProjPoint& y) {
  Cx s(0.0);
  for (int i = 0; i < x.dim(); ++i) s += x[i] * std::conj(y[i]);
  return s;
}

inline double norm_squared(const ProjPoint& x) {
  double s = 0.0;
  for (int i = 0; i < x.dim(); ++i) s += std::norm(x[i]);
  return s;
}

// Chordal Fubini-Study distance, sqrt(1 - |<x,y>|^2 / (|x|^2 |y|^2)).
// Takes values in [0,1]; invariant under rescaling either argument.
// Computed through the Binet-Cauchy identity as |x ^ y| / (|x| |y|): the
// naive sqrt(1 - cos^2) form cancels catastrophically below sqrt(eps), which
// would put a ~1e-8 floor under distances between nearly identical points.
inline double fs_distance(const ProjPoint& x, const ProjPoint& y) {
  require(x.k == y.k, "DimensionMismatch", "points live in different projective spaces");
  double cross = 0.0;
  for (int i = 0; i < x.dim(); ++i) {
    for (int j = i + 1; j < x.dim(); ++j) {
      cross += std::norm(x[i] * y[j] - x[j] * y[i]);
    }
  }
  double d2 = cross / (norm_squared(x) * norm_squared(y));
  return d2 < 1.0 ? std::sqrt(d2) : 1.0;
}

inline bool points_equal(const ProjPoint& x, const ProjPoint& y,
                         double tol = kPointEqualityTol) {
  return fs_distance(x, y) <= tol;
}

// ---------------------------------------------------------------------------
// Affine charts. chart_index selects the coordinate divided out; the k
// remaining coordinates, in index order, form the affine vector.
// ---------------------------------------------------------------------------

struct ChartVector {
  int k = 1;
  int chart_index = 0;
  std::array<Cx, 2> affine{};

  const Cx& operator[](int i) const { return affine[static_cast<std::size_t>(i)]; }
  Cx& operator[](int i) { return affine[static_cast<std::size_t>(i)]; }
};

inline ChartVector to_chart(const ProjPoint& p, int chart_index) {
  require(std::abs(p[chart_index]) > 1e-300, "ChartUndefined",
          "chart coordinate vanishes at this point");
  ChartVector v;
  v.k = p.k;
  v.chart_index = chart_index;
  int slot = 0;
  for (int i = 0; i < p.dim(); ++i) {
    if (i == chart_index) continue;
    v[slot++] = p[i] / p[chart_index];
  }
  return v;
}

inline ChartVector to_chart(const ProjPoint& p) { return to_chart(p, pivot_index(p)); }

inline ProjPoint from_chart(const ChartVector& v) {
  std::array<Cx, 3> raw{};
  int slot = 0;
  for (int i = 0; i <= v.k; ++i) {
    if (i == v.chart_index) {
      raw[static_cast<std::size_t>(i)] = Cx(1.0);
    } else {
      raw[static_cast<std::size_t>(i)] = v[slot++];
    }
  }
  return normalize(raw, v.k);
}

inline double chart_norm_squared(const ChartVector& v) {
  double s = 0.0;
  for (int i = 0; i < v.k; ++i) s += std::norm(v[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Fubini-Study metric in a chart, normalized so the induced volume form
// omega^k has total mass 1. The Hermitian matrix is
//   H_ij = (1/pi) * ((1+|z|^2) delta_ij - conj(z_i) z_j) / (1+|z|^2)^2,
// and the volume density against Lebesgue measure on the chart is
// k! * det H (so that for k=1 the density is (1/pi)(1+|z|^2)^{-2}).
// ---------------------------------------------------------------------------

inline Eigen::MatrixXcd fs_form(const ChartVector& v) {
  int k = v.k;
  double r2 = chart_norm_squared(v);
  double denom = (1.0 + r2) * (1.0 + r2);
  Eigen::MatrixXcd h(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      Cx val = (i == j) ? Cx(1.0 + r2) : Cx(0.0);
      val -= std::conj(v[i]) * v[j];
      h(i, j) = val / (kPi * denom);
    }
  }
  return h;
}

inline double fs_volume_density(const ChartVector& v) {
  int k = v.k;
  double det = std::abs(fs_form(v).determinant().real());
  double factorial = (k == 1) ? 1.0 : 2.0;
  return factorial * det;
}

// Length of a tangent vector (in chart coordinates) for the FS metric.
inline double fs_tangent_norm(const ChartVector& at, const Eigen::VectorXcd& t) {
  Eigen::MatrixXcd h = fs_form(at);
  Cx q = (t.adjoint() * h * t)(0, 0);
  double v = q.real();
  return v > 0.0 ? std::sqrt(v) : 0.0;
}

// ---------------------------------------------------------------------------
// Sampling the Fubini-Study volume: normalized Gaussian vectors in C^{k+1}
// project to FS-uniform points of P^k. Deterministic for a fixed seed.
// ---------------------------------------------------------------------------

inline ProjPoint sample_fs_point(int k, Rng& rng) {
  std::array<Cx, 3> raw{};
  for (;;) {
    double n2 = 0.0;
    for (int i = 0; i <= k; ++i) {
      raw[static_cast<std::size_t>(i)] = gaussian_cx(rng);
      n2 += std::norm(raw[static_cast<std::size_t>(i)]);
    }
    if (n2 > 1e-30) break;
  }
  return normalize(raw, k);
}

inline std::vector<ProjPoint> sample_fs_volume(int k, std::size_t n, std::uint64_t seed) {
  std::vector<ProjPoint> pts(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng = make_rng(derive_seed(seed, i));
    pts[i] = sample_fs_point(k, rng);
  });
  return pts;
}

// Canonical ordering used wherever point sets must be reduced
// deterministically (lexicographic on normalized coordinates).
namespace detail {

// Primary canonical-sort key: a fixed generic linear functional of the
// normalized representative.  Plain lexicographic order is useless for
// duplicate detection -- distinct points can share leading coordinates to the
// last bit (conjugate pairs on the circle do), which lets them interleave
// between two copies of one point.  A generic functional separates such
// configurations, and it moves by O(distance) under perturbation, so true
// duplicates always land within a narrow key window.
inline double sort_key(const ProjPoint& p) {
  static constexpr double ka[3] = {0.81917251339616454, 0.34010974593281571,
                                   0.59096020719190163};
  static constexpr double kb[3] = {0.26277579412413840, 0.92843588087973043,
                                   0.42534136299887081};
  double s = 0.0;
  for (int i = 0; i < p.dim(); ++i) {
    s += ka[i] * p[i].real() + kb[i] * p[i].imag();
  }
  return s;
}

// Visit groups of coinciding points (within tol) of a range already sorted by
// canonical_less.  Scans forward only while the sort key stays within a
// window wide enough to contain any point within tol of the group head, so
// the cost is near-linear.  emit receives the member indices, head first.
template <class PointAt, class Emit>
inline void merge_sorted_clusters(std::size_t n, PointAt&& point, double tol,
                                  Emit&& emit) {
  std::vector<char> used(n, 0);
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) continue;
    members.clear();
    members.push_back(i);
    double key = sort_key(point(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sort_key(point(j)) - key > 64.0 * tol) break;
      if (used[j]) continue;
      if (points_equal(point(i), point(j), tol)) {
        used[j] = 1;
        members.push_back(j);
      }
    }
    emit(members);
  }
}

}  // namespace detail

inline bool canonical_less(const ProjPoint& a, const ProjPoint& b) {
  double sa = detail::sort_key(a);
  double sb = detail::sort_key(b);
  if (sa != sb) return sa < sb;
  for (int i = 0; i < a.dim(); ++i) {
    if (a[i].real() != b[i].real()) return a[i].real() < b[i].real();
    if (a[i].imag() != b[i].imag()) return a[i].imag() < b[i].imag();
  }
  return false;
}

}  // namespace equidyn
