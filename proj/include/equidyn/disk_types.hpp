#pragma once

#include <vector>

#include "equidyn/core.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

// A holomorphic disk, either as a polynomial curve from the closed unit
// parameter disk into C^{k+1} (evaluate anywhere), or as a radial x angular
// grid of lifted points (inverse-branch images, sample-only).
struct ParamDisk {
  int k = 1;
  double inner_radius = 0.5;  // parameter radius of the small disk D
  double outer_radius = 1.0;  // parameter radius of the large disk D~

  // (a) polynomial type: sigma(zeta) = sum_j coeffs[j] zeta^j
  std::vector<std::array<Cx, 3>> coeffs;

  // (b) grid type: ring-major samples at ring_radii x equally spaced angles,
  // preceded by the center lift.
  std::vector<double> ring_radii;
  int angular_count = 0;
  ProjPoint center;
  std::vector<ProjPoint> grid;

  bool grid_type() const { return !grid.empty(); }
};

inline ProjPoint disk_point(const ParamDisk& d, Cx zeta) {
  require(!d.grid_type(), "SchemaError", "grid disks have no parametrization");
  std::array<Cx, 3> z{Cx(0.0), Cx(0.0), Cx(0.0)};
  Cx p(1.0);
  for (const auto& c : d.coeffs) {
    for (int i = 0; i <= d.k; ++i) z[static_cast<std::size_t>(i)] += c[static_cast<std::size_t>(i)] * p;
    p *= zeta;
  }
  return normalize(z, d.k);
}

// Derivative of the homogeneous parametrization (not normalized).
inline std::array<Cx, 3> disk_point_derivative(const ParamDisk& d, Cx zeta) {
  std::array<Cx, 3> z{Cx(0.0), Cx(0.0), Cx(0.0)};
  Cx p(1.0);
  for (std::size_t j = 1; j < d.coeffs.size(); ++j) {
    for (int i = 0; i <= d.k; ++i) {
      z[static_cast<std::size_t>(i)] +=
          static_cast<double>(j) * d.coeffs[j][static_cast<std::size_t>(i)] * p;
    }
    p *= zeta;
  }
  return z;
}

// Affine parameter radius whose chordal distance from the center is rho.
inline double chordal_affine_radius(double rho) {
  require(rho > 0.0 && rho < 1.0, "SchemaError", "chordal radius must be in (0,1)");
  return rho / std::sqrt(1.0 - rho * rho);
}

// Round chordal disk of radius rho around a point of the line: the unitary
// moving the center to a coordinate point makes the parametrization linear
// in homogeneous coordinates, so |zeta|=1 maps exactly to chordal
// distance rho.
inline ParamDisk chordal_disk_p1(const ProjPoint& center, double rho) {
  require(center.k == 1, "DimensionMismatch", "chordal_disk_p1 needs k=1");
  double nn = std::sqrt(norm_squared(center));
  Cx v0 = center.coords[0] / nn, v1 = center.coords[1] / nn;
  // unit vector orthogonal to the center representative
  Cx w0 = -std::conj(v1), w1 = std::conj(v0);
  double ra = chordal_affine_radius(rho);
  ParamDisk d;
  d.k = 1;
  d.coeffs = {{v0, v1, Cx(0.0)}, {ra * w0, ra * w1, Cx(0.0)}};
  return d;
}

// Same construction inside a line of P^2 spanned by orthonormal a, b with
// center a.
inline ParamDisk chordal_disk_on_line(const std::array<Cx, 3>& a,
                                      const std::array<Cx, 3>& b, double rho) {
  double ra = chordal_affine_radius(rho);
  ParamDisk d;
  d.k = 2;
  d.coeffs = {a, {ra * b[0], ra * b[1], ra * b[2]}};
  return d;
}

}  // namespace equidyn
