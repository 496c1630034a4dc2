#pragma once

// Map builders shared by the test suites.

#include "equidyn/empirical.hpp"
#include "equidyn/endo.hpp"

namespace equidyn::testmaps {

// z -> z^d on the line.
inline HomogeneousMap power_p1(int d) {
  return make_map(1, d,
                  {make_poly(1, d, {{{d, 0, 0}, Cx(1.0)}}),
                   make_poly(1, d, {{{0, d, 0}, Cx(1.0)}})});
}

// z -> z^2 + c.
inline HomogeneousMap quad_p1(Cx c) {
  return make_map(1, 2,
                  {make_poly(1, 2, {{{2, 0, 0}, Cx(1.0)}, {{0, 2, 0}, c}}),
                   make_poly(1, 2, {{{0, 2, 0}, Cx(1.0)}})});
}

// z -> (z^2 - 1)/(z^2 + 1), a rational map with simple critical points.
inline HomogeneousMap rational_p1() {
  return make_map(1, 2,
                  {make_poly(1, 2, {{{2, 0, 0}, Cx(1.0)}, {{0, 2, 0}, Cx(-1.0)}}),
                   make_poly(1, 2, {{{2, 0, 0}, Cx(1.0)}, {{0, 2, 0}, Cx(1.0)}})});
}

// [z^2 : w^2 : t^2] on the plane.
inline HomogeneousMap squares_p2() {
  return make_map(2, 2,
                  {make_poly(2, 2, {{{2, 0, 0}, Cx(1.0)}}),
                   make_poly(2, 2, {{{0, 2, 0}, Cx(1.0)}}),
                   make_poly(2, 2, {{{0, 0, 2}, Cx(1.0)}})});
}

// [z^2 + eps w t : w^2 : t^2].
inline HomogeneousMap perturbed_p2(double eps) {
  return make_map(2, 2,
                  {make_poly(2, 2, {{{2, 0, 0}, Cx(1.0)}, {{0, 1, 1}, Cx(eps)}}),
                   make_poly(2, 2, {{{0, 2, 0}, Cx(1.0)}}),
                   make_poly(2, 2, {{{0, 0, 2}, Cx(1.0)}})});
}

// Product map (p(z), q(w)) in the affine chart t=1, i.e.
// [z^2 + a t^2 : w^2 + b t^2 : t^2].
inline HomogeneousMap product_p2(Cx a, Cx b) {
  return make_map(2, 2,
                  {make_poly(2, 2, {{{2, 0, 0}, Cx(1.0)}, {{0, 0, 2}, a}}),
                   make_poly(2, 2, {{{0, 2, 0}, Cx(1.0)}, {{0, 0, 2}, b}}),
                   make_poly(2, 2, {{{0, 0, 2}, Cx(1.0)}})});
}

// Uniform measure on the m-th roots of unity (the invariant measure of z^d).
inline EmpiricalMeasure uniform_circle(int m) {
  std::vector<ProjPoint> pts;
  for (int j = 0; j < m; ++j)
    pts.push_back(point_p1(std::polar(1.0, 2.0 * kPi * j / m)));
  std::vector<double> w(pts.size(), 1.0 / m);
  return make_measure(1, pts, w, MeasureProvenance::external);
}

// m points drawn uniformly on the unit circle.
inline EmpiricalMeasure random_circle(int m, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<ProjPoint> pts;
  for (int j = 0; j < m; ++j)
    pts.push_back(point_p1(std::polar(1.0, 2.0 * kPi * uniform01(rng))));
  std::vector<double> w(pts.size(), 1.0 / m);
  return make_measure(1, pts, w, MeasureProvenance::external);
}

}  // namespace equidyn::testmaps
