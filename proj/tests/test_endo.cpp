#include <catch2/catch_amalgamated.hpp>

#include "equidyn/endo.hpp"
#include "test_maps.hpp"

using namespace equidyn;
using namespace equidyn::testmaps;

namespace {

// Spherical derivative |f'(z)| (1+|z|^2)/(1+|f(z)|^2) of z^2.
double spherical_derivative_square(Cx z) {
  return 2.0 * std::abs(z) * (1.0 + std::norm(z)) / (1.0 + std::norm(z * z));
}

}  // namespace

TEST_CASE("evaluation on the line and the plane") {
  HomogeneousMap sq2 = make_map(
      2, 2,
      {make_poly(2, 2, {{{2, 0, 0}, Cx(1.0)}}),
       make_poly(2, 2, {{{0, 2, 0}, Cx(1.0)}}),
       make_poly(2, 2, {{{0, 0, 2}, Cx(1.0)}})});
  ProjPoint fixed = evaluate(sq2, normalize(Cx(1.0), Cx(1.0), Cx(1.0)));
  REQUIRE(fs_distance(fixed, normalize(Cx(1.0), Cx(1.0), Cx(1.0))) < 1e-14);

  HomogeneousMap sq = power_p1(2);
  ProjPoint y = evaluate(sq, point_p1(Cx(2.0)));
  REQUIRE(fs_distance(y, point_p1(Cx(4.0))) < 1e-14);

  HomogeneousMap m2 = quad_p1(Cx(-2.0));
  REQUIRE(fs_distance(evaluate(m2, point_p1(Cx(0.0))), point_p1(Cx(-2.0))) < 1e-14);
}

TEST_CASE("degenerate image raises") {
  HomogeneousMap bad = make_map(
      1, 2,
      {make_poly(1, 2, {{{2, 0, 0}, Cx(1.0)}}),
       make_poly(1, 2, {{{1, 1, 0}, Cx(1.0)}})});
  try {
    evaluate(bad, normalize(Cx(0.0), Cx(1.0)));
    FAIL("expected DegenerateImage");
  } catch (const Error& e) {
    REQUIRE(e.code() == "DegenerateImage");
  }
}

TEST_CASE("iterated evaluation") {
  HomogeneousMap sq = power_p1(2);
  ProjPoint x = point_p1(Cx(2.0));
  REQUIRE(fs_distance(iterate_eval(sq, 0, x), x) == 0.0);
  REQUIRE(fs_distance(iterate_eval(sq, 3, x), point_p1(Cx(256.0))) < 1e-12);
}

TEST_CASE("chart Jacobian of the squaring maps") {
  HomogeneousMap sq = power_p1(2);
  Eigen::MatrixXcd j1 = jacobian_chart(sq, normalize(Cx(1.0), Cx(1.0)));
  REQUIRE(j1.rows() == 1);
  REQUIRE(std::abs(j1(0, 0) - Cx(2.0)) < 1e-14);

  Eigen::MatrixXcd j2 = jacobian_chart(squares_p2(), normalize(Cx(1.0), Cx(1.0), Cx(1.0)));
  REQUIRE(std::abs(j2(0, 0) - Cx(2.0)) < 1e-14);
  REQUIRE(std::abs(j2(1, 1) - Cx(2.0)) < 1e-14);
  REQUIRE(std::abs(j2(0, 1)) < 1e-14);
  REQUIRE(std::abs(j2(1, 0)) < 1e-14);
}

TEST_CASE("metric derivative equals the spherical derivative on the line") {
  HomogeneousMap sq = power_p1(2);
  Rng rng = make_rng(41);
  for (int it = 0; it < 50; ++it) {
    ProjPoint x = sample_fs_point(1, rng);
    Cx z = x.coords[1] / x.coords[0];  // may be huge; formula handles it
    double expect;
    if (std::abs(x.coords[0]) < 1e-12) {
      expect = 0.0;  // infinity is critical for z^2
    } else {
      expect = spherical_derivative_square(z);
    }
    Eigen::MatrixXcd d = fs_derivative(sq, x);
    REQUIRE(std::abs(d(0, 0)) == Catch::Approx(expect).margin(1e-10));
  }
  ProjPoint three = point_p1(Cx(3.0));
  REQUIRE(std::abs(fs_derivative(sq, three)(0, 0)) ==
          Catch::Approx(30.0 / 41.0).epsilon(1e-12));
}

TEST_CASE("iterated Jacobian satisfies the chain rule") {
  Rng rng = make_rng(43);
  for (const HomogeneousMap& f :
       {power_p1(2), quad_p1(Cx(-1.0)), squares_p2(), perturbed_p2(0.1)}) {
    for (int it = 0; it < 10; ++it) {
      ProjPoint x = sample_fs_point(f.k, rng);
      ScaledMatrix whole = iterate_jacobian(f, 3, x);
      ScaledMatrix first = iterate_jacobian(f, 1, x);
      ScaledMatrix rest = iterate_jacobian(f, 2, evaluate(f, x));
      Eigen::MatrixXcd prod = rest.m * first.m;
      double log_prod = rest.log_scale + first.log_scale;
      double scale = std::exp(log_prod - whole.log_scale);
      REQUIRE((prod * scale - whole.m).norm() <= 1e-8 * whole.m.norm());
    }
  }
}

TEST_CASE("iterated Jacobian matches central differences") {
  HomogeneousMap sq = power_p1(2);
  ProjPoint x = point_p1(Cx(2.0));
  int n = 3;
  ScaledMatrix jac = iterate_jacobian(sq, n, x);
  Cx analytic = jac.m(0, 0) * std::exp(jac.log_scale);

  ChartVector cv = to_chart(x);
  ProjPoint image = iterate_eval(sq, n, x);
  int image_chart = pivot_index(image);
  double h = 1e-5;
  auto chart_image = [&](Cx u) {
    ChartVector moved = cv;
    moved.affine[0] = u;
    return to_chart(iterate_eval(sq, n, from_chart(moved)), image_chart).affine[0];
  };
  Cx u0 = cv.affine[0];
  Cx fd_re = (chart_image(u0 + h) - chart_image(u0 - h)) / (2.0 * h);
  Cx fd_im = (chart_image(u0 + Cx(0.0, h)) - chart_image(u0 - Cx(0.0, h))) /
             Cx(0.0, 2.0 * h);
  REQUIRE(std::abs(fd_re - analytic) < 1e-6 * std::abs(analytic));
  REQUIRE(std::abs(fd_im - analytic) < 1e-6 * std::abs(analytic));
}

TEST_CASE("criticality flags") {
  HomogeneousMap sq = power_p1(2);
  REQUIRE(is_critical(sq, point_p1(Cx(0.0))));
  REQUIRE(!is_critical(sq, normalize(Cx(1.0), Cx(1.0))));
  REQUIRE(is_critical(quad_p1(Cx(-2.0)), point_p1(Cx(0.0))));
  CriticalSample cs = critical_sample(sq, normalize(Cx(1.0), Cx(1.0)));
  REQUIRE(cs.jac_det_modulus == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("critical points of small rational maps") {
  auto expect_points = [](std::vector<ProjPoint> got,
                          std::vector<ProjPoint> want) {
    REQUIRE(got.size() == want.size());
    for (const ProjPoint& w : want) {
      auto it = std::find_if(got.begin(), got.end(), [&](const ProjPoint& g) {
        return fs_distance(g, w) < 1e-8;
      });
      REQUIRE(it != got.end());
      got.erase(it);
    }
  };
  expect_points(critical_points_p1(power_p1(2)),
                {point_p1(Cx(0.0)), infinity_p1()});
  expect_points(critical_points_p1(power_p1(3)),
                {point_p1(Cx(0.0)), point_p1(Cx(0.0)), infinity_p1(), infinity_p1()});
  expect_points(critical_points_p1(quad_p1(Cx(-2.0))),
                {point_p1(Cx(0.0)), infinity_p1()});
  expect_points(critical_points_p1(rational_p1()),
                {point_p1(Cx(0.0)), infinity_p1()});
}

TEST_CASE("resultant certifies nondegeneracy") {
  REQUIRE(resultant_p1(power_p1(2)) == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(nondegenerate_p1(power_p1(2)));
  REQUIRE(nondegenerate_p1(quad_p1(Cx(-1.0))));
  REQUIRE(nondegenerate_p1(rational_p1()));
  HomogeneousMap degenerate = make_map(
      1, 2,
      {make_poly(1, 2, {{{2, 0, 0}, Cx(1.0)}}),
       make_poly(1, 2, {{{1, 1, 0}, Cx(1.0)}})});
  REQUIRE(!nondegenerate_p1(degenerate));
}

TEST_CASE("volume pairing recovers the topological degree") {
  MeanStdErr line = degree_pairing_estimate(power_p1(2), 20000, 7);
  REQUIRE(std::abs(line.mean - 2.0) < 3.0 * line.std_error + 1e-9);
  MeanStdErr quad = degree_pairing_estimate(quad_p1(Cx(-1.0)), 20000, 7);
  REQUIRE(std::abs(quad.mean - 2.0) < 3.0 * quad.std_error + 1e-9);
  MeanStdErr plane = degree_pairing_estimate(squares_p2(), 20000, 7);
  REQUIRE(std::abs(plane.mean - 4.0) < 3.0 * plane.std_error + 1e-9);
}
