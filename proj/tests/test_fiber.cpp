#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "equidyn/fiber.hpp"
#include "test_maps.hpp"

using namespace equidyn;
using Catch::Approx;

namespace {

// Bijective nearest-point comparison of a fiber against an expected set.
void check_points(const std::vector<ProjPoint>& got,
                  const std::vector<ProjPoint>& expected, double tol) {
  REQUIRE(got.size() == expected.size());
  std::vector<bool> used(got.size(), false);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    double best = 2.0;
    std::size_t pick = 0;
    for (std::size_t j = 0; j < got.size(); ++j) {
      if (used[j]) continue;
      double d = fs_distance(expected[i], got[j]);
      if (d < best) {
        best = d;
        pick = j;
      }
    }
    CAPTURE(i, best);
    REQUIRE(best < tol);
    used[pick] = true;
  }
}

int mult_total(const FiberResult& fr) {
  int t = 0;
  for (int m : fr.multiplicities) t += m;
  return t;
}

}  // namespace

TEST_CASE("squaring fiber of a generic point") {
  auto f = testmaps::power_p1(2);
  FiberResult fr = fiber_p1(f, point_p1(Cx(1.0)));
  REQUIRE(fr.solver == FiberSolver::univariate);
  check_points(fr.points, {point_p1(Cx(-1.0)), point_p1(Cx(1.0))}, 5e-8);
  REQUIRE(fr.multiplicities == std::vector<int>{1, 1});
  for (double r : fr.residuals) REQUIRE(r < 1e-10);
}

TEST_CASE("squaring fiber at the critical values") {
  auto f = testmaps::power_p1(2);
  FiberResult at0 = fiber_p1(f, point_p1(Cx(0.0)));
  REQUIRE(at0.points.size() == 1);
  REQUIRE(at0.multiplicities[0] == 2);
  REQUIRE(fs_distance(at0.points[0], point_p1(Cx(0.0))) < 1e-12);

  FiberResult atInf = fiber_p1(f, infinity_p1());
  REQUIRE(atInf.points.size() == 1);
  REQUIRE(atInf.multiplicities[0] == 2);
  REQUIRE(fs_distance(atInf.points[0], infinity_p1()) < 1e-12);
}

TEST_CASE("shifted quadratic fiber at its branch value") {
  auto f = testmaps::quad_p1(Cx(-2.0));  // z^2 - 2
  FiberResult fr = fiber_p1(f, point_p1(Cx(-2.0)));
  REQUIRE(fr.points.size() == 1);
  REQUIRE(fr.multiplicities[0] == 2);
  REQUIRE(fs_distance(fr.points[0], point_p1(Cx(0.0))) < 1e-12);
}

TEST_CASE("cubic fiber carries the cube roots") {
  auto f = testmaps::power_p1(3);
  FiberResult fr = fiber_p1(f, point_p1(Cx(1.0)));
  std::vector<ProjPoint> expected;
  for (int j = 0; j < 3; ++j)
    expected.push_back(point_p1(std::polar(1.0, 2.0 * kPi * j / 3.0)));
  check_points(fr.points, expected, 5e-8);
  REQUIRE(mult_total(fr) == 3);
}

TEST_CASE("rational map fiber with both roots at infinity") {
  auto f = testmaps::rational_p1();  // (z^2-1)/(z^2+1)
  FiberResult fr = fiber_p1(f, point_p1(Cx(1.0)));
  REQUIRE(fr.points.size() == 1);
  REQUIRE(fr.multiplicities[0] == 2);
  REQUIRE(fs_distance(fr.points[0], infinity_p1()) < 1e-12);

  FiberResult at0 = fiber_p1(f, point_p1(Cx(0.0)));
  check_points(at0.points, {point_p1(Cx(-1.0)), point_p1(Cx(1.0))}, 5e-8);
}

TEST_CASE("near-coincident fiber points are flagged as ambiguous") {
  auto f = testmaps::quad_p1(Cx(-2.0));
  // Fiber points sit at +-1e-7: merged at 1e-6 and 1e-5 but not at 1e-7.
  ProjPoint y = point_p1(Cx(-2.0 + 1e-14));
  REQUIRE_THROWS_WITH(fiber_p1(f, y), Catch::Matchers::ContainsSubstring("unstable"));
  try {
    fiber_p1(f, y);
  } catch (const Error& e) {
    REQUIRE(e.code() == "MultiplicityAmbiguity");
  }
}

TEST_CASE("well-separated close fiber points stay distinct") {
  auto f = testmaps::quad_p1(Cx(-2.0));
  FiberResult fr = fiber_p1(f, point_p1(Cx(-2.0 + 1e-8)));
  REQUIRE(fr.points.size() == 2);  // roots at +-1e-4
  REQUIRE(fr.multiplicities == std::vector<int>{1, 1});
}

TEST_CASE("plane squaring fiber of a generic point") {
  auto f = testmaps::squares_p2();
  FiberResult fr = fiber_homotopy(f, point_p2(Cx(4.0), Cx(9.0)), 7);
  REQUIRE(fr.solver == FiberSolver::homotopy);
  std::vector<ProjPoint> expected;
  for (double sz : {-2.0, 2.0})
    for (double sw : {-3.0, 3.0}) expected.push_back(point_p2(Cx(sz), Cx(sw)));
  check_points(fr.points, expected, 5e-8);
  REQUIRE(fr.multiplicities == std::vector<int>{1, 1, 1, 1});
  for (double r : fr.residuals) REQUIRE(r < 5e-8);
}

TEST_CASE("plane squaring fiber over the critical image line") {
  auto f = testmaps::squares_p2();
  FiberResult fr = fiber_homotopy(f, point_p2(Cx(0.0), Cx(1.0)), 3);
  REQUIRE(mult_total(fr) == 4);
  REQUIRE(fr.points.size() == 2);
  check_points(fr.points, {point_p2(Cx(0.0), Cx(-1.0)), point_p2(Cx(0.0), Cx(1.0))},
               1e-6);
  REQUIRE(fr.multiplicities == std::vector<int>{2, 2});
}

TEST_CASE("product map fiber matches the closed form") {
  Cx a(0.3, 0.1), b(-0.2, 0.4);
  auto f = testmaps::product_p2(a, b);
  Cx u(1.7, -0.6), v(0.9, 1.2);
  FiberResult fr = fiber(f, point_p2(u, v), 11);
  Cx sz = std::sqrt(u - a), sw = std::sqrt(v - b);
  std::vector<ProjPoint> expected = {
      point_p2(sz, sw), point_p2(sz, -sw), point_p2(-sz, sw), point_p2(-sz, -sw)};
  check_points(fr.points, expected, 5e-8);
}

TEST_CASE("perturbed plane map keeps the full fiber count") {
  auto f = testmaps::perturbed_p2(0.2);
  FiberResult fr = fiber(f, point_p2(Cx(0.8, 0.3), Cx(-0.5, 0.9)), 13);
  REQUIRE(mult_total(fr) == 4);
  for (double r : fr.residuals) REQUIRE(r < 5e-8);
}

TEST_CASE("homotopy output is seed-deterministic") {
  auto f = testmaps::perturbed_p2(0.1);
  ProjPoint y = point_p2(Cx(0.4, 0.2), Cx(1.1, -0.7));
  FiberResult a = fiber_homotopy(f, y, 99);
  FiberResult b = fiber_homotopy(f, y, 99);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i)
    for (int c = 0; c < 3; ++c)
      REQUIRE(a.points[i].coords[static_cast<std::size_t>(c)] ==
              b.points[i].coords[static_cast<std::size_t>(c)]);
}

TEST_CASE("degenerate plane map fails the nondegeneracy probe") {
  // [z^2 : w^2 : zw] sends everything onto a conic and is indeterminate at
  // [0:0:1]; generic fibers are empty.
  HomogeneousMap g = make_map(2, 2,
                              {make_poly(2, 2, {{{2, 0, 0}, Cx(1.0)}}),
                               make_poly(2, 2, {{{0, 2, 0}, Cx(1.0)}}),
                               make_poly(2, 2, {{{1, 1, 0}, Cx(1.0)}})});
  REQUIRE_FALSE(nondegenerate_p2(g, 5));
  REQUIRE(nondegenerate_p2(testmaps::squares_p2(), 5));
  REQUIRE(nondegenerate_p2(testmaps::perturbed_p2(0.3), 5));
}

TEST_CASE("local degree distinguishes critical from regular points") {
  auto f = testmaps::power_p1(2);
  REQUIRE(local_degree(f, point_p1(Cx(0.0))) == 2);
  REQUIRE(local_degree(f, infinity_p1()) == 2);
  REQUIRE(local_degree(f, point_p1(Cx(1.0))) == 1);

  auto q = testmaps::quad_p1(Cx(-2.0));
  REQUIRE(local_degree(q, point_p1(Cx(0.0))) == 2);
  REQUIRE(local_degree(q, point_p1(Cx(1.0))) == 1);
}

TEST_CASE("local degree on the plane hits the top stratum") {
  auto f = testmaps::squares_p2();
  REQUIRE(local_degree(f, point_p2(Cx(1.0), Cx(1.0))) == 1);
  REQUIRE(local_degree(f, point_p2(Cx(0.0), Cx(1.0)), 2e-2) == 2);
  REQUIRE(local_degree(f, point_p2(Cx(0.0), Cx(0.0)), 2e-2) == 4);
}

TEST_CASE("pullback tree enumerates the dyadic roots of unity") {
  auto f = testmaps::power_p1(2);
  EmpiricalMeasure mu = pullback_tree(f, point_p1(Cx(1.0)), 3);
  REQUIRE(mu.provenance == MeasureProvenance::tree);
  REQUIRE(mu.atoms.size() == 8);
  REQUIRE(total_mass(mu) == Approx(1.0).margin(1e-12));
  std::vector<ProjPoint> expected;
  for (int j = 0; j < 8; ++j)
    expected.push_back(point_p1(std::polar(1.0, 2.0 * kPi * j / 8.0)));
  check_points(mu.atoms, expected, 1e-9);
  for (double w : mu.weights) REQUIRE(w == Approx(0.125).margin(1e-12));
}

TEST_CASE("pullback tree at depth zero is the unit point mass") {
  auto f = testmaps::quad_p1(Cx(0.25));
  ProjPoint x = point_p1(Cx(0.3, 0.4));
  EmpiricalMeasure mu = pullback_tree(f, x, 0);
  REQUIRE(mu.atoms.size() == 1);
  REQUIRE(mu.weights[0] == Approx(1.0));
  REQUIRE(fs_distance(mu.atoms[0], x) < 1e-12);
}

TEST_CASE("totally critical orbit collapses the tree to one atom") {
  auto f = testmaps::power_p1(2);
  std::vector<TreeAtom> atoms = pullback_atoms(f, point_p1(Cx(0.0)), 2);
  REQUIRE(atoms.size() == 1);
  REQUIRE(atoms[0].count == 4);
  EmpiricalMeasure mu = pullback_tree(f, point_p1(Cx(0.0)), 2);
  REQUIRE(mu.atoms.size() == 1);
  REQUIRE(mu.weights[0] == Approx(1.0));
}

TEST_CASE("plane pullback tree counts match the topological degree") {
  auto f = testmaps::squares_p2();
  EmpiricalMeasure mu1 = pullback_tree(f, point_p2(Cx(1.0), Cx(1.0)), 1);
  REQUIRE(mu1.atoms.size() == 4);
  std::vector<ProjPoint> expected;
  for (double sz : {-1.0, 1.0})
    for (double sw : {-1.0, 1.0}) expected.push_back(point_p2(Cx(sz), Cx(sw)));
  check_points(mu1.atoms, expected, 5e-8);

  EmpiricalMeasure mu2 = pullback_tree(f, point_p2(Cx(1.0), Cx(1.0)), 2);
  REQUIRE(mu2.atoms.size() == 16);
  REQUIRE(total_mass(mu2) == Approx(1.0).margin(1e-12));
}

TEST_CASE("tree budget rejects exponential blowups") {
  auto f = testmaps::power_p1(2);
  REQUIRE_THROWS_AS(pullback_tree(f, point_p1(Cx(1.0)), 3, 7), Error);
  REQUIRE_NOTHROW(pullback_tree(f, point_p1(Cx(1.0)), 3, 8));
  try {
    pullback_tree(f, point_p1(Cx(1.0)), 30);
  } catch (const Error& e) {
    REQUIRE(e.code() == "BudgetExceeded");
  }
}

TEST_CASE("tree output is identical across thread counts") {
  auto f = testmaps::squares_p2();
  set_thread_count(1);
  EmpiricalMeasure a = pullback_tree(f, point_p2(Cx(0.3, 0.2), Cx(1.4)), 2);
  set_thread_count(4);
  EmpiricalMeasure b = pullback_tree(f, point_p2(Cx(0.3, 0.2), Cx(1.4)), 2);
  set_thread_count(1);
  REQUIRE(a.atoms.size() == b.atoms.size());
  for (std::size_t i = 0; i < a.atoms.size(); ++i) {
    REQUIRE(a.weights[i] == b.weights[i]);
    for (int c = 0; c < 3; ++c)
      REQUIRE(a.atoms[i].coords[static_cast<std::size_t>(c)] ==
              b.atoms[i].coords[static_cast<std::size_t>(c)]);
  }
}

TEST_CASE("backward orbit stays on the invariant circle") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> orbit = backward_orbit(f, point_p1(Cx(1.0)), 60, 17);
  REQUIRE(orbit.size() == 61);
  for (const ProjPoint& p : orbit) {
    double m0 = std::abs(p.coords[0]);
    double m1 = std::abs(p.coords[1]);
    REQUIRE(m0 == Approx(m1).margin(1e-9));  // |z| = 1
  }
  std::vector<ProjPoint> again = backward_orbit(f, point_p1(Cx(1.0)), 60, 17);
  for (std::size_t i = 0; i < orbit.size(); ++i)
    for (int c = 0; c < 2; ++c)
      REQUIRE(orbit[i].coords[static_cast<std::size_t>(c)] ==
              again[i].coords[static_cast<std::size_t>(c)]);
}

TEST_CASE("chart transitions compose to the identity") {
  ProjPoint p = point_p1(Cx(0.7, -0.4));
  Eigen::MatrixXcd t01 = chart_transition_jacobian(p, 0, 1);
  Eigen::MatrixXcd t10 = chart_transition_jacobian(p, 1, 0);
  REQUIRE(std::abs((t01 * t10)(0, 0) - Cx(1.0)) < 1e-12);
  // d(1/z)/dz = -1/z^2 in the affine chart
  Cx z(0.7, -0.4);
  REQUIRE(std::abs(t10(0, 0) - (-1.0 / (z * z))) < 1e-12);

  ProjPoint q = point_p2(Cx(0.9, 0.1), Cx(-0.6, 0.5));
  Eigen::MatrixXcd a = chart_transition_jacobian(q, 2, 0);
  Eigen::MatrixXcd b = chart_transition_jacobian(q, 0, 2);
  Eigen::MatrixXcd prod = a * b;
  REQUIRE((prod - Eigen::MatrixXcd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("branch continuation tracks the square root along the circle") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> path;
  int steps = 24;
  for (int j = 0; j <= steps; ++j)
    path.push_back(point_p1(std::polar(1.0, 0.5 * kPi * j / steps)));
  BranchGerm germ{path[0], point_p1(Cx(1.0)), 1};
  std::vector<BranchGerm> lifted = continue_branch(f, 1, path, germ);
  REQUIRE(lifted.size() == path.size());
  for (int j = 0; j <= steps; ++j) {
    Cx want = std::polar(1.0, 0.25 * kPi * j / steps);  // e^{i theta/2}
    REQUIRE(fs_distance(lifted[static_cast<std::size_t>(j)].lift, point_p1(want)) <
            1e-7);
  }
  // The other germ picks the other square-root branch.
  BranchGerm other{path[0], point_p1(Cx(-1.0)), 1};
  std::vector<BranchGerm> neg = continue_branch(f, 1, path, other);
  REQUIRE(fs_distance(neg.back().lift,
                      point_p1(std::polar(1.0, kPi + 0.25 * kPi))) < 1e-7);
}

TEST_CASE("branch continuation at depth two halves the angle twice") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> path;
  int steps = 30;
  for (int j = 0; j <= steps; ++j)
    path.push_back(point_p1(std::polar(1.0, kPi * j / steps)));
  BranchGerm germ{path[0], point_p1(Cx(1.0)), 2};
  std::vector<BranchGerm> lifted = continue_branch(f, 2, path, germ);
  REQUIRE(fs_distance(lifted.back().lift, point_p1(std::polar(1.0, kPi / 4.0))) <
          1e-7);
}

TEST_CASE("constant path leaves the germ in place") {
  auto f = testmaps::quad_p1(Cx(0.1));
  ProjPoint y = point_p1(Cx(1.2));
  FiberResult fr = fiber_p1(f, y);
  BranchGerm germ{y, fr.points[0], 1};
  std::vector<ProjPoint> path(5, y);
  std::vector<BranchGerm> lifted = continue_branch(f, 1, path, germ);
  for (const BranchGerm& g : lifted)
    REQUIRE(fs_distance(g.lift, fr.points[0]) < 1e-10);
}

TEST_CASE("path through a critical value reports the collision") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> path;
  for (int j = 0; j <= 20; ++j) path.push_back(point_p1(Cx(1.0 - 0.1 * j)));
  BranchGerm germ{path[0], point_p1(Cx(1.0)), 1};
  try {
    continue_branch(f, 1, path, germ);
    FAIL("expected a critical collision");
  } catch (const Error& e) {
    REQUIRE(e.code() == "CriticalCollision");
  }
}

TEST_CASE("oversized path steps are rejected up front") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> path = {point_p1(Cx(1.0)), point_p1(Cx(-1.0))};
  BranchGerm germ{path[0], point_p1(Cx(1.0)), 1};
  try {
    continue_branch(f, 1, path, germ);
    FAIL("expected a step size error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "StepTooLarge");
  }
}

TEST_CASE("critical locus of the squaring maps") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> c1 = sample_critical_locus(f, 8, 1);
  REQUIRE(c1.size() == 2);  // 0 and infinity, exactly

  auto g = testmaps::squares_p2();
  HomPoly det = critical_determinant(g);
  REQUIRE(det.degree == 3);
  std::array<Cx, 3> reg{Cx(1.0), Cx(1.0), Cx(1.0)};
  REQUIRE(std::abs(eval_poly(det, reg)) == Approx(8.0));
  std::array<Cx, 3> crit{Cx(0.0), Cx(1.0), Cx(1.0)};
  REQUIRE(std::abs(eval_poly(det, crit)) < 1e-14);

  std::vector<ProjPoint> c2 = sample_critical_locus(g, 30, 2);
  REQUIRE(c2.size() >= 30);
  for (const ProjPoint& p : c2) {
    double prod = std::abs(p.coords[0] * p.coords[1] * p.coords[2]);
    REQUIRE(prod < 1e-8);  // on {zwt = 0}
  }
}

TEST_CASE("postcritical samples of the squaring map are its fixed critical orbits") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> v = sample_postcritical(f, 3, 8, 9);
  REQUIRE(v.size() == 6);  // two critical points, three images each
  for (const ProjPoint& p : v) {
    bool is0 = fs_distance(p, point_p1(Cx(0.0))) < 1e-12;
    bool isInf = fs_distance(p, infinity_p1()) < 1e-12;
    REQUIRE((is0 || isInf));
  }
}

TEST_CASE("all inverse branches of the squaring map lift a safe disk") {
  auto f = testmaps::power_p1(2);
  ParamDisk disk = chordal_disk_p1(point_p1(Cx(1.0)), 0.25);
  BranchEnumeration be = inverse_branches_on_disk(f, 3, disk, 2);
  REQUIRE(be.attempted == 8);
  REQUIRE(be.succeeded == 8);
  REQUIRE(be.lost_critical == 0);
  REQUIRE(be.lost_other == 0);
  REQUIRE(be.branches.size() == 8);
  for (const BranchLift& b : be.branches) {
    REQUIRE(b.diameter > 1e-4);
    REQUIRE(b.diameter < 0.25);  // eighth-root branches contract
    REQUIRE(b.grid.size() == be.ring_radii.size() * static_cast<std::size_t>(be.angular_count));
    for (const ProjPoint& p : b.grid) {
      ProjPoint img = iterate_eval(f, 3, p);
      REQUIRE(fs_distance(img, disk_point(disk, Cx(0.0))) < 0.3);
    }
  }
  // Distinct branches have distinct center lifts.
  for (std::size_t i = 0; i < be.branches.size(); ++i)
    for (std::size_t j = i + 1; j < be.branches.size(); ++j)
      REQUIRE(fs_distance(be.branches[i].center_lift, be.branches[j].center_lift) >
              1e-3);
}

TEST_CASE("depth zero branch enumeration is the identity") {
  auto f = testmaps::quad_p1(Cx(0.2));
  ParamDisk disk = chordal_disk_p1(point_p1(Cx(0.9)), 0.2);
  BranchEnumeration be = inverse_branches_on_disk(f, 0, disk, 0);
  REQUIRE(be.attempted == 1);
  REQUIRE(be.succeeded == 1);
  const BranchLift& b = be.branches[0];
  std::size_t idx = 0;
  for (std::size_t i = 0; i < be.ring_radii.size(); ++i)
    for (int j = 0; j < be.angular_count; ++j) {
      Cx zeta = std::polar(be.ring_radii[i], 2.0 * kPi * j / be.angular_count);
      REQUIRE(fs_distance(b.grid[idx++], disk_point(disk, zeta)) < 1e-7);
    }
}

TEST_CASE("disks touching the postcritical set are refused") {
  auto f = testmaps::power_p1(2);
  ParamDisk disk = chordal_disk_p1(point_p1(Cx(0.0)), 0.2);
  try {
    inverse_branches_on_disk(f, 2, disk, 1);
    FAIL("expected a postcritical proximity error");
  } catch (const Error& e) {
    REQUIRE(e.code() == "DiskMeetsPostcritical");
  }
}

TEST_CASE("plane branches over a safe disk all succeed") {
  auto f = testmaps::squares_p2();
  // A chordal disk inside the line {w = z}, away from the coordinate axes.
  std::array<Cx, 3> a{Cx(1.0) / std::sqrt(3.0), Cx(1.0) / std::sqrt(3.0),
                      Cx(1.0) / std::sqrt(3.0)};
  std::array<Cx, 3> b{Cx(1.0) / std::sqrt(6.0), Cx(1.0) / std::sqrt(6.0),
                      Cx(-2.0) / std::sqrt(6.0)};
  ParamDisk disk = chordal_disk_on_line(a, b, 0.15);
  BranchEnumeration be = inverse_branches_on_disk(f, 1, disk, 1, 2, 8);
  REQUIRE(be.attempted == 4);
  REQUIRE(be.succeeded == 4);
  for (const BranchLift& bl : be.branches)
    for (const ProjPoint& p : bl.grid)
      REQUIRE(fs_distance(evaluate(f, p), disk_point(disk, Cx(0.0))) < 0.5);
}
