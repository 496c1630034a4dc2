#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "equidyn/entropy.hpp"
#include "test_maps.hpp"

using namespace equidyn;

namespace {

std::vector<ProjPoint> circle_pool(int m) { return testmaps::uniform_circle(m).atoms; }

std::vector<ProjPoint> torus_pool(int m, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<ProjPoint> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double a = 2.0 * kPi * uniform01(rng);
    double b = 2.0 * kPi * uniform01(rng);
    out.push_back(normalize(std::polar(1.0, a), std::polar(1.0, b), Cx(1.0)));
  }
  return out;
}

}  // namespace

TEST_CASE("dynamical distance follows angle doubling") {
  auto f = testmaps::power_p1(2);
  ProjPoint x = point_p1(Cx(1.0));
  double theta = 1e-4;
  ProjPoint y = point_p1(std::polar(1.0, theta));

  REQUIRE(dyn_distance(f, x, y, 1) == fs_distance(x, y));

  // On |z|=1 the angle gap doubles each step, hence so does d_n while small.
  for (int n = 1; n <= 6; ++n) {
    double dn = dyn_distance(f, x, y, n);
    double dn1 = dyn_distance(f, x, y, n + 1);
    REQUIRE(dn1 / dn == Catch::Approx(2.0).epsilon(0.01));
  }

  Rng rng = make_rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    ProjPoint a = sample_fs_point(1, rng);
    ProjPoint b = sample_fs_point(1, rng);
    for (int n = 1; n <= 5; ++n)
      REQUIRE(dyn_distance(f, a, b, n + 1) >= dyn_distance(f, a, b, n));
  }
}

TEST_CASE("greedy packing is separated and maximal") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> pool = circle_pool(2000);
  SeparatedSetResult r = separated_set(f, 6, 0.2, pool);

  for (std::size_t i = 0; i < r.points.size(); ++i)
    for (std::size_t j = i + 1; j < r.points.size(); ++j)
      REQUIRE(dyn_distance(f, r.points[i], r.points[j], 6) >= 0.2);

  // Maximality over the pool: whatever was rejected has an accepted witness.
  for (const ProjPoint& c : pool) {
    bool near = false;
    for (const ProjPoint& a : r.points) {
      if (dyn_distance(f, c, a, 6) < 0.2 || points_equal(c, a, 1e-12)) {
        near = true;
        break;
      }
    }
    REQUIRE(near);
  }

  REQUIRE(separated_set(f, 4, 1.5, pool).cardinality == 1);
  REQUIRE(separated_set(f, 4, 1e-9, pool).cardinality == pool.size());
}

TEST_CASE("separated cardinality tracks the packing prediction") {
  auto f = testmaps::power_p1(2);
  std::vector<ProjPoint> pool = circle_pool(10000);
  SeparatedSetResult r = separated_set(f, 8, 0.2, pool);
  double predicted = kPi * std::pow(2.0, 7) / std::asin(0.2);
  REQUIRE(static_cast<double>(r.cardinality) >= 0.5 * predicted);
  REQUIRE(static_cast<double>(r.cardinality) <= 2.0 * predicted);

  // Monotone in epsilon, and no smaller on a candidate superset.
  std::vector<ProjPoint> small = circle_pool(4000);
  std::size_t wide = separated_set(f, 6, 0.3, small).cardinality;
  std::size_t mid = separated_set(f, 6, 0.2, small).cardinality;
  std::size_t tight = separated_set(f, 6, 0.12, small).cardinality;
  REQUIRE(wide <= mid);
  REQUIRE(mid <= tight);

  std::vector<ProjPoint> half;
  for (std::size_t i = 0; i < small.size(); i += 2) half.push_back(small[i]);
  REQUIRE(separated_set(f, 6, 0.2, half).cardinality <= mid);
}

TEST_CASE("cardinality growth rate gives log d") {
  std::vector<ProjPoint> pool = circle_pool(10000);
  double h2 = entropy_estimate(testmaps::power_p1(2), {4, 5, 6, 7, 8, 9, 10},
                               {0.2, 0.35}, pool);
  REQUIRE(h2 == Catch::Approx(std::log(2.0)).epsilon(0.15));

  double h3 = entropy_estimate(testmaps::power_p1(3), {3, 4, 5, 6}, {0.25},
                               circle_pool(6000));
  REQUIRE(h3 == Catch::Approx(std::log(3.0)).epsilon(0.15));
}

TEST_CASE("torus candidates double the growth rate") {
  double h = entropy_estimate(testmaps::squares_p2(), {2, 3, 4, 5}, {0.5},
                              torus_pool(10000, 99));
  REQUIRE(h == Catch::Approx(2.0 * std::log(2.0)).epsilon(0.20));
}

TEST_CASE("small pools stop the growth estimate") {
  try {
    entropy_estimate(testmaps::power_p1(2), {4, 5, 6, 7}, {0.05}, circle_pool(40));
    FAIL("saturated pool must be reported");
  } catch (const Error& e) {
    REQUIRE(e.code() == "InsufficientGrowth");
  }
}

TEST_CASE("brin katok plateaus at log d on the circle") {
  auto f = testmaps::power_p1(2);
  int m = 1 << 16;
  EmpiricalMeasure mu = testmaps::uniform_circle(m);
  ProjPoint x = mu.atoms[777];

  // Under angle doubling the dynamical ball is exactly the arc of half-width
  // 2 asin(eps) / 2^{n-1}, so an arc count gives an independent oracle.
  double xang = std::arg(x[0] / x[1]);
  for (int n : {4, 6, 9}) {
    double half = 2.0 * std::asin(0.1) / std::pow(2.0, n - 1);
    int count = 0;
    for (int j = 0; j < m; ++j) {
      double gap = std::remainder(2.0 * kPi * j / m - xang, 2.0 * kPi);
      if (std::abs(gap) < half) ++count;
    }
    double oracle = -std::log(static_cast<double>(count) / m) / n;
    REQUIRE(brin_katok(f, mu, x, 0.1, {n}).front() ==
            Catch::Approx(oracle).margin(1e-12));
  }

  // The finite-horizon value is log 2 + log(pi / (2 asin eps)) / n; near
  // eps = 0.7 the bias term dies and the plateau sits at the entropy.
  std::vector<double> vals = brin_katok(f, mu, x, 0.7, {6, 7, 8, 9, 10});
  REQUIRE(vals.size() == 5);
  for (double v : vals) {
    REQUIRE(v >= 0.85 * std::log(2.0));
    REQUIRE(v <= 1.15 * std::log(2.0));
  }

  // Radius 1 captures everything except the antipode: mass ~ 1, entropy ~ 0.
  REQUIRE(brin_katok(f, mu, x, 1.0, {1}).front() < 1e-3);

  EmpiricalMeasure fixed = delta_measure(point_p1(Cx(1.0)));
  for (double v : brin_katok(f, fixed, point_p1(Cx(1.0)), 0.2, {1, 2, 3}))
    REQUIRE(v == 0.0);

  try {
    brin_katok(f, fixed, point_p1(Cx(0.0, 1.0)), 0.1, {1, 2});
    FAIL("ball around a far-away point must be empty");
  } catch (const Error& e) {
    REQUIRE(e.code() == "EmptyBall");
  }
}

TEST_CASE("graph volume matches the cohomological count") {
  auto f = testmaps::power_p1(2);
  Rng rng = make_rng(2024);

  VolumeEstimate one = graph_volume(f, 1, 500, rng);
  REQUIRE(one.value == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(one.std_error == Catch::Approx(0.0).margin(1e-12));

  VolumeEstimate v5 = graph_volume(f, 5, 100000, rng);
  REQUIRE(v5.value == Catch::Approx(31.0).epsilon(0.02));
  REQUIRE(std::abs(v5.value - 31.0) <= 3.0 * v5.std_error);

  auto g = testmaps::squares_p2();
  VolumeEstimate p1 = graph_volume(g, 1, 500, rng);
  REQUIRE(p1.value == Catch::Approx(1.0).margin(1e-12));
  // The k=2 integrand has heavy tails near the critical orbit, so the sample
  // std error underestimates itself; keep a small absolute slack on top.
  VolumeEstimate v3 = graph_volume(g, 3, 80000, rng);
  REQUIRE(v3.value == Catch::Approx(49.0).epsilon(0.05));
  REQUIRE(std::abs(v3.value - 49.0) <= 3.0 * v3.std_error + 0.03 * 49.0);
}

TEST_CASE("graph volume agrees with the closed form on every test map") {
  Rng rng = make_rng(555);
  auto check = [&](const HomogeneousMap& f, int n, std::size_t samples) {
    double q = (std::pow(static_cast<double>(f.d), n) - 1.0) /
               (static_cast<double>(f.d) - 1.0);
    double target = std::pow(q, f.k);
    VolumeEstimate v = graph_volume(f, n, samples, rng);
    REQUIRE(std::abs(v.value - target) <= 3.0 * v.std_error + 0.02 * target);
  };
  check(testmaps::power_p1(2), 4, 20000);
  check(testmaps::quad_p1(Cx(-2.0)), 4, 20000);
  check(testmaps::quad_p1(Cx(-1.0)), 4, 20000);
  check(testmaps::power_p1(3), 4, 20000);
  check(testmaps::rational_p1(), 3, 20000);
  check(testmaps::squares_p2(), 3, 8000);
  check(testmaps::product_p2(Cx(0.3, 0.1), Cx(-0.25, 0.05)), 3, 8000);
  check(testmaps::perturbed_p2(0.05), 3, 8000);
}

TEST_CASE("diagonal volume terms reproduce mapping degrees") {
  Rng rng = make_rng(77);
  VolumeEstimate t3 = graph_volume_term(testmaps::power_p1(2), 3, 40000, rng);
  REQUIRE(std::abs(t3.value - 8.0) <= 3.0 * t3.std_error + 0.16);

  VolumeEstimate s1 = graph_volume_term(testmaps::squares_p2(), 1, 20000, rng);
  REQUIRE(std::abs(s1.value - 4.0) <= 3.0 * s1.std_error + 0.12);
}

TEST_CASE("mixed discriminant polarizes the determinant") {
  Rng rng = make_rng(5150);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix2cd g, h;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        g(i, j) = gaussian_cx(rng);
        h(i, j) = gaussian_cx(rng);
      }
    Eigen::Matrix2cd a = g + g.adjoint().eval();
    Eigen::Matrix2cd b = h + h.adjoint().eval();
    REQUIRE(mixed_discriminant(a, a) == Catch::Approx(a.determinant().real()).margin(1e-12));
    REQUIRE(mixed_discriminant(a, b) == Catch::Approx(mixed_discriminant(b, a)).margin(1e-12));
    // Polarization identity: det(A+B) = D(A,A) + 2 D(A,B) + D(B,B).
    double lhs = (a + b).determinant().real();
    double rhs = mixed_discriminant(a, a) + 2.0 * mixed_discriminant(a, b) +
                 mixed_discriminant(b, b);
    REQUIRE(lhs == Catch::Approx(rhs).margin(1e-10));
  }
}

TEST_CASE("restricted volume follows the line degrees") {
  auto f = testmaps::squares_p2();
  std::vector<VarietySample> nodes = line_quadrature({Cx(1.0), Cx(0.0), Cx(0.0)}, 3000, 1234);
  std::vector<double> w(nodes.size(), 1.0 / static_cast<double>(nodes.size()));

  // i = 0 term only: the integral of omega over a line is its degree, node by
  // node the density is exactly one.
  VolumeEstimate unit = restricted_graph_volume(f, 1, nodes, w);
  REQUIRE(unit.value == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(unit.std_error == Catch::Approx(0.0).margin(1e-9));

  VolumeEstimate v4 = restricted_graph_volume(f, 4, nodes, w);
  REQUIRE(v4.value == Catch::Approx(15.0).epsilon(0.05));

  std::vector<VolumeEstimate> terms = restricted_volume_terms(f, 5, nodes, w);
  std::vector<double> xs, ys;
  for (const VolumeEstimate& t : terms) {
    xs.push_back(static_cast<double>(t.n));
    ys.push_back(std::log(t.value));
  }
  double term_slope = fit_slope(xs, ys).slope;
  REQUIRE(term_slope == Catch::Approx(std::log(2.0)).epsilon(0.10));

  // Growth exponent of the sums: (k-1) log d, strictly below k log d.  The
  // sums are 2^n - 1, not a pure power, so fit over a window where the closed
  // form's own finite-n slope has already come within range of log 2.
  xs.clear();
  ys.clear();
  std::vector<double> exact;
  for (int n = 3; n <= 7; ++n) {
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(restricted_graph_volume(f, n, nodes, w).value));
    exact.push_back(std::log(std::pow(2.0, n) - 1.0));
  }
  double sum_slope = fit_slope(xs, ys).slope;
  REQUIRE(sum_slope == Catch::Approx(fit_slope(xs, exact).slope).epsilon(0.03));
  REQUIRE(sum_slope == Catch::Approx(std::log(2.0)).epsilon(0.10));
  REQUIRE(sum_slope < 2.0 * std::log(2.0) - 0.3);

  // A generic line still has degree one.
  std::vector<VarietySample> generic =
      line_quadrature({Cx(0.3, 0.1), Cx(-1.1, 0.2), Cx(0.7, -0.2)}, 2000, 4321);
  std::vector<double> wg(generic.size(), 1.0 / static_cast<double>(generic.size()));
  REQUIRE(restricted_graph_volume(f, 1, generic, wg).value == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("ball mass transports with constant jacobian") {
  auto f = testmaps::power_p1(2);
  EmpiricalMeasure mu = testmaps::uniform_circle(1 << 16);

  Rng rng = make_rng(404);
  double dev = jacobian_constant_check(f, mu, 50, rng);
  REQUIRE(dev < 0.15);

  // A fixed-point mass keeps its full weight while d^{-k} says half: flagged.
  EmpiricalMeasure fixed = delta_measure(point_p1(Cx(1.0)));
  Rng rng2 = make_rng(405);
  double skew = jacobian_constant_check(f, fixed, 5, rng2);
  REQUIRE(skew > 0.3);

  Rng rng3 = make_rng(406);
  try {
    jacobian_constant_check(f, mu, 10, rng3, 0.05, 0.9);
    FAIL("mass floor excludes every patch");
  } catch (const Error& e) {
    REQUIRE(e.code() == "NoValidPatch");
  }
}

TEST_CASE("word counting is exact") {
  REQUIRE(sigma_count(4, 1, 1.0) == 1);
  REQUIRE(sigma_count(4, 5, 1.0) == 1);
  REQUIRE(sigma_count(9, 17, 1.0) == 1);
  REQUIRE(sigma_count(4, 2, 0.5) == 7);

  // sigma above 1/d^k forces frequency-biased words: the share of the full
  // shift shrinks with the word length.  Consecutive lengths can tick up
  // whenever ceil(n sigma) stays flat while n grows, so compare along lengths
  // where n sigma is integral and the threshold moves in lockstep.
  BigInt prev = sigma_count(4, 10, 0.3);
  const BigInt block = boost::multiprecision::pow(BigInt(4), 10);
  for (int n = 20; n <= 200; n += 10) {
    BigInt cur = sigma_count(4, n, 0.3);
    REQUIRE(cur < block * prev);
    prev = cur;
  }
  // The flat-threshold sawtooth, pinned: ceil(3 * 0.3) is still one.
  REQUIRE(sigma_count(4, 3, 0.3) > 4 * sigma_count(4, 2, 0.3));

  double hs = -0.3 * std::log(0.3) - 0.7 * std::log(0.7);
  double rho = (hs + 0.7 * std::log(3.0)) / std::log(4.0);
  REQUIRE(rho < 1.0);
  double c60 = sigma_count(4, 60, 0.3).convert_to<double>();
  REQUIRE(std::log(c60) / (60.0 * std::log(4.0)) <= rho);

  // The per-letter rate log4(count)/n climbs toward rho from below (the
  // binomial prefactor decays subexponentially) but never reaches one.
  double prev_rate = 0.0;
  for (int n : {20, 40, 60}) {
    double rate = std::log(sigma_count(4, n, 0.3).convert_to<double>()) /
                  (static_cast<double>(n) * std::log(4.0));
    REQUIRE(rate > prev_rate);
    REQUIRE(rate <= rho);
    prev_rate = rate;
  }
  REQUIRE(prev_rate == Catch::Approx(0.982053).margin(5e-6));

  try {
    sigma_count(4, 10, 0.25);
    FAIL("sigma at 1/d^k is out of range");
  } catch (const Error& e) {
    REQUIRE(e.code() == "SchemaError");
  }
}
