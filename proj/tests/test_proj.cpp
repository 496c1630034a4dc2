#include <catch2/catch_amalgamated.hpp>

#include "equidyn/proj.hpp"

using namespace equidyn;

TEST_CASE("normalize produces the canonical representative") {
  ProjPoint a = normalize(Cx(2.0), Cx(0.0));
  REQUIRE(a.coords[0] == Cx(1.0));
  REQUIRE(a.coords[1] == Cx(0.0));

  ProjPoint b = normalize(Cx(0.0), Cx(0.0, 3.0));
  REQUIRE(b.coords[0] == Cx(0.0));
  REQUIRE(b.coords[1] == Cx(1.0));

  ProjPoint c = normalize(Cx(1.0, 1.0), Cx(1.0, -1.0));
  REQUIRE(std::abs(std::abs(c.coords[0]) - 1.0) < 1e-15);
  REQUIRE(std::abs(std::abs(c.coords[1]) - 1.0) < 1e-15);
  // pivot real and nonnegative
  int p = pivot_index(c);
  REQUIRE(c.coords[static_cast<std::size_t>(p)].imag() == 0.0);
  REQUIRE(c.coords[static_cast<std::size_t>(p)].real() >= 0.0);
  // idempotent
  ProjPoint c2 = normalize(c.coords, 1);
  REQUIRE(fs_distance(c, c2) < 1e-15);
}

TEST_CASE("normalize rejects the zero vector") {
  REQUIRE_THROWS_AS(normalize(Cx(0.0), Cx(0.0)), Error);
  try {
    normalize(Cx(0.0), Cx(0.0));
  } catch (const Error& e) {
    REQUIRE(e.code() == "ZeroVector");
  }
}

TEST_CASE("chordal distance endpoints") {
  ProjPoint zero = point_p1(Cx(0.0));
  ProjPoint inf = infinity_p1();
  REQUIRE(fs_distance(zero, inf) == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(fs_distance(zero, zero) == 0.0);
  ProjPoint u = normalize(Cx(1.0), Cx(1.0));
  ProjPoint v = normalize(Cx(1.0), Cx(-1.0));
  REQUIRE(fs_distance(u, v) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("chordal distance is scale invariant and symmetric") {
  Rng rng = make_rng(7);
  for (int it = 0; it < 200; ++it) {
    int k = (it % 2) + 1;
    ProjPoint x = sample_fs_point(k, rng);
    ProjPoint y = sample_fs_point(k, rng);
    REQUIRE(fs_distance(x, y) == Catch::Approx(fs_distance(y, x)).margin(1e-15));
    Cx s = Cx(3.5, -1.25) * unit_phase(rng);
    std::array<Cx, 3> raw = x.coords;
    for (auto& c : raw) c *= s;
    ProjPoint xs = normalize(raw, k);
    REQUIRE(fs_distance(xs, y) == Catch::Approx(fs_distance(x, y)).margin(1e-12));
  }
}

TEST_CASE("chordal distance satisfies the triangle inequality") {
  Rng rng = make_rng(11);
  for (int it = 0; it < 500; ++it) {
    int k = (it % 2) + 1;
    ProjPoint x = sample_fs_point(k, rng);
    ProjPoint y = sample_fs_point(k, rng);
    ProjPoint z = sample_fs_point(k, rng);
    REQUIRE(fs_distance(x, z) <= fs_distance(x, y) + fs_distance(y, z) + 1e-12);
  }
}

TEST_CASE("chart round trip") {
  Rng rng = make_rng(13);
  for (int it = 0; it < 100; ++it) {
    int k = (it % 2) + 1;
    ProjPoint x = sample_fs_point(k, rng);
    for (int c = 0; c <= k; ++c) {
      if (std::abs(x.coords[static_cast<std::size_t>(c)]) < 1e-6) continue;
      ProjPoint back = from_chart(to_chart(x, c));
      // Chordal distance of nearly equal points bottoms out near sqrt(eps).
      REQUIRE(fs_distance(x, back) < 1e-7);
    }
  }
  REQUIRE_THROWS_AS(to_chart(point_p1(Cx(0.0)), 0), Error);
}

TEST_CASE("metric matrix values") {
  // k=1: H(z) = (1/pi)(1+|z|^2)^{-2}; 1/pi = 0.3183098861837907
  ChartVector at0{1, 0, {Cx(0.0), Cx(0.0)}};
  Eigen::MatrixXcd h0 = fs_form(at0);
  REQUIRE(h0.rows() == 1);
  REQUIRE(h0(0, 0).real() == Catch::Approx(0.3183098861837907).epsilon(1e-14));

  ChartVector at1{1, 0, {Cx(1.0), Cx(0.0)}};
  REQUIRE(fs_form(at1)(0, 0).real() ==
          Catch::Approx(0.3183098861837907 / 4.0).epsilon(1e-14));

  // k=2 origin: (1/pi) * I, positive definite
  ChartVector o2{2, 2, {Cx(0.0), Cx(0.0)}};
  Eigen::MatrixXcd h2 = fs_form(o2);
  REQUIRE(h2.rows() == 2);
  REQUIRE(h2(0, 0).real() == Catch::Approx(0.3183098861837907).epsilon(1e-14));
  REQUIRE(h2(1, 1).real() == Catch::Approx(0.3183098861837907).epsilon(1e-14));
  REQUIRE(std::abs(h2(0, 1)) < 1e-16);

  Rng rng = make_rng(17);
  for (int it = 0; it < 50; ++it) {
    int k = (it % 2) + 1;
    ProjPoint x = sample_fs_point(k, rng);
    Eigen::MatrixXcd h = fs_form(to_chart(x));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
    REQUIRE(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("volume sampling is deterministic and matches chart symmetry") {
  auto a = sample_fs_volume(1, 2000, 99);
  auto b = sample_fs_volume(1, 2000, 99);
  REQUIRE(a.size() == 2000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].coords == b[i].coords);
  }

  // E[|z|^2/(1+|z|^2)] = 1/2 by the z -> 1/z symmetry of the volume form.
  auto pts = sample_fs_volume(1, 100000, 5);
  KahanSum s;
  for (const auto& p : pts) {
    double n0 = std::norm(p.coords[0]);
    double n1 = std::norm(p.coords[1]);
    s.add(n1 / (n0 + n1));
  }
  REQUIRE(s.value() / static_cast<double>(pts.size()) ==
          Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("ball of chordal radius r has volume r^2 on the line") {
  // Exact for the normalized metric; Monte Carlo within 3 sigma.
  auto pts = sample_fs_volume(1, 200000, 21);
  ProjPoint center = point_p1(Cx(0.3, -0.2));
  for (double r : {0.2, 0.5, 0.8}) {
    std::size_t inside = 0;
    for (const auto& p : pts) {
      if (fs_distance(p, center) <= r) ++inside;
    }
    double mass = static_cast<double>(inside) / static_cast<double>(pts.size());
    double sigma = std::sqrt(r * r * (1.0 - r * r) / static_cast<double>(pts.size()));
    REQUIRE(std::abs(mass - r * r) < 3.0 * sigma + 1e-12);
  }
}

TEST_CASE("volume density integrates to one over a chart") {
  // For k=1 the chart covers everything but a point; integrate the density
  // over a large disk by polar quadrature: mass = R^2/(1+R^2) at radius R.
  double total = 0.0;
  int nr = 20000, nt = 64;
  double rmax = 200.0;
  for (int i = 0; i < nr; ++i) {
    double r = (i + 0.5) * rmax / nr;
    for (int j = 0; j < nt; ++j) {
      double t = 2.0 * kPi * j / nt;
      ChartVector v{1, 0, {Cx(r * std::cos(t), r * std::sin(t)), Cx(0.0)}};
      total += fs_volume_density(v) * r * (rmax / nr) * (2.0 * kPi / nt);
    }
  }
  double expect = rmax * rmax / (1.0 + rmax * rmax);
  REQUIRE(total == Catch::Approx(expect).epsilon(1e-4));
}

TEST_CASE("canonical order is a strict weak order separating distinct points") {
  Rng rng = make_rng(31);
  for (int it = 0; it < 100; ++it) {
    ProjPoint x = sample_fs_point(2, rng);
    ProjPoint y = sample_fs_point(2, rng);
    REQUIRE(!canonical_less(x, x));
    if (fs_distance(x, y) > 1e-9) {
      REQUIRE(canonical_less(x, y) != canonical_less(y, x));
    }
  }
}
