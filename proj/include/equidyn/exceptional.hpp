#pragma once

#include <algorithm>
#include <limits>
#include <string>
#include <vector>

#include "equidyn/fiber.hpp"

namespace equidyn {

// ---------------------------------------------------------------------------
// Degree strata A_p = {deg_x f >= d^p}, degrees along algebraic sets, and
// detection of totally invariant components.  Exact on P^1, where all fixed
// points of f and f^2 can be enumerated; candidate-based on P^2, where only
// linear sets and points are tested and the report carries the candidates
// actually tried instead of a completeness claim.
// ---------------------------------------------------------------------------

inline constexpr double kInvarianceTol = 1e-6;

enum class CandidateKind { point, hyperplane, coordinate_subspace };

struct CandidateSet {
  CandidateKind kind = CandidateKind::point;
  int k = 1;
  ProjPoint point;                // kind == point
  std::array<Cx, 3> form{};       // kind == hyperplane: sum form[i] Z_i = 0
  std::vector<int> zero_indices;  // kind == coordinate_subspace: {Z_i = 0}
  std::vector<ProjPoint> samples;
};

inline int candidate_codim(const CandidateSet& a) {
  switch (a.kind) {
    case CandidateKind::point:
      return a.k;
    case CandidateKind::hyperplane:
      return 1;
    case CandidateKind::coordinate_subspace:
      return static_cast<int>(a.zero_indices.size());
  }
  return a.k;
}

// Chordal distance from x to the candidate set.
inline double candidate_residual(const CandidateSet& a, const ProjPoint& x) {
  require(x.k == a.k, "DimensionMismatch", "point and candidate dimension differ");
  switch (a.kind) {
    case CandidateKind::point:
      return fs_distance(a.point, x);
    case CandidateKind::hyperplane: {
      Cx s(0.0);
      double fn = 0.0;
      for (int i = 0; i < x.dim(); ++i) {
        s += a.form[static_cast<std::size_t>(i)] * x[i];
        fn += std::norm(a.form[static_cast<std::size_t>(i)]);
      }
      return std::abs(s) / std::sqrt(fn * norm_squared(x));
    }
    case CandidateKind::coordinate_subspace: {
      double s = 0.0;
      for (int i : a.zero_indices) s += std::norm(x[i]);
      return std::sqrt(s / norm_squared(x));
    }
  }
  return 1.0;
}

inline bool on_candidate(const CandidateSet& a, const ProjPoint& x,
                         double tol = kInvarianceTol) {
  return candidate_residual(a, x) <= tol;
}

inline CandidateSet point_candidate(const ProjPoint& x) {
  CandidateSet a;
  a.kind = CandidateKind::point;
  a.k = x.k;
  a.point = x;
  a.samples = {x};
  return a;
}

inline CandidateSet hyperplane_candidate(int k, const std::array<Cx, 3>& form) {
  double fn = 0.0;
  for (int i = 0; i <= k; ++i) fn += std::norm(form[static_cast<std::size_t>(i)]);
  require(fn > 0.0, "SchemaError", "hyperplane form must be nonzero");
  CandidateSet a;
  a.kind = CandidateKind::hyperplane;
  a.k = k;
  a.form = form;
  return a;
}

inline CandidateSet coordinate_candidate(int k, std::vector<int> zero_indices) {
  std::sort(zero_indices.begin(), zero_indices.end());
  require(!zero_indices.empty() &&
              static_cast<int>(zero_indices.size()) <= k &&
              zero_indices.front() >= 0 && zero_indices.back() <= k &&
              std::adjacent_find(zero_indices.begin(), zero_indices.end()) ==
                  zero_indices.end(),
          "SchemaError", "invalid coordinate index set");
  CandidateSet a;
  a.kind = CandidateKind::coordinate_subspace;
  a.k = k;
  a.zero_indices = std::move(zero_indices);
  return a;
}

// Uniform samples on the candidate's parameter space.  Zero-dimensional sets
// yield their single point regardless of count.
inline std::vector<ProjPoint> sample_candidate(const CandidateSet& a, int count,
                                               Rng& rng) {
  std::vector<ProjPoint> out;
  switch (a.kind) {
    case CandidateKind::point:
      out.push_back(a.point);
      return out;
    case CandidateKind::coordinate_subspace: {
      std::vector<int> free;
      for (int i = 0; i <= a.k; ++i)
        if (std::find(a.zero_indices.begin(), a.zero_indices.end(), i) ==
            a.zero_indices.end())
          free.push_back(i);
      if (free.size() == 1) {
        std::array<Cx, 3> c{};
        c[static_cast<std::size_t>(free[0])] = Cx(1.0);
        out.push_back(normalize(c, a.k));
        return out;
      }
      for (int s = 0; s < count; ++s) {
        std::array<Cx, 3> c{};
        for (int i : free) c[static_cast<std::size_t>(i)] = gaussian_cx(rng);
        out.push_back(normalize(c, a.k));
      }
      return out;
    }
    case CandidateKind::hyperplane: {
      if (a.k == 1) {
        out.push_back(normalize(-a.form[1], a.form[0]));
        return out;
      }
      // columns 1,2 of Q span the solution set of sum form[i] Z_i = 0
      Eigen::MatrixXcd c(3, 1);
      for (int i = 0; i < 3; ++i)
        c(i, 0) = std::conj(a.form[static_cast<std::size_t>(i)]);
      Eigen::HouseholderQR<Eigen::MatrixXcd> qr(c);
      Eigen::MatrixXcd q = qr.householderQ();
      for (int s = 0; s < count; ++s) {
        Eigen::Vector3cd v = gaussian_cx(rng) * q.col(1) + gaussian_cx(rng) * q.col(2);
        out.push_back(normalize(v(0), v(1), v(2)));
      }
      return out;
    }
  }
  return out;
}

inline bool candidate_positive_dim(const CandidateSet& a) {
  return candidate_codim(a) < a.k;
}

// deg_A f = min over generic samples of the local degree; the value can never
// exceed d^codim(A), so a larger result signals a numerical bug.
inline int degree_along_set(const HomogeneousMap& f, const CandidateSet& a,
                            double probe_radius = 2e-2) {
  require(a.k == f.k, "DimensionMismatch", "candidate lives in the wrong space");
  require(static_cast<int>(a.samples.size()) >=
              (candidate_positive_dim(a) ? 20 : 1),
          "InsufficientSamples", "degree along a set needs generic samples");
  for (const ProjPoint& s : a.samples)
    require(candidate_residual(a, s) <= 1e-10, "SchemaError",
            "candidate sample violates the defining equation");
  std::vector<ProjPoint> distinct;
  for (const ProjPoint& s : a.samples) {
    bool dup = false;
    for (const ProjPoint& t : distinct) dup = dup || points_equal(s, t);
    if (!dup) distinct.push_back(s);
  }
  // The probe geometry can be ill-posed at an unlucky sample (another fiber
  // point right at the probe boundary).  The minimum over generic samples
  // tolerates dropping such samples; a majority of failures, or a failure at
  // a zero-dimensional candidate, still propagates.
  int best = std::numeric_limits<int>::max();
  std::size_t clean = 0;
  std::exception_ptr first_bad;
  for (const ProjPoint& s : distinct) {
    try {
      best = std::min(best, local_degree(f, s, probe_radius));
      ++clean;
    } catch (const Error& e) {
      if (e.code() != "IsolationFailure" && e.code() != "UnstableDegree") throw;
      if (!first_bad) first_bad = std::current_exception();
    }
  }
  if (2 * clean < distinct.size() || clean == 0)
    std::rethrow_exception(first_bad);
  int bound = 1;
  for (int i = 0; i < candidate_codim(a); ++i) bound *= f.d;
  require(best <= bound, "LemmaViolation",
          "degree along the set exceeds d^codim");
  return best;
}

// x in A_p, i.e. deg_x f >= d^p.
inline bool stratum_membership(const HomogeneousMap& f, const ProjPoint& x,
                               int p, double probe_radius = 2e-2) {
  require(p >= 1 && p <= f.k, "SchemaError", "stratum index needs 1 <= p <= k");
  int bound = 1;
  for (int i = 0; i < p; ++i) bound *= f.d;
  return local_degree(f, x, probe_radius) >= bound;
}

struct InvarianceResult {
  bool totally_invariant = false;
  bool forward_invariant = false;
  bool set_test = false;     // f^{-1}(component) lies on the previous component
  bool degree_test = false;  // deg along every component equals d^codim
  int degree = 0;            // smallest sampled degree along the cycle
  double max_residual = 0.0;
};

// Total invariance of a cycle of components A_0 -> A_1 -> ... -> A_0.  The
// set-theoretic test and the degree criterion are both evaluated and must
// agree; a discrepancy is surfaced instead of picking a winner, since it can
// only come from a tolerance artifact.
inline InvarianceResult totally_invariant_cycle(
    const HomogeneousMap& f, std::vector<CandidateSet> comps, int sample_count,
    std::uint64_t seed = 0x8f1bbcdcbfa53e0bULL) {
  require(!comps.empty(), "SchemaError", "cycle needs at least one component");
  const std::size_t len = comps.size();
  int p = candidate_codim(comps[0]);
  for (const CandidateSet& c : comps) {
    require(c.k == f.k, "DimensionMismatch", "candidate lives in the wrong space");
    require(candidate_codim(c) == p, "SchemaError",
            "cycle components must share codimension");
  }
  for (std::size_t i = 0; i < len; ++i) {
    Rng rng = make_rng(derive_seed(seed, i));
    comps[i].samples = sample_candidate(comps[i], sample_count, rng);
  }
  InvarianceResult r;
  for (std::size_t i = 0; i < len; ++i) {
    const CandidateSet& next = comps[(i + 1) % len];
    for (const ProjPoint& s : comps[i].samples)
      r.max_residual =
          std::max(r.max_residual, candidate_residual(next, evaluate(f, s)));
  }
  if (r.max_residual > kInvarianceTol) return r;  // not even invariant
  r.forward_invariant = true;
  double back = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const CandidateSet& prev = comps[(i + len - 1) % len];
    for (std::size_t si = 0; si < comps[i].samples.size(); ++si) {
      FiberResult fr = fiber(f, comps[i].samples[si],
                             derive_seed(seed, 100 + i * 1000 + si));
      for (const ProjPoint& q : fr.points)
        back = std::max(back, candidate_residual(prev, q));
    }
  }
  r.set_test = back <= kInvarianceTol;
  r.max_residual = std::max(r.max_residual, back);
  int bound = 1;
  for (int i = 0; i < p; ++i) bound *= f.d;
  int min_deg = std::numeric_limits<int>::max();
  bool deg_ok = true;
  for (const CandidateSet& c : comps) {
    int s = degree_along_set(f, c);
    min_deg = std::min(min_deg, s);
    deg_ok = deg_ok && s == bound;
  }
  r.degree = min_deg;
  r.degree_test = deg_ok;
  require(r.set_test == r.degree_test, "CriterionDisagreement",
          "set-theoretic and degree tests disagree");
  r.totally_invariant = r.set_test && r.degree_test;
  return r;
}

inline InvarianceResult totally_invariant(const HomogeneousMap& f,
                                          const CandidateSet& a,
                                          int sample_count,
                                          std::uint64_t seed = 0x8f1bbcdcbfa53e0bULL) {
  return totally_invariant_cycle(f, {a}, sample_count, seed);
}

struct VerifiedComponent {
  CandidateSet set;
  int codim = 1;
  int cycle_length = 1;
};

struct ExceptionalReport {
  std::vector<VerifiedComponent> verified_components;
  std::vector<double> total_invariance_residuals;  // parallel to components
  std::vector<CandidateSet> candidates_tested;
};

namespace detail {

inline std::vector<ProjPoint> binary_form_points(const HomPoly& form) {
  RootResult rr = polynomial_roots(binary_form_coeffs(form));
  std::vector<ProjPoint> pts;
  for (Cx z : rr.roots) pts.push_back(point_p1(z));
  for (int i = 0; i < rr.leading_drop; ++i) pts.push_back(infinity_p1());
  return pts;
}

inline std::vector<ProjPoint> fixed_points_p1(const HomogeneousMap& g) {
  HomPoly s = make_poly(1, 1, {{{1, 0, 0}, Cx(1.0)}});
  HomPoly t = make_poly(1, 1, {{{0, 1, 0}, Cx(1.0)}});
  HomPoly form = add_polys(multiply(g.comps[0], t),
                           scale_poly(multiply(g.comps[1], s), -1.0));
  return binary_form_points(form);
}

// Fixed points of a plane endomorphism by a total-degree homotopy on two
// random combinations of the 2x2 minors of [f(Z); Z].  A fixed pair of minors
// will not do: it can contain whole lines (Z_1 = 0 whenever Z_1 divides f_1),
// while generic combinations cut out the fixed points plus finitely many
// movable junk points that the residual filter removes.
inline std::vector<ProjPoint> fixed_points_p2(const HomogeneousMap& f,
                                              std::uint64_t seed) {
  require(f.k == 2, "DimensionMismatch", "fixed_points_p2 needs k=2");
  HomPoly z0 = make_poly(2, 1, {{{1, 0, 0}, Cx(1.0)}});
  HomPoly z1 = make_poly(2, 1, {{{0, 1, 0}, Cx(1.0)}});
  HomPoly z2 = make_poly(2, 1, {{{0, 0, 1}, Cx(1.0)}});
  std::array<HomPoly, 3> minors = {
      add_polys(multiply(f.comps[0], z1), scale_poly(multiply(f.comps[1], z0), -1.0)),
      add_polys(multiply(f.comps[1], z2), scale_poly(multiply(f.comps[2], z1), -1.0)),
      add_polys(multiply(f.comps[0], z2), scale_poly(multiply(f.comps[2], z0), -1.0))};
  const int deg = f.d + 1;
  std::vector<ProjPoint> best;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    HomotopyTarget tgt;
    tgt.f = &f;
    tgt.d = deg;
    tgt.g.clear();
    for (int e = 0; e < 2; ++e) {
      HomPoly combo = scale_poly(minors[0], gaussian_cx(rng));
      combo = add_polys(combo, scale_poly(minors[1], gaussian_cx(rng)));
      combo = add_polys(combo, scale_poly(minors[2], gaussian_cx(rng)));
      tgt.g.push_back(combo);
    }
    tgt.dg.resize(2);
    for (std::size_t i = 0; i < 2; ++i)
      for (int m = 0; m < 3; ++m)
        tgt.dg[i][static_cast<std::size_t>(m)] = partial(tgt.g[i], m);
    tgt.u = random_unitary3(rng);
    Cx gamma = unit_phase(rng);
    Cx a = 1.3 * unit_phase(rng);
    Cx b = 0.7 * unit_phase(rng);
    Cx ra = std::pow(a, 1.0 / deg);
    Cx rb = std::pow(b, 1.0 / deg);
    std::vector<ProjPoint> pts;
    bool lost = false;
    for (int j1 = 0; j1 < deg; ++j1) {
      for (int j2 = 0; j2 < deg; ++j2) {
        Cx w1 = std::polar(1.0, 2.0 * kPi * j1 / deg);
        Cx w2 = std::polar(1.0, 2.0 * kPi * j2 / deg);
        auto end = track_path(tgt, gamma, a, b, Eigen::Vector2cd(ra * w1, rb * w2));
        if (!end) {
          lost = true;
          continue;
        }
        ProjPoint x = normalize(tgt.embed(*end), 2);
        if (fs_distance(evaluate(f, x), x) > kInvarianceTol) continue;  // junk
        bool dup = false;
        for (const ProjPoint& y : pts) dup = dup || points_equal(x, y, 1e-6);
        if (!dup) pts.push_back(x);
      }
    }
    if (!lost) return pts;
    if (pts.size() > best.size()) best = pts;
  }
  return best;  // incomplete pool: detection stays sound, only less complete
}

}  // namespace detail

// All totally invariant cycles (length <= 2) of points on P^1: every fixed
// point of f and f^2 is a candidate, so the result is exhaustive.  More than
// two surviving points contradicts the classical bound and raises.
inline ExceptionalReport exceptional_p1(const HomogeneousMap& f,
                                        std::uint64_t seed = 0x94d049bb133111ebULL) {
  require(f.k == 1, "DimensionMismatch", "exceptional_p1 needs k=1");
  std::vector<ProjPoint> pts;
  auto add = [&](const ProjPoint& x) {
    for (const ProjPoint& y : pts)
      if (points_equal(x, y, 1e-6)) return;
    pts.push_back(x);
  };
  for (const ProjPoint& x : detail::fixed_points_p1(f)) add(x);
  for (const ProjPoint& x : detail::fixed_points_p1(compose_map(f, f))) add(x);

  ExceptionalReport rep;
  std::vector<char> used(pts.size(), 0);
  int verified_points = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (used[i]) continue;
    used[i] = 1;
    std::vector<CandidateSet> cycle{point_candidate(pts[i])};
    ProjPoint img = evaluate(f, pts[i]);
    if (!points_equal(img, pts[i], 1e-6)) {
      for (std::size_t j = 0; j < pts.size(); ++j) {
        if (!used[j] && points_equal(img, pts[j], 1e-6)) {
          used[j] = 1;
          cycle.push_back(point_candidate(pts[j]));
          break;
        }
      }
    }
    for (const CandidateSet& c : cycle) rep.candidates_tested.push_back(c);
    InvarianceResult r =
        totally_invariant_cycle(f, cycle, 1, derive_seed(seed, i));
    if (r.totally_invariant) {
      for (const CandidateSet& c : cycle) {
        rep.verified_components.push_back(
            {c, f.k, static_cast<int>(cycle.size())});
        rep.total_invariance_residuals.push_back(r.max_residual);
        ++verified_points;
      }
    }
  }
  require(verified_points <= 2, "TooManyExceptional",
          "more than two totally invariant points on P^1");
  return rep;
}

// Candidate-based detection on P^2.  The pool holds the coordinate lines and
// points, the fixed points of f and f^2 that reach the first degree stratum,
// and any caller-supplied sets; candidates are grouped into cycles of length
// <= 2 by matching forward images, then each cycle is tested.  Completeness
// is relative to the pool, which the report lists.
inline ExceptionalReport exceptional_candidates_p2(
    const HomogeneousMap& f, const std::vector<CandidateSet>& extra_candidates = {},
    std::uint64_t seed = 0xd6e8feb86659fd93ULL) {
  require(f.k == 2, "DimensionMismatch", "exceptional_candidates_p2 needs k=2");
  std::vector<CandidateSet> pool;
  for (int i = 0; i < 3; ++i) pool.push_back(coordinate_candidate(2, {i}));
  pool.push_back(point_candidate(normalize(Cx(1.0), Cx(0.0), Cx(0.0))));
  pool.push_back(point_candidate(normalize(Cx(0.0), Cx(1.0), Cx(0.0))));
  pool.push_back(point_candidate(normalize(Cx(0.0), Cx(0.0), Cx(1.0))));

  std::vector<ProjPoint> fixed = detail::fixed_points_p2(f, derive_seed(seed, 1));
  for (const ProjPoint& x :
       detail::fixed_points_p2(compose_map(f, f), derive_seed(seed, 2))) {
    bool dup = false;
    for (const ProjPoint& y : fixed) dup = dup || points_equal(x, y, 1e-6);
    if (!dup) fixed.push_back(x);
  }
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    bool dup = false;
    for (const CandidateSet& c : pool)
      dup = dup || (c.kind == CandidateKind::point &&
                    points_equal(c.point, fixed[i], 1e-6));
    if (dup) continue;
    try {
      if (local_degree(f, fixed[i], 2e-2, 3, derive_seed(seed, 40 + i)) >= f.d)
        pool.push_back(point_candidate(fixed[i]));
    } catch (const Error&) {
      // unstable probe: leave the point out of the pool
    }
  }
  for (const CandidateSet& c : extra_candidates) {
    require(c.k == 2, "DimensionMismatch", "extra candidate lives in the wrong space");
    pool.push_back(c);
  }

  for (std::size_t i = 0; i < pool.size(); ++i) {
    Rng rng = make_rng(derive_seed(seed, 100 + i));
    pool[i].samples = sample_candidate(pool[i], 5, rng);
  }
  auto maps_onto = [&](const CandidateSet& a, const CandidateSet& b) {
    double r = 0.0;
    for (const ProjPoint& s : a.samples)
      r = std::max(r, candidate_residual(b, evaluate(f, s)));
    return r <= kInvarianceTol;
  };
  std::vector<char> used(pool.size(), 0);
  std::vector<std::vector<std::size_t>> cycles;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (used[i]) continue;
    used[i] = 1;
    if (maps_onto(pool[i], pool[i])) {
      cycles.push_back({i});
      continue;
    }
    std::size_t partner = pool.size();
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (used[j] || candidate_codim(pool[j]) != candidate_codim(pool[i])) continue;
      if (maps_onto(pool[i], pool[j]) && maps_onto(pool[j], pool[i])) {
        partner = j;
        break;
      }
    }
    if (partner < pool.size()) {
      used[partner] = 1;
      cycles.push_back({i, partner});
    } else {
      cycles.push_back({i});  // forward test will record the failure
    }
  }

  struct CycleOutcome {
    bool verified = false;
    double residual = 0.0;
  };
  std::vector<CycleOutcome> outcome(cycles.size());
  parallel_for(cycles.size(), [&](std::size_t ci) {
    std::vector<CandidateSet> comps;
    for (std::size_t idx : cycles[ci]) comps.push_back(pool[idx]);
    try {
      InvarianceResult r = totally_invariant_cycle(
          f, std::move(comps), 20, derive_seed(seed, 1000 + ci));
      outcome[ci] = {r.totally_invariant, r.max_residual};
    } catch (const Error& e) {
      if (std::string(e.code()) == "CriterionDisagreement") throw;
      outcome[ci] = {false, 1.0};  // solver trouble counts as unverified
    }
  });

  ExceptionalReport rep;
  rep.candidates_tested = pool;
  for (std::size_t ci = 0; ci < cycles.size(); ++ci) {
    if (!outcome[ci].verified) continue;
    for (std::size_t idx : cycles[ci]) {
      rep.verified_components.push_back({pool[idx], candidate_codim(pool[idx]),
                                         static_cast<int>(cycles[ci].size())});
      rep.total_invariance_residuals.push_back(outcome[ci].residual);
    }
  }
  return rep;
}

}  // namespace equidyn
