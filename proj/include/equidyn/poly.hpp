#pragma once

#include <array>
#include <map>
#include <vector>

#include "equidyn/core.hpp"

namespace equidyn {

// Sparse homogeneous polynomials in k+1 variables (k = 1 or 2).

struct HomTerm {
  std::array<int, 3> exps{};  // exponents of the k+1 variables; rest zero
  Cx coeff{};
};

struct HomPoly {
  int k = 1;
  int degree = 0;
  std::vector<HomTerm> terms;
};

inline int term_degree(const HomTerm& t, int k) {
  int s = 0;
  for (int i = 0; i <= k; ++i) s += t.exps[static_cast<std::size_t>(i)];
  return s;
}

// Merges equal exponent vectors and drops exact-zero coefficients; leaves a
// canonical term order (lexicographic on exponents).
inline HomPoly combine_terms(HomPoly p) {
  std::map<std::array<int, 3>, Cx> acc;
  for (const auto& t : p.terms) acc[t.exps] += t.coeff;
  p.terms.clear();
  for (const auto& [e, c] : acc) {
    if (c != Cx(0.0)) p.terms.push_back({e, c});
  }
  return p;
}

inline HomPoly make_poly(int k, int degree, std::vector<HomTerm> terms) {
  HomPoly p;
  p.k = k;
  p.degree = degree;
  p.terms = std::move(terms);
  for (const auto& t : p.terms) {
    require(term_degree(t, k) == degree, "SchemaError",
            "term degree does not match the declared degree");
    for (int i = 0; i <= k; ++i) {
      require(t.exps[static_cast<std::size_t>(i)] >= 0, "SchemaError",
              "negative exponent");
    }
  }
  return combine_terms(std::move(p));
}

inline Cx eval_poly(const HomPoly& p, const std::array<Cx, 3>& z) {
  Cx sum(0.0);
  for (const auto& t : p.terms) {
    Cx v = t.coeff;
    for (int i = 0; i <= p.k; ++i) {
      int e = t.exps[static_cast<std::size_t>(i)];
      for (int j = 0; j < e; ++j) v *= z[static_cast<std::size_t>(i)];
    }
    sum += v;
  }
  return sum;
}

inline HomPoly partial(const HomPoly& p, int var) {
  HomPoly d;
  d.k = p.k;
  d.degree = p.degree > 0 ? p.degree - 1 : 0;
  for (const auto& t : p.terms) {
    int e = t.exps[static_cast<std::size_t>(var)];
    if (e == 0) continue;
    HomTerm s = t;
    s.coeff *= static_cast<double>(e);
    s.exps[static_cast<std::size_t>(var)] = e - 1;
    d.terms.push_back(s);
  }
  return combine_terms(std::move(d));
}

inline HomPoly multiply(const HomPoly& a, const HomPoly& b) {
  HomPoly p;
  p.k = a.k;
  p.degree = a.degree + b.degree;
  p.terms.reserve(a.terms.size() * b.terms.size());
  for (const auto& ta : a.terms) {
    for (const auto& tb : b.terms) {
      HomTerm t;
      for (int i = 0; i <= p.k; ++i) {
        t.exps[static_cast<std::size_t>(i)] =
            ta.exps[static_cast<std::size_t>(i)] + tb.exps[static_cast<std::size_t>(i)];
      }
      t.coeff = ta.coeff * tb.coeff;
      p.terms.push_back(t);
    }
  }
  return combine_terms(std::move(p));
}

inline HomPoly scale_poly(HomPoly p, Cx c) {
  for (auto& t : p.terms) t.coeff *= c;
  return combine_terms(std::move(p));
}

inline HomPoly add_polys(const HomPoly& a, const HomPoly& b) {
  require(a.k == b.k && a.degree == b.degree, "DimensionMismatch",
          "polynomial sum needs matching arity and degree");
  HomPoly p = a;
  p.terms.insert(p.terms.end(), b.terms.begin(), b.terms.end());
  return combine_terms(std::move(p));
}

inline HomPoly constant_poly(int k, Cx c) {
  HomPoly p;
  p.k = k;
  p.degree = 0;
  if (c != Cx(0.0)) p.terms.push_back({{0, 0, 0}, c});
  return p;
}

inline HomPoly poly_pow(const HomPoly& a, int e) {
  HomPoly r = constant_poly(a.k, Cx(1.0));
  for (int i = 0; i < e; ++i) r = multiply(r, a);
  r.degree = a.degree * e;
  return r;
}

// Substitutes the polynomials g[0..k] for the variables of p; the result
// lives in the variables of the inner polynomials.
inline HomPoly compose(const HomPoly& p, const std::vector<HomPoly>& g) {
  require(static_cast<int>(g.size()) == p.k + 1, "DimensionMismatch",
          "compose needs one inner polynomial per variable");
  int inner_k = g[0].k;
  int inner_degree = g[0].degree;
  HomPoly out;
  out.k = inner_k;
  out.degree = p.degree * inner_degree;
  for (const auto& t : p.terms) {
    HomPoly prod = constant_poly(inner_k, t.coeff);
    for (int i = 0; i <= p.k; ++i) {
      int e = t.exps[static_cast<std::size_t>(i)];
      if (e > 0) prod = multiply(prod, poly_pow(g[static_cast<std::size_t>(i)], e));
    }
    prod.degree = out.degree;
    for (const auto& pt : prod.terms) out.terms.push_back(pt);
  }
  out = combine_terms(std::move(out));
  return out;
}

// Coefficients of a binary form sum_j a_j s^j t^{d-j}, as a_0..a_d.
inline std::vector<Cx> binary_form_coeffs(const HomPoly& p) {
  require(p.k == 1, "DimensionMismatch", "binary form requires k=1");
  std::vector<Cx> coeffs(static_cast<std::size_t>(p.degree) + 1, Cx(0.0));
  for (const auto& t : p.terms) {
    coeffs[static_cast<std::size_t>(t.exps[0])] += t.coeff;
  }
  return coeffs;
}

inline HomPoly binary_form_from_coeffs(const std::vector<Cx>& coeffs) {
  HomPoly p;
  p.k = 1;
  p.degree = static_cast<int>(coeffs.size()) - 1;
  for (int j = 0; j < static_cast<int>(coeffs.size()); ++j) {
    if (coeffs[static_cast<std::size_t>(j)] != Cx(0.0)) {
      p.terms.push_back({{j, p.degree - j, 0}, coeffs[static_cast<std::size_t>(j)]});
    }
  }
  return p;
}

inline double max_coeff_modulus(const HomPoly& p) {
  double m = 0.0;
  for (const auto& t : p.terms) m = std::max(m, std::abs(t.coeff));
  return m;
}

}  // namespace equidyn
