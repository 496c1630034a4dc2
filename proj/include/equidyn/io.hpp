#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "equidyn/core.hpp"
#include "equidyn/disks.hpp"
#include "equidyn/empirical.hpp"
#include "equidyn/endo.hpp"
#include "equidyn/exceptional.hpp"
#include "equidyn/poly.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

using Json = nlohmann::json;

// --- hashing ----------------------------------------------------------------

// FNV-1a 64 over raw bytes; reports embed this for the map file they used.
inline std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string content_hash(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

// --- map schema -------------------------------------------------------------

// { "k": int, "d": int, "components": [ [ {"exps":[e0..ek], "re":x, "im":y},
// ... ], ... ] } with k+1 component arrays; every exponent vector sums to d.

inline Json map_to_json(const HomogeneousMap& f) {
  Json components = Json::array();
  for (const HomPoly& p : f.comps) {
    Json terms = Json::array();
    for (const HomTerm& t : p.terms) {
      Json exps = Json::array();
      for (int i = 0; i <= f.k; ++i)
        exps.push_back(t.exps[static_cast<std::size_t>(i)]);
      terms.push_back(
          {{"exps", exps}, {"re", t.coeff.real()}, {"im", t.coeff.imag()}});
    }
    components.push_back(terms);
  }
  return Json{{"k", f.k}, {"d", f.d}, {"components", components}};
}

inline HomogeneousMap map_from_json(const Json& j) {
  require(j.is_object(), "SchemaError", "map document must be a JSON object");
  for (const char* key : {"k", "d", "components"})
    require(j.contains(key), "SchemaError",
            std::string("missing field \"") + key + "\"");
  require(j["k"].is_number_integer() && j["d"].is_number_integer(),
          "SchemaError", "\"k\" and \"d\" must be integers");
  int k = j["k"].get<int>();
  int d = j["d"].get<int>();
  require(k == 1 || k == 2, "SchemaError", "\"k\" must be 1 or 2");
  require(d >= 2, "SchemaError", "\"d\" must be at least 2");
  const Json& comps = j["components"];
  require(comps.is_array() && static_cast<int>(comps.size()) == k + 1,
          "SchemaError", "\"components\" must hold k+1 arrays");

  std::vector<HomPoly> polys;
  for (int c = 0; c <= k; ++c) {
    const Json& terms = comps[static_cast<std::size_t>(c)];
    require(terms.is_array(), "SchemaError",
            "component " + std::to_string(c) + " must be an array of terms");
    std::vector<HomTerm> parsed;
    for (std::size_t t = 0; t < terms.size(); ++t) {
      std::string where = "component " + std::to_string(c) + " term " +
                          std::to_string(t);
      const Json& term = terms[t];
      require(term.is_object() && term.contains("exps") &&
                  term.contains("re") && term.contains("im"),
              "SchemaError", where + ": need \"exps\", \"re\", \"im\"");
      const Json& exps = term["exps"];
      require(exps.is_array() && static_cast<int>(exps.size()) == k + 1,
              "SchemaError", where + ": \"exps\" must list k+1 exponents");
      HomTerm ht;
      int sum = 0;
      for (int i = 0; i <= k; ++i) {
        require(exps[static_cast<std::size_t>(i)].is_number_integer(),
                "SchemaError", where + ": exponents must be integers");
        int e = exps[static_cast<std::size_t>(i)].get<int>();
        require(e >= 0, "SchemaError", where + ": negative exponent");
        ht.exps[static_cast<std::size_t>(i)] = e;
        sum += e;
      }
      require(sum == d, "SchemaError",
              where + ": exponents sum to " + std::to_string(sum) +
                  ", expected d = " + std::to_string(d));
      require(term["re"].is_number() && term["im"].is_number(), "SchemaError",
              where + ": \"re\" and \"im\" must be numbers");
      ht.coeff = Cx(term["re"].get<double>(), term["im"].get<double>());
      parsed.push_back(ht);
    }
    polys.push_back(make_poly(k, d, std::move(parsed)));
  }
  HomogeneousMap f = make_map(k, d, std::move(polys));
  if (k == 1) {
    require(nondegenerate_p1(f), "DegenerateMap",
            "components share a root: vanishing resultant");
  } else {
    // A zero component forces base points (two curves in the plane always
    // meet), and random probes below would never land on them.
    for (int c = 0; c <= k; ++c)
      require(!f.comps[static_cast<std::size_t>(c)].terms.empty(),
              "DegenerateMap",
              "component " + std::to_string(c) + " is identically zero");
    // No exact resultant for k=2: probe random points for common zeros.
    Rng rng = make_rng(0x8764000b1c26dc51ULL);
    double scale = coeff_scale(f);
    for (int trial = 0; trial < 64; ++trial) {
      ProjPoint x = sample_fs_point(2, rng);
      std::array<Cx, 3> v = evaluate_raw(f, x.coords);
      double m = 0.0;
      for (const Cx& c : v) m = std::max(m, std::abs(c));
      require(m > 1e-12 * scale, "DegenerateMap",
              "components vanish simultaneously at a sampled point");
    }
  }
  return f;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "SchemaError", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "SchemaError", "cannot write " + path);
  out << bytes;
}

struct LoadedMap {
  HomogeneousMap map;
  std::string hash;  // FNV-1a 64 of the file bytes, hex
};

inline LoadedMap load_map(const std::string& path) {
  std::string bytes = read_file(path);
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const Json::parse_error& e) {
    fail("SchemaError", path + ": " + e.what());
  }
  try {
    return {map_from_json(j), content_hash(bytes)};
  } catch (const Error& e) {
    if (e.code() == "SchemaError" || e.code() == "DegenerateMap")
      fail(e.code(), path + ": " + e.what());
    throw;
  }
}

// --- CSV point clouds -------------------------------------------------------

// Fixed 17-significant-digit decimals: enough to round-trip doubles exactly
// and stable across runs.
inline std::string format_g17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string point_cloud_csv(const EmpiricalMeasure& m) {
  std::string out;
  for (int i = 0; i <= m.k; ++i) {
    out += "re" + std::to_string(i) + ",im" + std::to_string(i) + ",";
  }
  out += "weight\n";
  for (std::size_t a = 0; a < m.atoms.size(); ++a) {
    for (int i = 0; i <= m.k; ++i) {
      Cx c = m.atoms[a].coords[static_cast<std::size_t>(i)];
      out += format_g17(c.real()) + "," + format_g17(c.imag()) + ",";
    }
    out += format_g17(m.weights[a]) + "\n";
  }
  return out;
}

inline EmpiricalMeasure point_cloud_from_csv(const std::string& csv, int k) {
  EmpiricalMeasure m;
  m.k = k;
  m.provenance = MeasureProvenance::external;
  std::istringstream in(csv);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "SchemaError",
          "empty point cloud");
  int fields = 2 * (k + 1) + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
    require(static_cast<int>(vals.size()) == fields, "SchemaError",
            "point cloud row has the wrong arity");
    ProjPoint p;
    p.k = k;
    for (int i = 0; i <= k; ++i)
      p.coords[static_cast<std::size_t>(i)] =
          Cx(vals[static_cast<std::size_t>(2 * i)],
             vals[static_cast<std::size_t>(2 * i + 1)]);
    m.atoms.push_back(p);
    m.weights.push_back(vals[static_cast<std::size_t>(fields - 1)]);
  }
  return m;
}

// --- report fragments -------------------------------------------------------

inline Json point_to_json(const ProjPoint& p) {
  Json out = Json::array();
  for (int i = 0; i <= p.k; ++i) {
    Cx c = p.coords[static_cast<std::size_t>(i)];
    out.push_back({{"re", c.real()}, {"im", c.imag()}});
  }
  return out;
}

inline Json candidate_to_json(const CandidateSet& a) {
  Json out;
  switch (a.kind) {
    case CandidateKind::point:
      out["kind"] = "point";
      out["point"] = point_to_json(a.point);
      break;
    case CandidateKind::hyperplane: {
      out["kind"] = "hyperplane";
      Json form = Json::array();
      for (int i = 0; i <= a.k; ++i)
        form.push_back({{"re", a.form[static_cast<std::size_t>(i)].real()},
                        {"im", a.form[static_cast<std::size_t>(i)].imag()}});
      out["form"] = form;
      break;
    }
    case CandidateKind::coordinate_subspace:
      out["kind"] = "coordinate_subspace";
      out["zero_indices"] = a.zero_indices;
      break;
  }
  out["codim"] = candidate_codim(a);
  return out;
}

inline Json exceptional_report_to_json(const ExceptionalReport& rep) {
  Json comps = Json::array();
  for (std::size_t i = 0; i < rep.verified_components.size(); ++i) {
    Json c = candidate_to_json(rep.verified_components[i].set);
    c["codim"] = rep.verified_components[i].codim;
    c["cycle_length"] = rep.verified_components[i].cycle_length;
    c["invariance_residual"] = rep.total_invariance_residuals[i];
    comps.push_back(c);
  }
  Json tested = Json::array();
  for (const CandidateSet& c : rep.candidates_tested)
    tested.push_back(candidate_to_json(c));
  return Json{{"verified_components", comps}, {"candidates_tested", tested}};
}

inline Json ljubich_report_to_json(const LjubichReport& rep) {
  Json rows = Json::array();
  for (const LjubichRow& r : rep.rows) {
    rows.push_back({{"n", r.n},
                    {"attempted", r.attempted},
                    {"succeeded", r.succeeded},
                    {"lost_critical", r.lost_critical},
                    {"lost_other", r.lost_other},
                    {"target", r.target},
                    {"count_ok", r.count_ok},
                    {"diam_median", r.diam_median},
                    {"diam_max", r.diam_max},
                    {"small_fraction", r.small_fraction},
                    {"area_sum", r.area_sum},
                    {"area_bound", r.area_bound}});
  }
  return Json{{"l", rep.l},
              {"epsilon", rep.epsilon},
              {"tau", rep.tau},
              {"c_hat", rep.c_hat},
              {"diam_slope", rep.diam_slope},
              {"rows", rows}};
}

inline std::string branch_diameters_csv(const LjubichReport& rep) {
  std::string out = "n,branch,diameter\n";
  for (const LjubichRow& r : rep.rows)
    for (std::size_t b = 0; b < r.diameters.size(); ++b)
      out += std::to_string(r.n) + "," + std::to_string(b) + "," +
             format_g17(r.diameters[b]) + "\n";
  return out;
}

}  // namespace equidyn
