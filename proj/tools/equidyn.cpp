// Command-line front end: loads a map file, runs one experiment, and writes a
// JSON report (plus CSV point clouds where applicable) into --out. Reports
// embed the map-file hash, the seed, and the resolved options so a run can be
// reproduced exactly; determinism is independent of --threads.

#include <CLI11.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "equidyn/core.hpp"
#include "equidyn/disks.hpp"
#include "equidyn/endo.hpp"
#include "equidyn/entropy.hpp"
#include "equidyn/exceptional.hpp"
#include "equidyn/fiber.hpp"
#include "equidyn/io.hpp"
#include "equidyn/measure.hpp"
#include "equidyn/proj.hpp"

using namespace equidyn;

namespace {

std::vector<double> parse_csv_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      require(used == cell.size(), "SchemaError", "trailing junk in number: " + cell);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail("SchemaError", "cannot parse number: " + cell);
    }
  }
  return out;
}

// Chart coordinates "re,im" (k=1) or "re,im,re,im" (k=2); the last
// homogeneous coordinate is set to one.
ProjPoint parse_chart_point(const std::string& s, int k) {
  std::vector<double> v = parse_csv_doubles(s);
  require(static_cast<int>(v.size()) == 2 * k, "SchemaError",
          "a point on P^" + std::to_string(k) + " needs " +
              std::to_string(2 * k) + " chart coordinates, got \"" + s + "\"");
  if (k == 1) return point_p1(Cx(v[0], v[1]));
  return normalize(Cx(v[0], v[1]), Cx(v[2], v[3]), Cx(1.0));
}

std::array<Cx, 3> parse_form(const std::string& s) {
  std::vector<double> v = parse_csv_doubles(s);
  require(v.size() == 6, "SchemaError",
          "a linear form needs 6 numbers re,im,re,im,re,im, got \"" + s + "\"");
  return {Cx(v[0], v[1]), Cx(v[2], v[3]), Cx(v[4], v[5])};
}

// "moment:i,j,p" | "bump:<chart point>:h" | "modulus:i"
TestFunction parse_test_function(const std::string& spec, int k) {
  std::size_t colon = spec.find(':');
  std::string kind = spec.substr(0, colon);
  std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "moment") {
    std::vector<double> v = parse_csv_doubles(rest);
    require(v.size() == 3, "SchemaError", "moment spec needs i,j,p");
    return chart_moment(static_cast<int>(v[0]), static_cast<int>(v[1]),
                        static_cast<int>(v[2]));
  }
  if (kind == "modulus") {
    std::vector<double> v = parse_csv_doubles(rest);
    require(v.size() == 1, "SchemaError", "modulus spec needs one index");
    return coordinate_modulus(static_cast<int>(v[0]));
  }
  if (kind == "bump") {
    std::size_t split = rest.rfind(':');
    require(split != std::string::npos, "SchemaError",
            "bump spec is bump:<chart point>:<bandwidth>");
    ProjPoint c = parse_chart_point(rest.substr(0, split), k);
    double h = parse_csv_doubles(rest.substr(split + 1)).at(0);
    return gaussian_bump(c, h);
  }
  fail("SchemaError",
       "test function must be moment:i,j,p, bump:<point>:<h>, or modulus:i");
}

EmpiricalMeasure unit_circle_measure(int m) {
  std::vector<ProjPoint> pts;
  pts.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j)
    pts.push_back(point_p1(std::polar(1.0, 2.0 * kPi * j / m)));
  std::vector<double> w(static_cast<std::size_t>(m), 1.0 / m);
  return make_measure(1, pts, w, MeasureProvenance::external);
}

Json envelope(const std::string& sub, const std::string& map_path,
              const std::string& map_hash, std::uint64_t seed, Json options) {
  return Json{{"subcommand", sub},
              {"map", map_path},
              {"map_hash", map_hash},
              {"seed", seed},
              {"options", std::move(options)},
              {"estimates", Json::object()},
              {"targets", Json::object()},
              {"tolerances", Json::object()}};
}

void emit_report(const std::string& out_dir, const std::string& name,
                 const Json& j) {
  std::filesystem::create_directories(out_dir);
  std::string text = j.dump(2);
  text += "\n";
  write_file(out_dir + "/" + name + ".json", text);
  std::cout << text;
}

void emit_csv(const std::string& out_dir, const std::string& name,
              const std::string& csv) {
  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/" + name + ".csv", csv);
}

struct MeasureFlags {
  std::string method = "tree";
  std::string start = "2,0";
  int n = 12;        // tree / cesaro pullback depth
  int samples = 1024;
  int depth = 30;    // backward burn-in
  std::uint64_t budget = 1ULL << 20;
};

// Subcommands that consume a measure share these flags under --method,
// --start, --mu-n, --samples, --depth, --budget.
void add_measure_flags(CLI::App* sub, MeasureFlags& mf) {
  sub->add_option("--method", mf.method, "measure construction: tree | backward | cesaro")
      ->check(CLI::IsMember({"tree", "backward", "cesaro"}));
  sub->add_option("--start", mf.start, "chart start point for tree/backward");
  sub->add_option("--mu-n", mf.n, "pullback depth for tree/cesaro");
  sub->add_option("--samples", mf.samples, "sample count for backward/cesaro");
  sub->add_option("--depth", mf.depth, "backward burn-in depth");
  sub->add_option("--budget", mf.budget, "node budget for tree pullbacks");
}

EquilibriumMethod parse_method(const std::string& m) {
  if (m == "tree") return EquilibriumMethod::tree;
  if (m == "backward") return EquilibriumMethod::backward;
  return EquilibriumMethod::cesaro;
}

EmpiricalMeasure build_measure(const HomogeneousMap& f, const MeasureFlags& mf,
                               std::uint64_t seed) {
  EquilibriumOptions opts;
  opts.method = parse_method(mf.method);
  if (opts.method != EquilibriumMethod::cesaro)
    opts.start = parse_chart_point(mf.start, f.k);
  opts.n = mf.n;
  opts.samples = mf.samples;
  opts.depth = mf.depth;
  opts.budget = mf.budget;
  opts.seed = seed;
  return equilibrium_measure(f, opts);
}

Json measure_options_json(const MeasureFlags& mf) {
  return Json{{"method", mf.method}, {"start", mf.start},     {"mu_n", mf.n},
              {"samples", mf.samples}, {"depth", mf.depth},   {"budget", mf.budget}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"equilibrium measures, fibers, and entropy experiments for "
               "endomorphisms of P^1 and P^2"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string map_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int threads = 1;
  app.add_option("--out", out_dir, "output directory for reports");
  app.add_option("--seed", seed, "64-bit seed, echoed in every report");
  app.add_option("--threads", threads, "worker cap (results do not depend on it)")
      ->envname("EQUIDYN_THREADS")
      ->check(CLI::PositiveNumber);

  auto need_map = [&](CLI::App* sub) {
    sub->add_option("--map", map_path, "map JSON file")->required();
  };

  // --- validate-map ---------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("validate-map",
                                       "load a map file and confirm the schema "
                                       "and nondegeneracy checks");
    need_map(sub);
    sub->callback([&] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      Json rep = envelope("validate-map", map_path, lm.hash, seed, Json::object());
      Json terms = Json::array();
      for (const HomPoly& p : lm.map.comps) terms.push_back(p.terms.size());
      rep["estimates"] = {{"k", lm.map.k},
                         {"d", lm.map.d},
                         {"terms_per_component", terms},
                         {"nondegenerate", true}};
      emit_report(out_dir, "validate-map", rep);
    });
  }

  // --- fiber ----------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("fiber",
                                       "solve f^{-1}(y) with multiplicities");
    need_map(sub);
    std::shared_ptr<std::string> y_str = std::make_shared<std::string>();
    sub->add_option("--y", *y_str, "target point, chart coordinates")->required();
    sub->callback([&, y_str] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      ProjPoint y = parse_chart_point(*y_str, lm.map.k);
      FiberResult fr = fiber(lm.map, y, seed);
      double dk = std::pow(static_cast<double>(lm.map.d), lm.map.k);
      int msum = std::accumulate(fr.multiplicities.begin(),
                                 fr.multiplicities.end(), 0);
      double rmax = 0.0;
      for (double r : fr.residuals) rmax = std::max(rmax, r);
      Json rep = envelope("fiber", map_path, lm.hash, seed, Json{{"y", *y_str}});
      rep["estimates"] = {{"distinct_points", fr.points.size()},
                         {"multiplicity_sum", msum},
                         {"residual_max", rmax},
                         {"solver", fr.solver == FiberSolver::univariate
                                        ? "univariate"
                                        : "homotopy"}};
      rep["targets"] = {{"multiplicity_sum", dk}};
      rep["tolerances"] = {{"residual", 1e-8}};
      Json pts = Json::array();
      for (std::size_t i = 0; i < fr.points.size(); ++i)
        pts.push_back({{"point", point_to_json(fr.points[i])},
                       {"multiplicity", fr.multiplicities[i]},
                       {"residual", fr.residuals[i]}});
      rep["points"] = pts;
      rep["artifacts"] = {{"points_csv", "fiber.csv"}};
      std::vector<double> w;
      for (int m : fr.multiplicities) w.push_back(m / dk);
      emit_csv(out_dir, "fiber",
               point_cloud_csv(make_measure(lm.map.k, fr.points, w,
                                            MeasureProvenance::external)));
      emit_report(out_dir, "fiber", rep);
    });
  }

  // --- pullback-tree --------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("pullback-tree",
                                       "enumerate f^{-n}(x) as a weighted "
                                       "point cloud");
    need_map(sub);
    auto x_str = std::make_shared<std::string>("2,0");
    auto n = std::make_shared<int>(8);
    auto budget = std::make_shared<std::uint64_t>(1ULL << 20);
    sub->add_option("--x", *x_str, "tree root, chart coordinates");
    sub->add_option("--n", *n, "pullback depth");
    sub->add_option("--budget", *budget, "node budget");
    sub->callback([&, x_str, n, budget] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      ProjPoint x = parse_chart_point(*x_str, lm.map.k);
      EmpiricalMeasure mu = pullback_tree(lm.map, x, *n, *budget, seed);
      Json rep = envelope("pullback-tree", map_path, lm.hash, seed,
                          Json{{"x", *x_str}, {"n", *n}, {"budget", *budget}});
      rep["estimates"] = {{"atoms", mu.atoms.size()},
                         {"total_mass", total_mass(mu)}};
      rep["targets"] = {{"total_mass", 1.0},
                       {"preimages_with_multiplicity",
                        std::pow(static_cast<double>(lm.map.d),
                                 lm.map.k * *n)}};
      rep["artifacts"] = {{"points_csv", "pullback-tree.csv"}};
      emit_csv(out_dir, "pullback-tree", point_cloud_csv(mu));
      emit_report(out_dir, "pullback-tree", rep);
    });
  }

  // --- sample-mu ------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("sample-mu",
                                       "draw the equilibrium measure by tree, "
                                       "backward orbits, or Cesaro pullbacks");
    need_map(sub);
    auto method = std::make_shared<std::string>("tree");
    auto x_str = std::make_shared<std::string>("2,0");
    auto n = std::make_shared<int>(8);
    auto samples = std::make_shared<int>(1024);
    auto depth = std::make_shared<int>(30);
    auto budget = std::make_shared<std::uint64_t>(1ULL << 20);
    sub->add_option("--method", *method, "tree | backward | cesaro")
        ->check(CLI::IsMember({"tree", "backward", "cesaro"}));
    sub->add_option("--x", *x_str, "start point, chart coordinates");
    sub->add_option("--n", *n, "tree / cesaro pullback depth");
    sub->add_option("--samples", *samples, "backward / cesaro sample count");
    sub->add_option("--depth", *depth, "backward burn-in depth");
    sub->add_option("--budget", *budget, "node budget");
    sub->callback([&, method, x_str, n, samples, depth, budget] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      EquilibriumOptions opts;
      opts.method = parse_method(*method);
      if (opts.method != EquilibriumMethod::cesaro)
        opts.start = parse_chart_point(*x_str, lm.map.k);
      opts.n = *n;
      opts.samples = *samples;
      opts.depth = *depth;
      opts.budget = *budget;
      opts.seed = seed;
      EmpiricalMeasure mu = equilibrium_measure(lm.map, opts);
      Json rep = envelope("sample-mu", map_path, lm.hash, seed,
                          Json{{"method", *method},
                               {"x", *x_str},
                               {"n", *n},
                               {"samples", *samples},
                               {"depth", *depth},
                               {"budget", *budget}});
      rep["estimates"] = {{"atoms", mu.atoms.size()},
                         {"total_mass", total_mass(mu)},
                         {"provenance", provenance_name(mu.provenance)}};
      if (lm.map.k == 1) {
        // Kernel discrepancy against the uniform unit-circle measure; exact
        // limit only for z -> z^d, a drift diagnostic otherwise.
        rep["diagnostics"] = {
            {"discrepancy_to_unit_circle",
             discrepancy(mu, unit_circle_measure(4096), 0.1)},
            {"bandwidth", 0.1}};
      }
      rep["artifacts"] = {{"points_csv", "sample-mu.csv"}};
      emit_csv(out_dir, "sample-mu", point_cloud_csv(mu));
      emit_report(out_dir, "sample-mu", rep);
    });
  }

  // --- equidistribution -----------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("equidistribution",
                                       "compare preimage trees of two starts "
                                       "depth by depth");
    need_map(sub);
    auto x_str = std::make_shared<std::string>("2,0");
    auto y_str = std::make_shared<std::string>("0.5,0.5");
    auto n = std::make_shared<int>(8);
    auto bandwidth = std::make_shared<double>(0.1);
    auto budget = std::make_shared<std::uint64_t>(1ULL << 20);
    sub->add_option("--x", *x_str, "first start");
    sub->add_option("--y", *y_str, "second start");
    sub->add_option("--n", *n, "maximum depth");
    sub->add_option("--bandwidth", *bandwidth, "kernel bandwidth");
    sub->add_option("--budget", *budget, "node budget");
    sub->callback([&, x_str, y_str, n, bandwidth, budget] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      auto rows = equidistribution_test(lm.map,
                                        parse_chart_point(*x_str, lm.map.k),
                                        parse_chart_point(*y_str, lm.map.k),
                                        *n, *bandwidth, *budget);
      Json rep = envelope("equidistribution", map_path, lm.hash, seed,
                          Json{{"x", *x_str},
                               {"y", *y_str},
                               {"n", *n},
                               {"bandwidth", *bandwidth},
                               {"budget", *budget}});
      Json jr = Json::array();
      for (const auto& [depth_n, disc] : rows)
        jr.push_back({{"n", depth_n}, {"discrepancy", disc}});
      rep["rows"] = jr;
      rep["estimates"] = {{"final_discrepancy", rows.back().second}};
      rep["targets"] = {{"limit", 0.0}};
      emit_report(out_dir, "equidistribution", rep);
    });
  }

  // --- exceptional ----------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("exceptional",
                                       "verify totally invariant candidate "
                                       "sets");
    need_map(sub);
    sub->callback([&] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      ExceptionalReport er = lm.map.k == 1
                                 ? exceptional_p1(lm.map, seed)
                                 : exceptional_candidates_p2(lm.map, {}, seed);
      Json rep = envelope("exceptional", map_path, lm.hash, seed, Json::object());
      Json body = exceptional_report_to_json(er);
      for (auto& el : body.items()) rep[el.key()] = el.value();
      rep["estimates"] = {{"verified_count", er.verified_components.size()},
                         {"candidates_tested", er.candidates_tested.size()}};
      emit_report(out_dir, "exceptional", rep);
    });
  }

  // --- critical-decay -------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("critical-decay",
                                       "tree mass inside a tube around the "
                                       "critical locus, per depth");
    need_map(sub);
    auto x_str = std::make_shared<std::string>("2,0");
    auto n = std::make_shared<int>(8);
    auto tau = std::make_shared<double>(0.05);
    auto budget = std::make_shared<std::uint64_t>(1ULL << 20);
    sub->add_option("--x", *x_str, "tree root");
    sub->add_option("--n", *n, "maximum depth");
    sub->add_option("--tau", *tau, "tube radius");
    sub->add_option("--budget", *budget, "node budget");
    sub->callback([&, x_str, n, tau, budget] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      std::vector<double> masses = critical_mass_decay(
          lm.map, parse_chart_point(*x_str, lm.map.k), *n, *tau, *budget);
      Json rep = envelope("critical-decay", map_path, lm.hash, seed,
                          Json{{"x", *x_str},
                               {"n", *n},
                               {"tau", *tau},
                               {"budget", *budget}});
      Json jr = Json::array();
      for (std::size_t i = 0; i < masses.size(); ++i)
        jr.push_back({{"n", i}, {"mass", masses[i]}});
      rep["rows"] = jr;
      rep["estimates"] = {{"final_mass", masses.back()}};
      rep["targets"] = {{"limit", 0.0}};
      rep["tolerances"] = {{"tube_radius", *tau}};
      emit_report(out_dir, "critical-decay", rep);
    });
  }

  // --- lyapunov -------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("lyapunov",
                                       "smallest exponent along mu-sampled "
                                       "orbits");
    need_map(sub);
    auto mf = std::make_shared<MeasureFlags>();
    mf->method = "backward";
    auto n = std::make_shared<int>(30);
    auto orbits = std::make_shared<int>(500);
    sub->add_option("--n", *n, "orbit length");
    sub->add_option("--orbits", *orbits, "orbit count");
    add_measure_flags(sub, *mf);
    sub->callback([&, mf, n, orbits] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      EmpiricalMeasure mu = build_measure(lm.map, *mf, seed);
      LyapunovEstimate le =
          lyapunov_min(lm.map, mu, *n, *orbits, derive_seed(seed, 1));
      Json opts = measure_options_json(*mf);
      opts["n"] = *n;
      opts["orbits"] = *orbits;
      Json rep = envelope("lyapunov", map_path, lm.hash, seed, opts);
      rep["estimates"] = {{"min_exponent", le.min_exponent},
                         {"min_std_error", le.min_std_error},
                         {"max_exponent", le.max_exponent},
                         {"max_std_error", le.max_std_error},
                         {"rejected_orbits", le.rejected}};
      rep["targets"] = {{"min_lower_bound",
                        0.5 * std::log(static_cast<double>(lm.map.d))}};
      emit_report(out_dir, "lyapunov", rep);
    });
  }

  // --- mixing ---------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("mixing",
                                       "correlation defect of two observables "
                                       "at lag n");
    need_map(sub);
    auto mf = std::make_shared<MeasureFlags>();
    mf->n = 14;
    auto n = std::make_shared<int>(10);
    auto phi = std::make_shared<std::string>("moment:0,1,1");
    auto psi = std::make_shared<std::string>("moment:0,1,1");
    auto inv_tol = std::make_shared<double>(0.05);
    sub->add_option("--n", *n, "lag");
    sub->add_option("--phi", *phi, "observable: moment:i,j,p | bump:<pt>:<h> | modulus:i");
    sub->add_option("--psi", *psi, "observable, same grammar");
    sub->add_option("--invariance-tol", *inv_tol,
                    "pushforward discrepancy guard");
    add_measure_flags(sub, *mf);
    sub->callback([&, mf, n, phi, psi, inv_tol] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      EmpiricalMeasure mu = build_measure(lm.map, *mf, seed);
      double corr = mixing_correlation(lm.map, mu,
                                       parse_test_function(*phi, lm.map.k),
                                       parse_test_function(*psi, lm.map.k), *n,
                                       *inv_tol);
      Json opts = measure_options_json(*mf);
      opts["n"] = *n;
      opts["phi"] = *phi;
      opts["psi"] = *psi;
      Json rep = envelope("mixing", map_path, lm.hash, seed, opts);
      rep["estimates"] = {{"correlation", corr}};
      rep["targets"] = {{"limit", 0.0}};
      rep["tolerances"] = {{"invariance", *inv_tol}};
      emit_report(out_dir, "mixing", rep);
    });
  }

  // --- entropy --------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("entropy",
                                       "growth rate of (n,eps)-separated sets "
                                       "on mu samples");
    need_map(sub);
    auto mf = std::make_shared<MeasureFlags>();
    mf->method = "backward";
    mf->samples = 4096;
    auto n_min = std::make_shared<int>(4);
    auto n_max = std::make_shared<int>(10);
    auto eps = std::make_shared<std::vector<double>>();
    sub->add_option("--n-min", *n_min, "smallest horizon");
    sub->add_option("--n-max", *n_max, "largest horizon");
    sub->add_option("--epsilon", *eps, "separation radii (repeatable)");
    add_measure_flags(sub, *mf);
    sub->callback([&, mf, n_min, n_max, eps] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      EmpiricalMeasure mu = build_measure(lm.map, *mf, seed);
      std::vector<int> n_range;
      for (int n = *n_min; n <= *n_max; ++n) n_range.push_back(n);
      std::vector<double> eps_list =
          eps->empty() ? std::vector<double>{0.2, 0.35} : *eps;
      double h = entropy_estimate(lm.map, n_range, eps_list, mu.atoms);
      Json opts = measure_options_json(*mf);
      opts["n_min"] = *n_min;
      opts["n_max"] = *n_max;
      opts["epsilon"] = eps_list;
      Json rep = envelope("entropy", map_path, lm.hash, seed, opts);
      rep["estimates"] = {{"entropy", h}};
      rep["targets"] = {{"exact",
                        lm.map.k * std::log(static_cast<double>(lm.map.d))}};
      rep["tolerances"] = {{"relative", 0.15}};
      emit_report(out_dir, "entropy", rep);
    });
  }

  // --- brin-katok -----------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("brin-katok",
                                       "-(1/n) log mu(B_n(x, eps)) over a "
                                       "horizon range");
    need_map(sub);
    auto mf = std::make_shared<MeasureFlags>();
    auto x_str = std::make_shared<std::string>("1,0");
    auto eps = std::make_shared<double>(0.7);
    auto n_min = std::make_shared<int>(5);
    auto n_max = std::make_shared<int>(30);
    sub->add_option("--x", *x_str, "ball center, chart coordinates");
    sub->add_option("--epsilon", *eps, "ball radius");
    sub->add_option("--n-min", *n_min, "smallest horizon");
    sub->add_option("--n-max", *n_max, "largest horizon");
    add_measure_flags(sub, *mf);
    sub->callback([&, mf, x_str, eps, n_min, n_max] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      EmpiricalMeasure mu = build_measure(lm.map, *mf, seed);
      std::vector<int> n_range;
      for (int n = *n_min; n <= *n_max; ++n) n_range.push_back(n);
      std::vector<double> vals = brin_katok(
          lm.map, mu, parse_chart_point(*x_str, lm.map.k), *eps, n_range);
      Json opts = measure_options_json(*mf);
      opts["x"] = *x_str;
      opts["epsilon"] = *eps;
      opts["n_min"] = *n_min;
      opts["n_max"] = *n_max;
      Json rep = envelope("brin-katok", map_path, lm.hash, seed, opts);
      Json jr = Json::array();
      for (std::size_t i = 0; i < vals.size(); ++i)
        jr.push_back({{"n", n_range[i]}, {"value", vals[i]}});
      rep["rows"] = jr;
      rep["estimates"] = {{"value_at_largest_horizon", vals.back()}};
      rep["targets"] = {{"exact",
                        lm.map.k * std::log(static_cast<double>(lm.map.d))}};
      emit_report(out_dir, "brin-katok", rep);
    });
  }

  // --- lov ------------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("lov",
                                       "Monte Carlo volume of the n-step "
                                       "iterated graph");
    need_map(sub);
    auto n = std::make_shared<int>(5);
    auto samples = std::make_shared<std::size_t>(100000);
    sub->add_option("--n", *n, "graph length");
    sub->add_option("--samples", *samples, "Monte Carlo samples");
    sub->callback([&, n, samples] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      Rng rng = make_rng(seed);
      VolumeEstimate v = graph_volume(lm.map, *n, *samples, rng);
      double d = static_cast<double>(lm.map.d);
      double target =
          std::pow((std::pow(d, *n) - 1.0) / (d - 1.0), lm.map.k);
      Json rep = envelope("lov", map_path, lm.hash, seed,
                          Json{{"n", *n}, {"samples", *samples}});
      rep["estimates"] = {{"value", v.value}, {"std_error", v.std_error}};
      rep["targets"] = {{"closed_form", target}};
      rep["tolerances"] = {{"std_error_multiples", 3}};
      emit_report(out_dir, "lov", rep);
    });
  }

  // --- lov-restricted -------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("lov-restricted",
                                       "graph volume restricted to a line "
                                       "(k=2), with per-iterate terms");
    need_map(sub);
    auto form_str = std::make_shared<std::string>("1,0,0,0,0,0");
    auto n = std::make_shared<int>(4);
    auto nodes_count = std::make_shared<std::size_t>(3000);
    sub->add_option("--form", *form_str,
                    "line {form . Z = 0}, re,im per coefficient");
    sub->add_option("--n", *n, "largest horizon");
    sub->add_option("--nodes", *nodes_count, "quadrature nodes on the line");
    sub->callback([&, form_str, n, nodes_count] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      std::vector<VarietySample> nodes =
          line_quadrature(parse_form(*form_str), *nodes_count, seed);
      std::vector<double> w(nodes.size(),
                            1.0 / static_cast<double>(nodes.size()));
      double d = static_cast<double>(lm.map.d);
      Json rep = envelope("lov-restricted", map_path, lm.hash, seed,
                          Json{{"form", *form_str},
                               {"n", *n},
                               {"nodes", *nodes_count}});
      Json sums = Json::array();
      std::vector<double> xs, ys;
      for (int m = 1; m <= *n; ++m) {
        VolumeEstimate v = restricted_graph_volume(lm.map, m, nodes, w);
        sums.push_back({{"n", m},
                        {"value", v.value},
                        {"std_error", v.std_error},
                        {"target", (std::pow(d, m) - 1.0) / (d - 1.0)}});
        xs.push_back(m);
        ys.push_back(std::log(v.value));
      }
      Json terms = Json::array();
      std::vector<double> txs, tys;
      for (const VolumeEstimate& t :
           restricted_volume_terms(lm.map, *n, nodes, w)) {
        terms.push_back({{"i", t.n},
                         {"value", t.value},
                         {"std_error", t.std_error},
                         {"target", std::pow(d, t.n)}});
        txs.push_back(t.n);
        tys.push_back(std::log(t.value));
      }
      rep["sums"] = sums;
      rep["terms"] = terms;
      rep["estimates"] = {{"sum_slope", fit_slope(xs, ys).slope},
                         {"term_slope", fit_slope(txs, tys).slope}};
      rep["targets"] = {{"term_slope_exact",
                        (lm.map.k - 1) * std::log(d)},
                       {"full_volume_slope", lm.map.k * std::log(d)}};
      rep["tolerances"] = {{"term_slope_relative", 0.10}};
      emit_report(out_dir, "lov-restricted", rep);
    });
  }

  // --- jacobian-check -------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("jacobian-check",
                                       "compare ball masses with d^{-k} times "
                                       "image masses on injective patches");
    need_map(sub);
    auto mf = std::make_shared<MeasureFlags>();
    mf->n = 14;
    auto patches = std::make_shared<int>(50);
    auto radius = std::make_shared<double>(0.05);
    sub->add_option("--patches", *patches, "patch count");
    sub->add_option("--radius", *radius, "patch radius");
    add_measure_flags(sub, *mf);
    sub->callback([&, mf, patches, radius] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      EmpiricalMeasure mu = build_measure(lm.map, *mf, seed);
      Rng rng = make_rng(derive_seed(seed, 2));
      double dev =
          jacobian_constant_check(lm.map, mu, *patches, rng, *radius);
      Json opts = measure_options_json(*mf);
      opts["patches"] = *patches;
      opts["radius"] = *radius;
      Json rep = envelope("jacobian-check", map_path, lm.hash, seed, opts);
      rep["estimates"] = {{"max_deviation", dev}};
      rep["targets"] = {{"jacobian",
                        std::pow(static_cast<double>(lm.map.d), lm.map.k)}};
      rep["tolerances"] = {{"deviation", 0.15}};
      emit_report(out_dir, "jacobian-check", rep);
    });
  }

  // --- sigma-count ----------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("sigma-count",
                                       "exact count of words whose marked "
                                       "symbol beats frequency sigma");
    sub->add_option("--map", map_path, "map JSON file (alphabet size d^k)");
    auto base_opt = std::make_shared<int>(0);
    auto n = std::make_shared<int>(60);
    auto sigma_v = std::make_shared<double>(0.3);
    sub->add_option("--base", *base_opt, "alphabet size, overrides --map");
    sub->add_option("--n", *n, "word length");
    sub->add_option("--sigma", *sigma_v, "frequency threshold");
    sub->callback([&, base_opt, n, sigma_v] {
      set_thread_count(threads);
      int base = *base_opt;
      std::string hash;
      if (base == 0) {
        require(!map_path.empty(), "SchemaError",
                "sigma-count needs --map or --base");
        LoadedMap lm = load_map(map_path);
        hash = lm.hash;
        base = 1;
        for (int i = 0; i < lm.map.k; ++i) base *= lm.map.d;
      }
      BigInt count = sigma_count(base, *n, *sigma_v);
      double rate = std::log(count.convert_to<double>()) /
                    (*n * std::log(static_cast<double>(base)));
      double s = *sigma_v;
      double hs = s >= 1.0 ? 0.0 : -s * std::log(s) - (1.0 - s) * std::log(1.0 - s);
      double rho = (hs + (1.0 - s) * std::log(static_cast<double>(base - 1))) /
                   std::log(static_cast<double>(base));
      Json rep = envelope("sigma-count", map_path, hash, seed,
                          Json{{"base", base}, {"n", *n}, {"sigma", *sigma_v}});
      rep["estimates"] = {{"count", count.str()}, {"rate", rate}};
      rep["targets"] = {{"rate_limit", rho}, {"rate_upper_bound", 1.0}};
      emit_report(out_dir, "sigma-count", rep);
    });
  }

  // --- ljubich --------------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("ljubich",
                                       "inverse-branch counting, contraction, "
                                       "and area bounds over a disk");
    need_map(sub);
    auto center_str = std::make_shared<std::string>();
    auto line_str = std::make_shared<std::string>();
    auto delta_r = std::make_shared<double>(0.135);
    auto tilde_r = std::make_shared<double>(0.2);
    auto l = std::make_shared<int>(6);
    auto eps = std::make_shared<double>(0.2);
    auto n_min = std::make_shared<int>(2);
    auto n_max = std::make_shared<int>(6);
    auto rings = std::make_shared<int>(3);
    auto angles = std::make_shared<int>(12);
    auto budget = std::make_shared<std::uint64_t>(1ULL << 20);
    auto vl_samples = std::make_shared<std::size_t>(10000);
    sub->add_option("--center", *center_str, "disk center, chart coordinates")
        ->required();
    sub->add_option("--line", *line_str,
                    "carrier line for k=2, re,im per form coefficient");
    sub->add_option("--delta", *delta_r, "chordal radius of the small disk");
    sub->add_option("--tilde", *tilde_r, "chordal radius of the large disk");
    sub->add_option("--l", *l, "postcritical depth V_l to avoid");
    sub->add_option("--epsilon", *eps, "branch loss budget");
    sub->add_option("--n-min", *n_min, "smallest pullback depth");
    sub->add_option("--n-max", *n_max, "largest pullback depth");
    sub->add_option("--rings", *rings, "grid rings");
    sub->add_option("--angles", *angles, "grid angles");
    sub->add_option("--budget", *budget, "branch budget");
    sub->add_option("--vl-samples", *vl_samples, "postcritical samples");
    sub->callback([&, center_str, line_str, delta_r, tilde_r, l, eps, n_min,
                   n_max, rings, angles, budget, vl_samples] {
      set_thread_count(threads);
      LoadedMap lm = load_map(map_path);
      std::array<Cx, 3> line{Cx(0.0), Cx(0.0), Cx(0.0)};
      if (lm.map.k == 2) {
        require(!line_str->empty(), "SchemaError",
                "ljubich on P^2 needs --line");
        line = parse_form(*line_str);
      }
      std::vector<int> n_range;
      for (int n = *n_min; n <= *n_max; ++n) n_range.push_back(n);
      LjubichReport lr = ljubich_experiment(
          lm.map, line, parse_chart_point(*center_str, lm.map.k), *delta_r,
          *tilde_r, *l, n_range, *eps, *rings, *angles, *budget, *vl_samples,
          seed);
      Json rep = envelope("ljubich", map_path, lm.hash, seed,
                          Json{{"center", *center_str},
                               {"line", *line_str},
                               {"delta", *delta_r},
                               {"tilde", *tilde_r},
                               {"l", *l},
                               {"epsilon", *eps},
                               {"n_min", *n_min},
                               {"n_max", *n_max},
                               {"rings", *rings},
                               {"angles", *angles},
                               {"budget", *budget},
                               {"vl_samples", *vl_samples}});
      Json body = ljubich_report_to_json(lr);
      for (auto& el : body.items()) rep[el.key()] = el.value();
      rep["estimates"] = {{"diam_slope", lr.diam_slope}, {"c_hat", lr.c_hat}};
      rep["targets"] = {{"count_fraction", 1.0 - *eps},
                       {"diam_slope_upper_bound",
                        -0.5 * std::log(static_cast<double>(lm.map.d))}};
      rep["artifacts"] = {{"branch_diameters_csv", "ljubich.csv"}};
      emit_csv(out_dir, "ljubich", branch_diameters_csv(lr));
      emit_report(out_dir, "ljubich", rep);
    });
  }

  // --- disk-check -----------------------------------------------------------
  {
    CLI::App* sub = app.add_subcommand("disk-check",
                                       "area-diameter-modulus ratios over a "
                                       "random polynomial disk family");
    auto count = std::make_shared<int>(100);
    auto scale = std::make_shared<double>(0.25);
    auto inner = std::make_shared<double>(0.5);
    auto outer = std::make_shared<double>(1.0);
    sub->add_option("--count", *count, "family size (doubled for stability)");
    sub->add_option("--scale", *scale, "coefficient decay per degree");
    sub->add_option("--inner", *inner, "parameter radius of D");
    sub->add_option("--outer", *outer, "parameter radius of D~");
    sub->callback([&, count, scale, inner, outer] {
      set_thread_count(threads);
      double r = *inner, R = *outer;
      double baseline = 4.0 * r * r * annulus_modulus(r, R) / (R * R);
      Rng rng = make_rng(seed);
      std::vector<double> ratios;
      for (int t = 0; t < 2 * *count; ++t) {
        ParamDisk dsk;
        dsk.k = 1;
        double s = *scale;
        dsk.coeffs = {{gaussian_cx(rng), gaussian_cx(rng), Cx(0.0)},
                      {s * gaussian_cx(rng), s * gaussian_cx(rng), Cx(0.0)},
                      {s * s * gaussian_cx(rng), s * s * gaussian_cx(rng),
                       Cx(0.0)}};
        ratios.push_back(area_diameter_check(dsk, r, R));
      }
      double max_half = 0.0, max_all = 0.0;
      int flagged = 0;
      for (int t = 0; t < 2 * *count; ++t) {
        if (t < *count) max_half = std::max(max_half, ratios[static_cast<std::size_t>(t)]);
        max_all = std::max(max_all, ratios[static_cast<std::size_t>(t)]);
        if (ratios[static_cast<std::size_t>(t)] > 3.0 * baseline) ++flagged;
      }
      Json rep = envelope("disk-check", "", "", seed,
                          Json{{"count", *count},
                               {"scale", *scale},
                               {"inner", *inner},
                               {"outer", *outer}});
      rep["estimates"] = {{"fitted_c", max_all},
                         {"max_ratio_half_family", max_half},
                         {"doubling_drift", max_all / max_half - 1.0},
                         {"flagged", flagged}};
      rep["targets"] = {{"baseline_linear_family", baseline}};
      rep["tolerances"] = {{"doubling_drift", 0.10},
                          {"flag_threshold", 3.0 * baseline}};
      emit_report(out_dir, "disk-check", rep);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << Json{{"error", "SchemaError"}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << Json{{"error", e.code()}, {"message", e.what()}}.dump()
              << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << Json{{"error", "InternalError"}, {"message", e.what()}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
