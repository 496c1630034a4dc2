#pragma once

#include <utility>
#include <vector>

#include "equidyn/core.hpp"
#include "equidyn/proj.hpp"

namespace equidyn {

enum class MeasureProvenance { tree, backward_sample, cesaro, external };

inline const char* provenance_name(MeasureProvenance p) {
  switch (p) {
    case MeasureProvenance::tree: return "tree";
    case MeasureProvenance::backward_sample: return "backward-sample";
    case MeasureProvenance::cesaro: return "cesaro";
    default: return "external";
  }
}

// Finitely supported probability measure; atoms kept in canonical order with
// duplicates merged.
struct EmpiricalMeasure {
  int k = 1;
  std::vector<ProjPoint> atoms;
  std::vector<double> weights;
  MeasureProvenance provenance = MeasureProvenance::external;
};

inline double total_mass(const EmpiricalMeasure& m) {
  return sum_in_order(m.weights);
}

// Canonical sort + adjacent merge; exact renormalization to mass one.
inline EmpiricalMeasure make_measure(int k, std::vector<ProjPoint> atoms,
                                     std::vector<double> weights,
                                     MeasureProvenance provenance) {
  require(atoms.size() == weights.size() && !atoms.empty(), "SchemaError",
          "atom/weight count mismatch");
  std::vector<std::size_t> order(atoms.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return canonical_less(atoms[a], atoms[b]);
  });
  EmpiricalMeasure m;
  m.k = k;
  m.provenance = provenance;
  for (double w : weights) {
    require(w > 0.0, "SchemaError", "weights must be positive");
  }
  detail::merge_sorted_clusters(
      order.size(),
      [&](std::size_t p) -> const ProjPoint& { return atoms[order[p]]; },
      kPointEqualityTol, [&](const std::vector<std::size_t>& members) {
        double w = 0.0;
        for (std::size_t p : members) w += weights[order[p]];
        m.atoms.push_back(atoms[order[members.front()]]);
        m.weights.push_back(w);
      });
  double mass = total_mass(m);
  require(mass > 0.0, "SchemaError", "measure has no mass");
  for (double& w : m.weights) w /= mass;
  return m;
}

inline EmpiricalMeasure delta_measure(const ProjPoint& x) {
  return make_measure(x.k, {x}, {1.0}, MeasureProvenance::external);
}

}  // namespace equidyn
