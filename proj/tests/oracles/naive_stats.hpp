#pragma once

// Triple-scan reference for relation properties.

#include <cstdint>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

namespace oracle {

struct Props {
  double reflexive = 0.0;
  double symmetric = 0.0;
  std::optional<double> transitive;
};

// Percentages; `facts` holds distinct (h, t) pairs of one relation.
inline Props naive_props(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& facts) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> set(facts.begin(), facts.end());
  std::set<std::uint32_t> active;
  std::size_t refl = 0, sym = 0;
  for (const auto& [h, t] : set) {
    active.insert(h);
    active.insert(t);
    if (h == t) ++refl;
    if (set.count({t, h})) ++sym;
  }
  std::size_t premises = 0, held = 0;
  for (const auto& [x, y1] : set) {
    for (const auto& [y2, z] : set) {
      if (y1 != y2) continue;
      ++premises;
      if (set.count({x, z})) ++held;
    }
  }
  Props p;
  p.reflexive = 100.0 * static_cast<double>(refl) / static_cast<double>(active.size());
  p.symmetric = 100.0 * static_cast<double>(sym) / static_cast<double>(set.size());
  if (premises > 0) p.transitive = 100.0 * static_cast<double>(held) / static_cast<double>(premises);
  return p;
}

}  // namespace oracle
