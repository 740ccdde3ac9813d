#pragma once

#include <algorithm>
#include <limits>
#include <span>
#include <vector>

#include "r2n/kg.hpp"
#include "r2n/rules.hpp"

namespace r2n {

inline constexpr EntityId kUnbound = std::numeric_limits<EntityId>::max();

// Join order for a conjunction of atoms: start from the smallest relation,
// then repeatedly take the atom with the most already-bound variables.
inline std::vector<std::size_t> plan_join(const KnowledgeGraph& kg,
                                          std::span<const RuleAtom> atoms,
                                          std::size_t num_vars) {
  std::vector<std::size_t> order;
  std::vector<bool> used(atoms.size(), false);
  std::vector<bool> bound(num_vars, false);
  for (std::size_t step = 0; step < atoms.size(); ++step) {
    std::size_t best = atoms.size();
    int best_bound = -1;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (used[i]) continue;
      int nb = (bound[atoms[i].subject] ? 1 : 0) + (bound[atoms[i].object] ? 1 : 0);
      auto count = kg.relation_count(atoms[i].relation);
      if (nb > best_bound || (nb == best_bound && count < best_count)) {
        best = i;
        best_bound = nb;
        best_count = count;
      }
    }
    used[best] = true;
    bound[atoms[best].subject] = bound[atoms[best].object] = true;
    order.push_back(best);
  }
  return order;
}

// Calls fn(std::span<const EntityId> binding) for every assignment of the
// variables mentioned by `atoms` that satisfies all of them in kg.
// Variables not mentioned stay kUnbound. Enumeration order is
// deterministic for a fixed graph.
template <typename Fn>
void for_each_binding(const KnowledgeGraph& kg, std::span<const RuleAtom> atoms,
                      std::size_t num_vars, Fn&& fn) {
  std::vector<EntityId> b(num_vars, kUnbound);
  if (atoms.empty()) {
    fn(std::span<const EntityId>(b));
    return;
  }
  const auto order = plan_join(kg, atoms, num_vars);
  auto step = [&](auto& self, std::size_t k) -> void {
    if (k == order.size()) {
      fn(std::span<const EntityId>(b));
      return;
    }
    const auto& a = atoms[order[k]];
    const EntityId s = b[a.subject];
    const EntityId o = b[a.object];
    if (s != kUnbound && o != kUnbound) {
      if (kg.contains(s, a.relation, o)) self(self, k + 1);
    } else if (s != kUnbound) {
      for (EntityId t : kg.tails(s, a.relation)) {
        b[a.object] = t;
        self(self, k + 1);
      }
      b[a.object] = kUnbound;
    } else if (o != kUnbound) {
      for (EntityId h : kg.heads(a.relation, o)) {
        b[a.subject] = h;
        self(self, k + 1);
      }
      b[a.subject] = kUnbound;
    } else {
      for (const auto& t : kg.relation_triples(a.relation)) {
        if (a.subject == a.object && t.head != t.tail) continue;
        b[a.subject] = t.head;
        b[a.object] = t.tail;
        self(self, k + 1);
      }
      b[a.subject] = kUnbound;
      b[a.object] = kUnbound;
    }
  };
  step(step, 0);
}

}  // namespace r2n
