#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "r2n/kg.hpp"
#include "r2n/rules.hpp"

namespace r2n {

using AtomId = std::uint32_t;
using FactorId = std::uint32_t;

enum class AtomLabel : std::uint8_t { kKnownTrue = 0, kUnknown = 1 };

struct GroundAtom {
  Triple triple;
  AtomLabel label = AtomLabel::kUnknown;
};

// Edge from an atom to a factor it participates in.
struct AtomEdge {
  FactorId factor = 0;
  std::uint32_t rule = 0;
  std::uint32_t position = 0;
};

// Deduplicated set of ground atoms with dense ids.
class AtomUniverse {
 public:
  // Returns the existing id when the triple is already present. A known-true
  // label is never downgraded.
  AtomId add(const Triple& t, AtomLabel label);
  std::optional<AtomId> find(const Triple& t) const;
  const GroundAtom& atom(AtomId id) const { return atoms_.at(id); }
  const std::vector<GroundAtom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }

 private:
  std::vector<GroundAtom> atoms_;
  std::unordered_map<Triple, AtomId, TripleHash> index_;
};

// Training atoms first (known-true), then query atoms not in train
// (unknown), in input order.
AtomUniverse atom_universe(std::span<const Triple> train,
                           std::span<const Triple> queries);

// Bipartite graph of ground atoms and rule groundings. Factor atoms are in
// rule-position order: body atoms, then head.
class FactorGraph {
 public:
  FactorGraph() = default;
  FactorGraph(std::vector<HornRule> rules, AtomUniverse universe);

  const std::vector<HornRule>& rules() const { return rules_; }
  const AtomUniverse& universe() const { return universe_; }
  std::size_t num_atoms() const { return universe_.size(); }
  std::size_t num_factors() const { return factor_rule_.size(); }
  std::optional<AtomId> find(const Triple& t) const { return universe_.find(t); }
  const GroundAtom& atom(AtomId id) const { return universe_.atom(id); }

  std::uint32_t factor_rule(FactorId f) const { return factor_rule_.at(f); }
  // Throws on unknown ids.
  std::span<const AtomId> factor_atoms(FactorId f) const;
  std::span<const AtomEdge> atom_factors(AtomId a) const;
  // Factors of one rule, ascending.
  std::span<const FactorId> rule_factors(std::uint32_t rule) const;

  // Mutation; the adjacency is rebuilt by freeze().
  AtomId add_atom(const Triple& t, AtomLabel label);
  FactorId add_factor(std::uint32_t rule, std::span<const AtomId> atoms);
  void freeze();
  bool frozen() const { return frozen_; }

  friend bool operator==(const FactorGraph& a, const FactorGraph& b);

 private:
  std::vector<HornRule> rules_;
  AtomUniverse universe_;
  std::vector<std::uint32_t> factor_rule_;
  std::vector<std::uint32_t> factor_offsets_{0};
  std::vector<AtomId> factor_atoms_;

  bool frozen_ = false;
  std::vector<std::uint32_t> atom_offsets_;
  std::vector<AtomEdge> atom_edges_;
  std::vector<std::uint32_t> rule_offsets_;
  std::vector<FactorId> rule_factor_list_;
};

struct GroundingConfig {
  bool premise_filter = true;
  // Allow distinct variables to take the same constant (x = y bindings).
  bool allow_repeated_constants = true;
  // Unfiltered grounding enumerates |E|^|vars| bindings; refuse above this.
  std::size_t max_entities_unfiltered = 64;
};

// Rules are canonicalized and sorted by text before grounding, so rule ids
// and factor order do not depend on input order.
FactorGraph ground_rules(std::span<const HornRule> rules,
                         const KnowledgeGraph& train, AtomUniverse universe,
                         const GroundingConfig& config = {});

// Line-oriented container, header `R2NFG <version>`.
void write_factor_graph(std::ostream& out, const FactorGraph& graph,
                        const Vocabulary& relations);
FactorGraph read_factor_graph(std::istream& in, const Vocabulary& relations);

}  // namespace r2n
