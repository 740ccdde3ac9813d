#include "r2n/grounding.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "r2n/error.hpp"
#include "r2n/join.hpp"

namespace r2n {

namespace {

constexpr int kFormatVersion = 1;

Error format_error(const std::string& what) {
  return Error(ErrorKind::kFormat, "factor graph: " + what);
}

}  // namespace

AtomId AtomUniverse::add(const Triple& t, AtomLabel label) {
  auto [it, inserted] = index_.emplace(t, static_cast<AtomId>(atoms_.size()));
  if (inserted) {
    atoms_.push_back({t, label});
  } else if (label == AtomLabel::kKnownTrue) {
    atoms_[it->second].label = AtomLabel::kKnownTrue;
  }
  return it->second;
}

std::optional<AtomId> AtomUniverse::find(const Triple& t) const {
  auto it = index_.find(t);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

AtomUniverse atom_universe(std::span<const Triple> train,
                           std::span<const Triple> queries) {
  AtomUniverse u;
  for (const auto& t : train) u.add(t, AtomLabel::kKnownTrue);
  for (const auto& t : queries) u.add(t, AtomLabel::kUnknown);
  return u;
}

// --- FactorGraph --------------------------------------------------------------

FactorGraph::FactorGraph(std::vector<HornRule> rules, AtomUniverse universe)
    : rules_(std::move(rules)), universe_(std::move(universe)) {}

AtomId FactorGraph::add_atom(const Triple& t, AtomLabel label) {
  frozen_ = false;
  return universe_.add(t, label);
}

FactorId FactorGraph::add_factor(std::uint32_t rule, std::span<const AtomId> atoms) {
  if (rule >= rules_.size()) throw invalid_argument("factor references unknown rule");
  if (atoms.size() != rules_[rule].arity()) {
    throw invalid_argument("factor arity does not match its rule");
  }
  for (AtomId a : atoms) {
    if (a >= universe_.size()) throw invalid_argument("factor references unknown atom");
  }
  frozen_ = false;
  factor_rule_.push_back(rule);
  factor_atoms_.insert(factor_atoms_.end(), atoms.begin(), atoms.end());
  factor_offsets_.push_back(static_cast<std::uint32_t>(factor_atoms_.size()));
  return static_cast<FactorId>(factor_rule_.size() - 1);
}

void FactorGraph::freeze() {
  const auto n_atoms = universe_.size();
  atom_offsets_.assign(n_atoms + 1, 0);
  for (AtomId a : factor_atoms_) ++atom_offsets_[a + 1];
  std::partial_sum(atom_offsets_.begin(), atom_offsets_.end(), atom_offsets_.begin());
  atom_edges_.assign(factor_atoms_.size(), {});
  auto cursor = atom_offsets_;
  for (FactorId f = 0; f < factor_rule_.size(); ++f) {
    for (std::uint32_t i = factor_offsets_[f]; i < factor_offsets_[f + 1]; ++i) {
      auto a = factor_atoms_[i];
      atom_edges_[cursor[a]++] = {f, factor_rule_[f], i - factor_offsets_[f]};
    }
  }
  rule_offsets_.assign(rules_.size() + 1, 0);
  for (auto r : factor_rule_) ++rule_offsets_[r + 1];
  std::partial_sum(rule_offsets_.begin(), rule_offsets_.end(), rule_offsets_.begin());
  rule_factor_list_.assign(factor_rule_.size(), 0);
  auto rcursor = rule_offsets_;
  for (FactorId f = 0; f < factor_rule_.size(); ++f) {
    rule_factor_list_[rcursor[factor_rule_[f]]++] = f;
  }
  frozen_ = true;
}

std::span<const AtomId> FactorGraph::factor_atoms(FactorId f) const {
  if (f >= factor_rule_.size()) {
    throw invalid_argument("unknown factor id " + std::to_string(f));
  }
  return std::span<const AtomId>(factor_atoms_)
      .subspan(factor_offsets_[f], factor_offsets_[f + 1] - factor_offsets_[f]);
}

std::span<const AtomEdge> FactorGraph::atom_factors(AtomId a) const {
  if (a >= universe_.size()) {
    throw invalid_argument("unknown atom id " + std::to_string(a));
  }
  if (!frozen_) throw invalid_argument("factor graph not frozen");
  return std::span<const AtomEdge>(atom_edges_)
      .subspan(atom_offsets_[a], atom_offsets_[a + 1] - atom_offsets_[a]);
}

std::span<const FactorId> FactorGraph::rule_factors(std::uint32_t rule) const {
  if (rule >= rules_.size()) throw invalid_argument("unknown rule id");
  if (!frozen_) throw invalid_argument("factor graph not frozen");
  return std::span<const FactorId>(rule_factor_list_)
      .subspan(rule_offsets_[rule], rule_offsets_[rule + 1] - rule_offsets_[rule]);
}

bool operator==(const FactorGraph& a, const FactorGraph& b) {
  if (a.rules_ != b.rules_ || a.factor_rule_ != b.factor_rule_ ||
      a.factor_atoms_ != b.factor_atoms_ || a.universe_.size() != b.universe_.size()) {
    return false;
  }
  for (AtomId i = 0; i < a.universe_.size(); ++i) {
    const auto& x = a.universe_.atom(i);
    const auto& y = b.universe_.atom(i);
    if (x.triple != y.triple || x.label != y.label) return false;
  }
  return true;
}

// --- grounding ----------------------------------------------------------------

FactorGraph ground_rules(std::span<const HornRule> rules, const KnowledgeGraph& train,
                         AtomUniverse universe, const GroundingConfig& config) {
  std::vector<std::pair<std::string, HornRule>> keyed;
  for (const auto& r : rules) {
    auto c = canonicalize(r);
    keyed.emplace_back(rule_text(c, train.relations()), std::move(c));
  }
  std::sort(keyed.begin(), keyed.end());
  keyed.erase(std::unique(keyed.begin(), keyed.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; }),
              keyed.end());
  std::vector<HornRule> sorted;
  for (auto& [text, rule] : keyed) sorted.push_back(std::move(rule));

  if (!config.premise_filter && train.num_entities() > config.max_entities_unfiltered) {
    throw invalid_argument(
        "unfiltered grounding refused: " + std::to_string(train.num_entities()) +
        " entities exceeds the bound of " +
        std::to_string(config.max_entities_unfiltered));
  }

  FactorGraph graph(sorted, std::move(universe));
  std::vector<AtomId> atoms;
  for (std::uint32_t j = 0; j < sorted.size(); ++j) {
    const auto& rule = sorted[j];
    const auto n_vars = rule.num_variables();
    auto emit = [&](std::span<const EntityId> b) {
      if (!config.allow_repeated_constants) {
        for (std::size_t u = 0; u < n_vars; ++u) {
          for (std::size_t v = u + 1; v < n_vars; ++v) {
            if (b[u] != kUnbound && b[u] == b[v]) return;
          }
        }
      }
      atoms.clear();
      for (std::size_t i = 0; i < rule.arity(); ++i) {
        const auto& a = rule.atom(i);
        Triple t{b[a.subject], a.relation, b[a.object]};
        atoms.push_back(graph.add_atom(
            t, train.contains(t) ? AtomLabel::kKnownTrue : AtomLabel::kUnknown));
      }
      graph.add_factor(j, atoms);
    };

    if (config.premise_filter) {
      std::vector<bool> bound(n_vars, false);
      for (const auto& a : rule.body) bound[a.subject] = bound[a.object] = true;
      if (!bound[rule.head.subject] || !bound[rule.head.object]) {
        throw invalid_argument("rule head variable not bound by its body: " +
                               rule_text(rule, train.relations()));
      }
      for_each_binding(train, rule.body, n_vars, emit);
    } else {
      const auto n_ent = static_cast<EntityId>(train.num_entities());
      if (n_ent == 0) continue;
      std::vector<EntityId> b(n_vars, 0);
      bool done = false;
      while (!done) {
        emit(b);
        done = true;
        for (std::size_t k = n_vars; k-- > 0;) {
          if (++b[k] < n_ent) {
            done = false;
            break;
          }
          b[k] = 0;
        }
      }
    }
  }
  graph.freeze();
  return graph;
}

// --- serialization -------------------------------------------------------------

void write_factor_graph(std::ostream& out, const FactorGraph& graph,
                        const Vocabulary& relations) {
  out << "R2NFG " << kFormatVersion << '\n';
  out << "relations " << relations.size() << '\n';
  out << "rules " << graph.rules().size() << '\n';
  for (const auto& r : graph.rules()) {
    out << r.head.relation << ' ' << int(r.head.subject) << ' ' << int(r.head.object)
        << ' ' << r.body.size();
    for (const auto& a : r.body) {
      out << ' ' << a.relation << ' ' << int(a.subject) << ' ' << int(a.object);
    }
    out << "\t# " << rule_text(r, relations) << '\n';
  }
  out << "atoms " << graph.num_atoms() << '\n';
  for (const auto& a : graph.universe().atoms()) {
    out << a.triple.head << ' ' << a.triple.relation << ' ' << a.triple.tail << ' '
        << static_cast<int>(a.label) << '\n';
  }
  out << "factors " << graph.num_factors() << '\n';
  for (FactorId f = 0; f < graph.num_factors(); ++f) {
    auto atoms = graph.factor_atoms(f);
    out << graph.factor_rule(f) << ' ' << atoms.size();
    for (auto a : atoms) out << ' ' << a;
    out << '\n';
  }
}

FactorGraph read_factor_graph(std::istream& in, const Vocabulary& relations) {
  std::string line;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw format_error("unexpected end of input");
    auto hash = line.find('#');
    return std::istringstream(hash == std::string::npos ? line : line.substr(0, hash));
  };
  auto expect = [&](const char* key) {
    auto s = next_line();
    std::string word;
    std::size_t n = 0;
    if (!(s >> word >> n) || word != key) {
      throw format_error(std::string("expected '") + key + "' header");
    }
    return n;
  };
  {
    auto s = next_line();
    std::string magic;
    int version = 0;
    if (!(s >> magic >> version) || magic != "R2NFG") throw format_error("bad magic");
    if (version != kFormatVersion) {
      throw format_error("unsupported version " + std::to_string(version));
    }
  }
  if (expect("relations") != relations.size()) {
    throw format_error("relation vocabulary size mismatch");
  }
  auto n_rules = expect("rules");
  std::vector<HornRule> rules;
  auto read_atom = [&](std::istringstream& s) {
    unsigned r = 0, sub = 0, obj = 0;
    if (!(s >> r >> sub >> obj)) throw format_error("bad rule atom");
    if (r >= relations.size()) throw format_error("rule relation out of range");
    return RuleAtom{r, static_cast<Variable>(sub), static_cast<Variable>(obj)};
  };
  for (std::size_t i = 0; i < n_rules; ++i) {
    auto s = next_line();
    HornRule rule;
    rule.head = read_atom(s);
    std::size_t n_body = 0;
    if (!(s >> n_body)) throw format_error("bad rule body size");
    for (std::size_t k = 0; k < n_body; ++k) rule.body.push_back(read_atom(s));
    rules.push_back(std::move(rule));
  }
  auto n_atoms = expect("atoms");
  AtomUniverse universe;
  for (std::size_t i = 0; i < n_atoms; ++i) {
    auto s = next_line();
    Triple t;
    int label = 0;
    if (!(s >> t.head >> t.relation >> t.tail >> label) || label < 0 || label > 1) {
      throw format_error("bad atom record");
    }
    if (universe.add(t, static_cast<AtomLabel>(label)) != i) {
      throw format_error("duplicate atom record");
    }
  }
  FactorGraph graph(std::move(rules), std::move(universe));
  auto n_factors = expect("factors");
  std::vector<AtomId> atoms;
  for (std::size_t i = 0; i < n_factors; ++i) {
    auto s = next_line();
    std::uint32_t rule = 0;
    std::size_t k = 0;
    if (!(s >> rule >> k)) throw format_error("bad factor record");
    atoms.resize(k);
    for (auto& a : atoms) {
      if (!(s >> a)) throw format_error("bad factor record");
    }
    try {
      graph.add_factor(rule, atoms);
    } catch (const Error& e) {
      throw format_error(e.what());
    }
  }
  graph.freeze();
  return graph;
}

}  // namespace r2n
