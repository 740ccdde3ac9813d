#include "r2n/rules.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "r2n/error.hpp"
#include "r2n/join.hpp"

namespace r2n {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::uint64_t pair_key(EntityId x, EntityId y) {
  return (static_cast<std::uint64_t>(x) << 32) | y;
}

}  // namespace

std::size_t HornRule::num_variables() const {
  Variable top = std::max(head.subject, head.object);
  for (const auto& a : body) top = std::max({top, a.subject, a.object});
  return static_cast<std::size_t>(top) + 1;
}

std::string variable_name(Variable v) {
  if (v == kVarX) return "x";
  if (v == kVarY) return "y";
  return "z" + std::to_string(v - 1);
}

std::string rule_text(const HornRule& rule, const Vocabulary& relations) {
  auto atom = [&](const RuleAtom& a) {
    std::string s = relations.name(a.relation) + "(" + variable_name(a.subject);
    if (a.object != a.subject) s += "," + variable_name(a.object);
    return s + ")";
  };
  std::string out;
  for (std::size_t i = 0; i < rule.body.size(); ++i) {
    if (i) out += " & ";
    out += atom(rule.body[i]);
  }
  return out + " => " + atom(rule.head);
}

bool is_closed(const HornRule& rule) {
  std::vector<int> uses(rule.num_variables(), 0);
  for (std::size_t i = 0; i < rule.arity(); ++i) {
    const auto& a = rule.atom(i);
    ++uses[a.subject];
    ++uses[a.object];
  }
  return std::all_of(uses.begin(), uses.end(), [](int u) { return u == 0 || u >= 2; });
}

bool is_connected(const HornRule& rule) {
  const auto n = rule.arity();
  std::vector<bool> reached(n, false);
  reached[n - 1] = true;
  std::vector<bool> vars(rule.num_variables(), false);
  vars[rule.head.subject] = vars[rule.head.object] = true;
  bool grew = true;
  while (grew) {
    grew = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (reached[i]) continue;
      const auto& a = rule.atom(i);
      if (vars[a.subject] || vars[a.object]) {
        reached[i] = true;
        vars[a.subject] = vars[a.object] = true;
        grew = true;
      }
    }
  }
  return std::all_of(reached.begin(), reached.end(), [](bool r) { return r; });
}

HornRule canonicalize(HornRule rule) {
  auto cls = [](Variable v) -> Variable { return v < 2 ? v : Variable{2}; };
  std::stable_sort(rule.body.begin(), rule.body.end(),
                   [&](const RuleAtom& a, const RuleAtom& b) {
                     return std::tuple(a.relation, cls(a.subject), cls(a.object)) <
                            std::tuple(b.relation, cls(b.subject), cls(b.object));
                   });
  std::map<Variable, Variable> rename;
  Variable next = 2;
  auto map_var = [&](Variable v) -> Variable {
    if (v < 2) return v;
    auto [it, inserted] = rename.emplace(v, next);
    if (inserted) ++next;
    return it->second;
  };
  for (auto& a : rule.body) {
    a.subject = map_var(a.subject);
    a.object = map_var(a.object);
  }
  rule.head.subject = map_var(rule.head.subject);
  rule.head.object = map_var(rule.head.object);
  std::sort(rule.body.begin(), rule.body.end());
  return rule;
}

HornRule parse_rule(std::string_view text, const Vocabulary& relations) {
  struct RawAtom {
    std::string relation;
    std::string subject;
    std::string object;
  };
  auto parse_atom = [&](std::string_view s) {
    s = trim(s);
    auto open = s.find('(');
    auto close = s.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos ||
        close < open || close != s.size() - 1) {
      throw invalid_argument("malformed atom '" + std::string(s) + "'");
    }
    RawAtom a;
    a.relation = std::string(trim(s.substr(0, open)));
    auto args = s.substr(open + 1, close - open - 1);
    auto comma = args.find(',');
    a.subject = std::string(trim(args.substr(0, comma)));
    a.object = comma == std::string_view::npos
                   ? a.subject
                   : std::string(trim(args.substr(comma + 1)));
    if (a.relation.empty() || a.subject.empty() || a.object.empty()) {
      throw invalid_argument("malformed atom '" + std::string(s) + "'");
    }
    return a;
  };

  auto arrow = text.find("=>");
  if (arrow == std::string_view::npos) {
    throw invalid_argument("rule has no '=>': " + std::string(text));
  }
  std::vector<RawAtom> body;
  auto lhs = text.substr(0, arrow);
  while (!trim(lhs).empty()) {
    auto amp = lhs.find('&');
    body.push_back(parse_atom(lhs.substr(0, amp)));
    if (amp == std::string_view::npos) break;
    lhs = lhs.substr(amp + 1);
  }
  auto head = parse_atom(text.substr(arrow + 2));
  if (body.empty()) throw invalid_argument("rule has an empty body");

  std::map<std::string, Variable> vars;
  Variable next = 2;
  // Canonical names (x, y, z1, z2, ...) map to their own slots; anything
  // else is assigned from the head: subject x, object y, rest auxiliary.
  auto canonical_slot = [](const std::string& name) -> std::optional<Variable> {
    if (name == "x") return kVarX;
    if (name == "y") return kVarY;
    if (name.size() >= 2 && name[0] == 'z') {
      unsigned k = 0;
      auto [p, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), k);
      if (ec == std::errc() && p == name.data() + name.size() && k >= 1 && k < 200) {
        return static_cast<Variable>(k + 1);
      }
    }
    return std::nullopt;
  };
  bool canonical = canonical_slot(head.subject) && canonical_slot(head.object);
  for (const auto& a : body) {
    canonical = canonical && canonical_slot(a.subject) && canonical_slot(a.object);
  }
  if (canonical) {
    for (const auto& a : body) {
      vars[a.subject] = *canonical_slot(a.subject);
      vars[a.object] = *canonical_slot(a.object);
    }
    vars[head.subject] = *canonical_slot(head.subject);
    vars[head.object] = *canonical_slot(head.object);
  } else {
    vars[head.subject] = kVarX;
    if (!vars.contains(head.object)) vars[head.object] = kVarY;
  }
  auto var_of = [&](const std::string& name) {
    auto [it, inserted] = vars.emplace(name, next);
    if (inserted) ++next;
    return it->second;
  };
  auto resolve = [&](const RawAtom& a) {
    auto id = relations.find(a.relation);
    if (!id) throw invalid_argument("unknown relation '" + a.relation + "'");
    return RuleAtom{*id, var_of(a.subject), var_of(a.object)};
  };
  HornRule rule;
  rule.head = resolve(head);
  for (const auto& a : body) rule.body.push_back(resolve(a));
  return rule;
}

// --- statistics -------------------------------------------------------------

RuleCounts count_rule(const HornRule& rule, const KnowledgeGraph& kg) {
  const auto hx = rule.head.subject;
  const auto hy = rule.head.object;
  const auto r = rule.head.relation;
  RuleCounts counts;
  counts.head_count = kg.relation_count(r);
  std::unordered_set<std::uint64_t> pairs;
  for_each_binding(kg, rule.body, rule.num_variables(),
                   [&](std::span<const EntityId> b) {
                     if (b[hx] == kUnbound || b[hy] == kUnbound) {
                       throw invalid_argument("head variable not bound by body");
                     }
                     pairs.insert(pair_key(b[hx], b[hy]));
                   });
  counts.body_pairs = pairs.size();
  for (auto key : pairs) {
    auto x = static_cast<EntityId>(key >> 32);
    auto y = static_cast<EntityId>(key & 0xffffffffu);
    if (kg.contains(x, r, y)) ++counts.support;
    if (!kg.tails(x, r).empty()) ++counts.pca_pairs;
  }
  return counts;
}

RuleStats stats_from_counts(const RuleCounts& c) {
  auto undefined = [](const char* what) {
    return Error(ErrorKind::kUndefinedStatistic, what);
  };
  if (c.head_count == 0) throw undefined("head coverage undefined: head relation empty");
  if (c.body_pairs == 0) throw undefined("confidence undefined: body has no bindings");
  if (c.pca_pairs == 0) throw undefined("PCA confidence undefined: zero denominator");
  RuleStats s;
  s.support = c.support;
  s.head_coverage = static_cast<double>(c.support) / static_cast<double>(c.head_count);
  s.std_confidence = static_cast<double>(c.support) / static_cast<double>(c.body_pairs);
  s.pca_confidence = static_cast<double>(c.support) / static_cast<double>(c.pca_pairs);
  return s;
}

std::uint64_t support(const HornRule& rule, const KnowledgeGraph& kg) {
  return count_rule(rule, kg).support;
}

double head_coverage(const HornRule& rule, const KnowledgeGraph& kg) {
  auto c = count_rule(rule, kg);
  if (c.head_count == 0) {
    throw Error(ErrorKind::kUndefinedStatistic,
                "head coverage undefined: head relation empty");
  }
  return static_cast<double>(c.support) / static_cast<double>(c.head_count);
}

double std_confidence(const HornRule& rule, const KnowledgeGraph& kg) {
  auto c = count_rule(rule, kg);
  if (c.body_pairs == 0) {
    throw Error(ErrorKind::kUndefinedStatistic,
                "confidence undefined: body has no bindings");
  }
  return static_cast<double>(c.support) / static_cast<double>(c.body_pairs);
}

double pca_confidence(const HornRule& rule, const KnowledgeGraph& kg) {
  auto c = count_rule(rule, kg);
  if (c.pca_pairs == 0) {
    throw Error(ErrorKind::kUndefinedStatistic,
                "PCA confidence undefined: zero denominator");
  }
  return static_cast<double>(c.support) / static_cast<double>(c.pca_pairs);
}

// --- mining -----------------------------------------------------------------

namespace {

// Per-head-relation counters accumulated while scanning one body's distinct
// (x,y) pairs.
struct BodyScan {
  std::uint64_t body_pairs = 0;
  std::vector<std::uint64_t> support;
  std::vector<std::uint64_t> pca;

  explicit BodyScan(std::size_t n_rel) : support(n_rel, 0), pca(n_rel, 0) {}

  void visit(const KnowledgeGraph& kg, EntityId x, EntityId y) {
    ++body_pairs;
    for (RelationId r : kg.relations_between(x, y)) ++support[r];
    for (RelationId r : kg.subject_relations(x)) ++pca[r];
  }
};

class Miner {
 public:
  Miner(const KnowledgeGraph& kg, const MinerConfig& config)
      : kg_(kg), config_(config), stamp_(kg.num_entities(), 0) {}

  MinedRuleSet run() {
    std::vector<RelationId> rels;
    for (RelationId r = 0; r < kg_.num_relations(); ++r) {
      if (kg_.relation_count(r) > 0) rels.push_back(r);
    }
    if (config_.max_body_atoms >= 1) {
      for (RelationId a : rels) {
        for (bool flip : {false, true}) {
          RuleAtom atom = flip ? RuleAtom{a, kVarY, kVarX} : RuleAtom{a, kVarX, kVarY};
          scan_body({atom});
        }
      }
    }
    if (config_.max_body_atoms >= 2) {
      std::vector<RuleAtom> xy_atoms;
      for (RelationId a : rels) {
        xy_atoms.push_back({a, kVarX, kVarY});
        xy_atoms.push_back({a, kVarY, kVarX});
      }
      for (std::size_t i = 0; i < xy_atoms.size(); ++i) {
        for (std::size_t j = i + 1; j < xy_atoms.size(); ++j) {
          scan_body({xy_atoms[i], xy_atoms[j]});
        }
      }
      constexpr Variable z = 2;
      for (RelationId a : rels) {
        for (RelationId b : rels) {
          for (bool flip_a : {false, true}) {
            for (bool flip_b : {false, true}) {
              RuleAtom first = flip_a ? RuleAtom{a, z, kVarX} : RuleAtom{a, kVarX, z};
              RuleAtom second = flip_b ? RuleAtom{b, kVarY, z} : RuleAtom{b, z, kVarY};
              scan_body({first, second});
            }
          }
        }
      }
    }
    MinedRuleSet out;
    out.reserve(found_.size());
    for (auto& [rule, stats] : found_) out.push_back({rule, stats});
    return out;
  }

 private:
  void scan_body(std::vector<RuleAtom> body) {
    BodyScan scan(kg_.num_relations());
    if (body.size() == 1) {
      const auto& a = body[0];
      for (const auto& t : kg_.relation_triples(a.relation)) {
        if (a.subject == kVarX) {
          scan.visit(kg_, t.head, t.tail);
        } else {
          scan.visit(kg_, t.tail, t.head);
        }
      }
    } else if (body[0].subject < 2 && body[0].object < 2) {
      // Both atoms over {x,y}: scan the smaller, probe the other.
      auto [small, other] = kg_.relation_count(body[0].relation) <=
                                    kg_.relation_count(body[1].relation)
                                ? std::pair(body[0], body[1])
                                : std::pair(body[1], body[0]);
      for (const auto& t : kg_.relation_triples(small.relation)) {
        EntityId x = small.subject == kVarX ? t.head : t.tail;
        EntityId y = small.subject == kVarX ? t.tail : t.head;
        EntityId os = other.subject == kVarX ? x : y;
        EntityId oo = other.subject == kVarX ? y : x;
        if (kg_.contains(os, other.relation, oo)) scan.visit(kg_, x, y);
      }
    } else {
      scan_path(body[0], body[1], scan);
    }
    collect(body, scan);
  }

  // body = A over {x,z}, B over {z,y}; distinct y per x via a stamp array.
  void scan_path(const RuleAtom& first, const RuleAtom& second, BodyScan& scan) {
    std::vector<EntityId> ys;
    for (EntityId x = 0; x < kg_.num_entities(); ++x) {
      auto zs = first.subject == kVarX ? kg_.tails(x, first.relation)
                                       : kg_.heads(first.relation, x);
      if (zs.empty()) continue;
      ++epoch_;
      ys.clear();
      for (EntityId z : zs) {
        auto cands = second.subject == kVarY ? kg_.heads(second.relation, z)
                                             : kg_.tails(z, second.relation);
        for (EntityId y : cands) {
          if (stamp_[y] != epoch_) {
            stamp_[y] = epoch_;
            ys.push_back(y);
          }
        }
      }
      for (EntityId y : ys) scan.visit(kg_, x, y);
    }
  }

  void collect(const std::vector<RuleAtom>& body, const BodyScan& scan) {
    if (scan.body_pairs == 0) return;
    const auto min_support = std::max<std::uint64_t>(1, config_.min_support);
    for (RelationId r = 0; r < kg_.num_relations(); ++r) {
      if (scan.support[r] < min_support) continue;
      RuleAtom head{r, kVarX, kVarY};
      if (std::find(body.begin(), body.end(), head) != body.end()) continue;
      RuleCounts c;
      c.support = scan.support[r];
      c.head_count = kg_.relation_count(r);
      c.body_pairs = scan.body_pairs;
      c.pca_pairs = scan.pca[r];
      auto stats = stats_from_counts(c);
      if (stats.head_coverage < config_.min_head_coverage) continue;
      found_.emplace(canonicalize(HornRule{body, head}), stats);
    }
  }

  const KnowledgeGraph& kg_;
  MinerConfig config_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::map<HornRule, RuleStats> found_;
};

}  // namespace

MinedRuleSet mine(const KnowledgeGraph& kg, const MinerConfig& config) {
  if (config.min_head_coverage < 0.0) {
    throw invalid_argument("min_head_coverage must be non-negative");
  }
  if (config.max_body_atoms < 1 || config.max_body_atoms > 2) {
    throw invalid_argument("max_body_atoms must be 1 or 2");
  }
  return Miner(kg, config).run();
}

// --- selection & IO -----------------------------------------------------------

std::string criterion_name(RankCriterion c) {
  switch (c) {
    case RankCriterion::kHeadCoverage: return "hc";
    case RankCriterion::kStdConfidence: return "conf";
    case RankCriterion::kPcaConfidence: return "pca";
  }
  return "?";
}

RankCriterion parse_criterion(std::string_view name) {
  if (name == "hc" || name == "head_coverage") return RankCriterion::kHeadCoverage;
  if (name == "conf" || name == "std_confidence") return RankCriterion::kStdConfidence;
  if (name == "pca" || name == "pca_confidence") return RankCriterion::kPcaConfidence;
  throw invalid_argument("unknown rule criterion '" + std::string(name) + "'");
}

std::vector<MinedRule> select_top(const MinedRuleSet& rules,
                                  RankCriterion criterion, std::size_t n,
                                  const Vocabulary& relations) {
  auto score = [criterion](const RuleStats& s) {
    switch (criterion) {
      case RankCriterion::kHeadCoverage: return s.head_coverage;
      case RankCriterion::kStdConfidence: return s.std_confidence;
      case RankCriterion::kPcaConfidence: return s.pca_confidence;
    }
    return 0.0;
  };
  struct Keyed {
    double score;
    std::uint64_t support;
    std::string text;
    const MinedRule* rule;
  };
  std::vector<Keyed> keyed;
  keyed.reserve(rules.size());
  for (const auto& r : rules) {
    keyed.push_back({score(r.stats), r.stats.support, rule_text(r.rule, relations), &r});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.support != b.support) return a.support > b.support;
    return a.text < b.text;
  });
  std::vector<MinedRule> out;
  for (std::size_t i = 0; i < std::min(n, keyed.size()); ++i) out.push_back(*keyed[i].rule);
  return out;
}

void write_rules(std::ostream& out, std::span<const MinedRule> rules,
                 const Vocabulary& relations) {
  auto old_precision = out.precision(17);
  for (const auto& r : rules) {
    out << rule_text(r.rule, relations) << '\t' << r.stats.support << '\t'
        << r.stats.head_coverage << '\t' << r.stats.std_confidence << '\t'
        << r.stats.pca_confidence << '\n';
  }
  out.precision(old_precision);
}

MinedRuleSet read_rules(std::istream& in, const Vocabulary& relations,
                        const std::string& source_name) {
  MinedRuleSet out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      auto pos = line.find('\t', start);
      fields.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    MinedRule rule;
    try {
      rule.rule = canonicalize(parse_rule(fields[0], relations));
    } catch (const Error& e) {
      throw ParseError(source_name, lineno, e.what());
    }
    auto number = [&](std::size_t i, auto& dst) {
      if (i >= fields.size()) return;
      auto f = trim(fields[i]);
      std::istringstream s{std::string(f)};
      s >> dst;
      if (!s || !s.eof()) {
        throw ParseError(source_name, lineno, "bad number '" + std::string(f) + "'");
      }
    };
    number(1, rule.stats.support);
    number(2, rule.stats.head_coverage);
    number(3, rule.stats.std_confidence);
    number(4, rule.stats.pca_confidence);
    out.push_back(std::move(rule));
  }
  return out;
}

}  // namespace r2n
