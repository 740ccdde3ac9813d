#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "r2n/kg.hpp"

namespace r2n {

// Variable 0 is x, 1 is y, k >= 2 is z{k-1}.
using Variable = std::uint8_t;
inline constexpr Variable kVarX = 0;
inline constexpr Variable kVarY = 1;

struct RuleAtom {
  RelationId relation = 0;
  Variable subject = kVarX;
  Variable object = kVarY;

  friend auto operator<=>(const RuleAtom&, const RuleAtom&) = default;
};

// Horn clause body => head over binary predicates. A unary predicate P(v)
// is written as the atom P(v,v).
struct HornRule {
  std::vector<RuleAtom> body;
  RuleAtom head;

  std::size_t arity() const { return body.size() + 1; }
  // Atom at a factor position: body atoms first, head last.
  const RuleAtom& atom(std::size_t position) const {
    return position < body.size() ? body[position] : head;
  }
  std::size_t num_variables() const;

  friend auto operator<=>(const HornRule&, const HornRule&) = default;
};

std::string variable_name(Variable v);
std::string rule_text(const HornRule& rule, const Vocabulary& relations);

// Every variable appears in at least two atom positions.
bool is_closed(const HornRule& rule);
// Atoms are linked through shared variables.
bool is_connected(const HornRule& rule);
// Sorts body atoms and renumbers auxiliary variables in first-seen order.
HornRule canonicalize(HornRule rule);

// Parses `B1 & B2 => H`; atoms are `Rel(a,b)` or `Rel(a)`. The head's
// subject becomes x, its object y, any other name an auxiliary variable.
HornRule parse_rule(std::string_view text, const Vocabulary& relations);

struct RuleCounts {
  std::uint64_t support = 0;
  std::uint64_t head_count = 0;   // #(x',y') : R(x',y')
  std::uint64_t body_pairs = 0;   // #(x,y) : exists z. body
  std::uint64_t pca_pairs = 0;    // #(x,y) : exists z,y'. body & R(x,y')
};

struct RuleStats {
  std::uint64_t support = 0;
  double head_coverage = 0.0;
  double std_confidence = 0.0;
  double pca_confidence = 0.0;
};

RuleCounts count_rule(const HornRule& rule, const KnowledgeGraph& kg);
// Throws kUndefinedStatistic when any denominator is zero.
RuleStats stats_from_counts(const RuleCounts& counts);

std::uint64_t support(const HornRule& rule, const KnowledgeGraph& kg);
double head_coverage(const HornRule& rule, const KnowledgeGraph& kg);
double std_confidence(const HornRule& rule, const KnowledgeGraph& kg);
double pca_confidence(const HornRule& rule, const KnowledgeGraph& kg);

struct MinedRule {
  HornRule rule;
  RuleStats stats;
};

using MinedRuleSet = std::vector<MinedRule>;

struct MinerConfig {
  int max_body_atoms = 2;
  std::uint64_t min_support = 10;
  double min_head_coverage = 0.01;
};

// Exhaustive over closed, connected, constant-free rules with head R(x,y)
// and 1..max_body_atoms body atoms; atoms never repeat a variable. Rules
// with zero support are never reported, whatever min_support says.
MinedRuleSet mine(const KnowledgeGraph& kg, const MinerConfig& config);

enum class RankCriterion { kHeadCoverage, kStdConfidence, kPcaConfidence };

std::string criterion_name(RankCriterion c);
RankCriterion parse_criterion(std::string_view name);

// Descending by criterion, then higher support, then rule text.
std::vector<MinedRule> select_top(const MinedRuleSet& rules,
                                  RankCriterion criterion, std::size_t n,
                                  const Vocabulary& relations);

void write_rules(std::ostream& out, std::span<const MinedRule> rules,
                 const Vocabulary& relations);
// Statistic columns are optional; missing ones read as zero.
MinedRuleSet read_rules(std::istream& in, const Vocabulary& relations,
                        const std::string& source_name = "<rules>");

}  // namespace r2n
