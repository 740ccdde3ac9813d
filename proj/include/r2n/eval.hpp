#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2n/kg.hpp"
#include "r2n/reasoning.hpp"
#include "r2n/rules.hpp"

namespace r2n {

enum class RankMode { kRaw, kFiltered };
enum class Side { kHead, kTail, kBoth };

std::string mode_name(RankMode m);
RankMode parse_mode(std::string_view name);
std::string side_name(Side s);
Side parse_side(std::string_view name);

struct RankingProtocol {
  RankMode mode = RankMode::kFiltered;
  Side side = Side::kBoth;
};

// Scores a batch of triples; higher means more plausible.
using ScoreFn = std::function<std::vector<double>(std::span<const Triple>)>;

ScoreFn kge_scorer(const KGEModel& model);
ScoreFn r2n_scorer(R2NModel& model, const FactorGraph* graph, CandidateWiring wiring);

// 1-based rank of the true entity when corrupting `side` (head or tail)
// over all entities. Ties count as the mean position of the tied block:
// 1 + #higher + #tied/2. In filtered mode candidates in `known` other than
// the query are dropped.
double rank_query(const ScoreFn& score, const Triple& query, Side side, RankMode mode,
                  const TripleSet* known, std::size_t n_entities);

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t n_queries = 0;
};

struct MetricsReport {
  Metrics overall;
  std::map<RelationId, Metrics> per_relation;
};

Metrics metrics_from_ranks(std::span<const double> ranks);

// With Side::kBoth every test triple contributes a head and a tail query.
MetricsReport evaluate(const ScoreFn& score, std::span<const Triple> test,
                       const RankingProtocol& protocol, const TripleSet* known,
                       std::size_t n_entities);

// Throws kNumeric unless 0 <= h1 <= h3 <= h10 <= 1 and h1 <= mrr <= 1.
void check_metrics(const Metrics& m);

inline constexpr const char* kMetricsCsvHeader =
    "criterion,n_rules,seed,mrr,hits1,hits3,hits10,n_queries";

void write_metrics_row(std::ostream& out, const std::string& criterion, std::size_t n_rules,
                       std::uint64_t seed, const Metrics& m);
void write_per_relation_csv(std::ostream& out, const MetricsReport& report,
                            const Vocabulary& relations);

struct AblationCell {
  std::string criterion;  // "kge" for the N = 0 baseline row
  std::size_t n_rules = 0;
  std::uint64_t seed = 0;
  std::optional<Metrics> metrics;
  std::string error;
};

// Runs one training + evaluation for a (criterion, N, seed) cell; N = 0 is
// the KGE-only baseline.
using AblationRunner =
    std::function<Metrics(std::optional<RankCriterion>, std::size_t n_rules, std::uint64_t seed)>;

// One N = 0 row per seed, then every (criterion, N, seed) with N > 0.
// A failing cell is recorded and the grid continues.
std::vector<AblationCell> run_ablation(std::span<const RankCriterion> criteria,
                                       std::span<const std::size_t> rule_counts,
                                       std::span<const std::uint64_t> seeds,
                                       const AblationRunner& runner);

// Failed cells have NA metrics and n_queries 0.
void write_ablation_csv(std::ostream& out, std::span<const AblationCell> cells);

}  // namespace r2n
