#include "r2n/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>

#include "r2n/error.hpp"

namespace r2n {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void write_number(std::ostream& out, double v) {
  out << std::setprecision(10) << v;
}

}  // namespace

std::string mode_name(RankMode m) { return m == RankMode::kRaw ? "raw" : "filtered"; }

RankMode parse_mode(std::string_view name) {
  const auto s = lower(name);
  if (s == "raw") return RankMode::kRaw;
  if (s == "filtered") return RankMode::kFiltered;
  throw invalid_argument("unknown ranking mode '" + std::string(name) + "' (raw|filtered)");
}

std::string side_name(Side s) {
  switch (s) {
    case Side::kHead: return "head";
    case Side::kTail: return "tail";
    case Side::kBoth: return "both";
  }
  return "?";
}

Side parse_side(std::string_view name) {
  const auto s = lower(name);
  if (s == "head") return Side::kHead;
  if (s == "tail") return Side::kTail;
  if (s == "both") return Side::kBoth;
  throw invalid_argument("unknown corruption side '" + std::string(name) + "' (head|tail|both)");
}

ScoreFn kge_scorer(const KGEModel& model) {
  return [&model](std::span<const Triple> ts) {
    std::vector<double> out;
    out.reserve(ts.size());
    for (const auto& t : ts) out.push_back(model.score(t));
    return out;
  };
}

ScoreFn r2n_scorer(R2NModel& model, const FactorGraph* graph, CandidateWiring wiring) {
  return [&model, graph, wiring](std::span<const Triple> ts) {
    return model.predict(graph, ts, wiring);
  };
}

double rank_query(const ScoreFn& score, const Triple& query, Side side, RankMode mode,
                  const TripleSet* known, std::size_t n_entities) {
  if (side == Side::kBoth) throw invalid_argument("rank_query needs a single side");
  if (mode == RankMode::kFiltered && known == nullptr) {
    throw invalid_argument("filtered ranking needs the known-triple set");
  }
  std::vector<Triple> candidates;
  candidates.reserve(n_entities);
  candidates.push_back(query);
  for (EntityId e = 0; e < n_entities; ++e) {
    Triple c = query;
    (side == Side::kHead ? c.head : c.tail) = e;
    if (c == query) continue;
    if (mode == RankMode::kFiltered && known->contains(c)) continue;
    candidates.push_back(c);
  }
  const auto scores = score(candidates);
  if (scores.size() != candidates.size()) {
    throw Error(ErrorKind::kShape, "scorer returned a wrong number of scores");
  }
  const double s = scores[0];
  std::size_t higher = 0;
  std::size_t tied = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > s) {
      ++higher;
    } else if (scores[i] == s) {
      ++tied;
    }
  }
  return 1.0 + static_cast<double>(higher) + static_cast<double>(tied) / 2.0;
}

Metrics metrics_from_ranks(std::span<const double> ranks) {
  Metrics m;
  m.n_queries = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    if (r <= 1.0) m.hits1 += 1.0;
    if (r <= 3.0) m.hits3 += 1.0;
    if (r <= 10.0) m.hits10 += 1.0;
  }
  const auto n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

void check_metrics(const Metrics& m) {
  const bool ok = 0.0 <= m.hits1 && m.hits1 <= m.hits3 && m.hits3 <= m.hits10 &&
                  m.hits10 <= 1.0 && m.hits1 <= m.mrr + 1e-12 && m.mrr <= 1.0;
  if (!ok) throw Error(ErrorKind::kNumeric, "metrics violate hits/mrr ordering");
}

MetricsReport evaluate(const ScoreFn& score, std::span<const Triple> test,
                       const RankingProtocol& protocol, const TripleSet* known,
                       std::size_t n_entities) {
  if (test.empty()) throw Error(ErrorKind::kEmptyDataset, "evaluate: empty test set");
  std::vector<double> all;
  std::map<RelationId, std::vector<double>> by_rel;
  for (const auto& t : test) {
    for (Side s : {Side::kHead, Side::kTail}) {
      if (protocol.side != Side::kBoth && protocol.side != s) continue;
      const double r = rank_query(score, t, s, protocol.mode, known, n_entities);
      all.push_back(r);
      by_rel[t.relation].push_back(r);
    }
  }
  MetricsReport report;
  report.overall = metrics_from_ranks(all);
  check_metrics(report.overall);
  for (const auto& [rel, ranks] : by_rel) {
    report.per_relation[rel] = metrics_from_ranks(ranks);
    check_metrics(report.per_relation[rel]);
  }
  return report;
}

void write_metrics_row(std::ostream& out, const std::string& criterion, std::size_t n_rules,
                       std::uint64_t seed, const Metrics& m) {
  out << criterion << ',' << n_rules << ',' << seed << ',';
  write_number(out, m.mrr);
  out << ',';
  write_number(out, m.hits1);
  out << ',';
  write_number(out, m.hits3);
  out << ',';
  write_number(out, m.hits10);
  out << ',' << m.n_queries << '\n';
}

void write_per_relation_csv(std::ostream& out, const MetricsReport& report,
                            const Vocabulary& relations) {
  out << "relation,mrr,hits1,hits3,hits10,n_queries\n";
  for (const auto& [rel, m] : report.per_relation) {
    out << relations.name(rel) << ',';
    write_number(out, m.mrr);
    out << ',';
    write_number(out, m.hits1);
    out << ',';
    write_number(out, m.hits3);
    out << ',';
    write_number(out, m.hits10);
    out << ',' << m.n_queries << '\n';
  }
}

std::vector<AblationCell> run_ablation(std::span<const RankCriterion> criteria,
                                       std::span<const std::size_t> rule_counts,
                                       std::span<const std::uint64_t> seeds,
                                       const AblationRunner& runner) {
  std::vector<AblationCell> cells;
  auto run_cell = [&](std::optional<RankCriterion> c, std::size_t n, std::uint64_t seed) {
    AblationCell cell;
    cell.criterion = c ? criterion_name(*c) : "kge";
    cell.n_rules = n;
    cell.seed = seed;
    try {
      cell.metrics = runner(c, n, seed);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cells.push_back(std::move(cell));
  };
  for (auto seed : seeds) run_cell(std::nullopt, 0, seed);
  for (auto c : criteria) {
    for (auto n : rule_counts) {
      if (n == 0) continue;
      for (auto seed : seeds) run_cell(c, n, seed);
    }
  }
  return cells;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationCell> cells) {
  out << kMetricsCsvHeader << '\n';
  for (const auto& c : cells) {
    if (c.metrics) {
      write_metrics_row(out, c.criterion, c.n_rules, c.seed, *c.metrics);
    } else {
      out << c.criterion << ',' << c.n_rules << ',' << c.seed << ",NA,NA,NA,NA,0\n";
    }
  }
}

}  // namespace r2n
