// Acceptance checks that need no external data. One line per criterion;
// exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../oracles/brute_miner.hpp"
#include "../oracles/brute_ranker.hpp"
#include "../oracles/finite_diff.hpp"
#include "r2n/error.hpp"
#include "r2n/eval.hpp"
#include "r2n/grounding.hpp"
#include "r2n/kge.hpp"
#include "r2n/reasoning.hpp"
#include "r2n/rules.hpp"
#include "support/chain.hpp"
#include "support/op_cases.hpp"
#include "support/synthetic.hpp"
#include "unit/fixtures.hpp"

using namespace r2n;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

oracle::Rule to_oracle(const HornRule& r) {
  oracle::Rule out{r.head.relation, {}};
  for (const auto& a : r.body) out.body.push_back({a.relation, a.subject, a.object});
  std::sort(out.body.begin(), out.body.end());
  return out;
}

struct Corpus {
  std::vector<KnowledgeGraph> graphs;
  std::vector<MinedRuleSet> mined;
};

// 500 random graphs with at most 50 entities, 5 relations, 200 triples.
const Corpus& corpus() {
  static const Corpus c = [] {
    Corpus out;
    std::mt19937_64 rng(20240);
    for (int g = 0; g < 500; ++g) {
      const std::size_t n_ent = 2 + rng() % 49;
      const std::size_t n_rel = 1 + rng() % 5;
      const std::size_t n_tri = 1 + rng() % 200;
      out.graphs.push_back(fixture::random_graph(rng, n_ent, n_rel, n_tri));
      out.mined.push_back(mine(out.graphs.back(), MinerConfig{2, 1, 0.0}));
    }
    return out;
  }();
  return c;
}

Outcome miner_matches_oracle() {
  Outcome o;
  std::size_t rules = 0;
  const auto& c = corpus();
  for (std::size_t g = 0; g < c.graphs.size(); ++g) {
    const auto& kg = c.graphs[g];
    std::vector<oracle::Fact> facts;
    for (const auto& t : kg.triples()) facts.push_back({t.head, t.relation, t.tail});
    const auto want = oracle::mine(facts, static_cast<std::uint32_t>(kg.relations().size()), 2, 1, 0.0);
    const auto& got = c.mined[g];
    rules += got.size();
    if (got.size() != want.size()) {
      o.fail("graph " + std::to_string(g) + ": " + std::to_string(got.size()) + " rules vs " +
             std::to_string(want.size()));
      continue;
    }
    for (const auto& m : got) {
      const auto it = want.find(to_oracle(m.rule));
      if (it == want.end()) {
        o.fail("graph " + std::to_string(g) + ": unexpected " + rule_text(m.rule, kg.relations()));
        continue;
      }
      const auto& s = it->second;
      const auto d = [](std::uint64_t a, std::uint64_t b) { return double(a) / double(b); };
      if (m.stats.support != s.support || m.stats.head_coverage != d(s.support, s.head_count) ||
          m.stats.std_confidence != d(s.support, s.body_pairs) ||
          m.stats.pca_confidence != d(s.support, s.pca_pairs)) {
        o.fail("graph " + std::to_string(g) + ": stats differ for " + rule_text(m.rule, kg.relations()));
      }
    }
  }
  if (o.pass) o.detail = "500 graphs, " + std::to_string(rules) + " rules identical";
  return o;
}

Outcome statistic_bounds() {
  Outcome o;
  std::size_t rules = 0;
  for (const auto& set : corpus().mined) {
    for (const auto& m : set) {
      ++rules;
      const auto& s = m.stats;
      const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
      if (!unit(s.head_coverage) || !unit(s.std_confidence) || !unit(s.pca_confidence)) {
        o.fail("fraction outside [0,1]");
      }
      if (s.pca_confidence < s.std_confidence) o.fail("pca below standard confidence");
    }
  }
  if (o.pass) o.detail = std::to_string(rules) + " rules";
  return o;
}

Outcome gradients() {
  using namespace gradcases;
  Outcome o;
  double worst = 0.0;
  std::size_t total = 0, skipped = 0;
  for (const auto& op : op_cases()) {
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 100 && seed < 400; ++seed) {
      std::mt19937_64 rng(seed * 104729 + 5);
      auto inputs = op.inputs(rng);
      const auto r = oracle::check_inputs(
          [&](Tape& tape, std::vector<Var>& vars) {
            auto out = op.build(tape, vars);
            return out.rows() == 1 && out.cols() == 1 ? out : contract(tape, out, seed);
          },
          inputs);
      // Central differences are meaningless across a ReLU kink.
      if (r.min_relu_input < 10 * oracle::kStep) {
        ++skipped;
        continue;
      }
      ++checked;
      worst = std::max(worst, r.rel_error);
      if (!(r.rel_error < 1e-4)) o.fail(std::string(op.name) + " seed " + std::to_string(seed));
    }
    if (checked < 100) o.fail(std::string(op.name) + ": only " + std::to_string(checked) + " usable seeds");
    total += static_cast<std::size_t>(checked);
  }

  auto f = chainfix::chain();
  ad::Tensor target(4, 1);
  target.at(0, 0) = target.at(3, 0) = 1.0;
  const AtomId atoms[] = {0, 1, 2, 3};
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 100 && seed < 400; ++seed) {
    auto m = chainfix::model_for(f, 4, R2NConfig{2, 3, Anchor::kInput, seed % 2 == 1, seed}, seed + 100);
    std::vector<ad::Parameter*> params = m.params().all();
    for (auto* p : m.kge().params().all()) params.push_back(p);
    const auto r = oracle::check_params(
        [&](ad::Tape& tape) { return ad::bce_loss(m.forward(tape, f.graph, atoms), target); }, params);
    if (r.min_relu_input < 10 * oracle::kStep) {
      ++skipped;
      continue;
    }
    ++checked;
    worst = std::max(worst, r.rel_error);
    if (!(r.rel_error < 1e-4)) o.fail("r2n seed " + std::to_string(seed));
  }
  if (checked < 100) o.fail("r2n: only " + std::to_string(checked) + " usable seeds");
  total += static_cast<std::size_t>(checked);
  if (o.pass) {
    std::ostringstream s;
    s << total << " checks, max rel err " << worst << ", " << skipped << " kink draws skipped";
    o.detail = s.str();
  }
  return o;
}

Outcome reasoning_laws() {
  using namespace chainfix;
  Outcome o;
  double min_gap = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto f = chain();
    auto m = model_for(f, 8, R2NConfig{3, 25, Anchor::kInput, false, seed}, seed + 1);

    // The isolated atom A(b,a) keeps its KGE representation at every layer.
    std::vector<double> x0(m.atom_dim());
    m.kge().representation_into(f.graph.atom(3).triple, x0);
    const AtomId iso[] = {3};
    for (std::size_t l = 0; l <= 3; ++l) {
      ad::Tape tape;
      const auto row = m.atom_states(tape, f.graph, iso, l).value().row(0);
      if (!std::equal(row.begin(), row.end(), x0.begin())) o.fail("isolated atom moved at layer " + std::to_string(l));
    }

    // Zeroed atom networks give the same outputs as a graph without factors.
    std::vector<Triple> triples;
    for (const auto& a : f.graph.universe().atoms()) triples.push_back(a.triple);
    FactorGraph empty(f.rules, f.graph.universe());
    empty.freeze();
    const auto bare = m.predict(&empty, triples, CandidateWiring::kGraph);
    auto z = model_for(f, 8, R2NConfig{3, 25, Anchor::kInput, false, seed}, seed + 1);
    zero(z, ".atom[");
    if (z.predict(&f.graph, triples, CandidateWiring::kGraph) != bare) o.fail("zeroed messages changed outputs");

    // Two-hop evidence: relation A reaches C(a,b) only through B(a,b).
    const AtomId c[] = {2};
    double delta[2];
    for (std::size_t layers : {1u, 2u}) {
      auto mm = model_for(f, 8, R2NConfig{2, 25, Anchor::kInput, false, seed}, seed + 1);
      ad::Tape t1;
      const double before = mm.forward(t1, f.graph, c, layers).value().item();
      for (auto& v : mm.kge().params().get("kge.relation").value.row(0)) v += 0.5;
      ad::Tape t2;
      delta[layers - 1] = std::abs(mm.forward(t2, f.graph, c, layers).value().item() - before);
    }
    if (delta[0] != 0.0) o.fail("one layer already sees two-hop evidence");
    if (delta[1] == 0.0) o.fail("two layers miss two-hop evidence, seed " + std::to_string(seed));

    // C(a,b) has a factor, so a second layer moves its prediction.
    auto two = model_for(f, 8, R2NConfig{2, 25, Anchor::kInput, false, seed}, seed + 1);
    ad::Tape t1, t2;
    const double gap = std::abs(two.forward(t1, f.graph, c, 2).value().item() -
                                two.forward(t2, f.graph, c, 1).value().item());
    min_gap = std::min(min_gap, gap);
    if (!(gap > 1e-6)) o.fail("L=2 within 1e-6 of L=1, seed " + std::to_string(seed));
  }
  if (o.pass) {
    std::ostringstream s;
    s << "20 seeds, smallest L2-L1 gap " << min_gap;
    o.detail = s.str();
  }
  return o;
}

Outcome ranking() {
  Outcome o;
  std::mt19937_64 rng(77);
  std::size_t queries = 0;
  for (int round = 0; round < 300; ++round) {
    const std::size_t n = 2 + rng() % 99;
    const std::uint32_t n_rel = 1 + rng() % 3;
    const auto levels = 1 + rng() % 8;
    const auto salt = rng();
    auto score_one = [&](const Triple& t) {
      std::uint64_t k = (std::uint64_t{t.head} * 1000003 + t.relation) * 1000033 + t.tail + salt;
      k ^= k >> 29;
      k *= 0xbf58476d1ce4e5b9ULL;
      k ^= k >> 32;
      return static_cast<double>(k % levels);
    };
    ScoreFn score = [&](std::span<const Triple> batch) {
      std::vector<double> out;
      for (const auto& t : batch) out.push_back(score_one(t));
      return out;
    };
    TripleSet known;
    std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>> tuples;
    std::vector<Triple> test;
    for (std::size_t i = 0; i < n; ++i) {
      Triple t{static_cast<EntityId>(rng() % n), static_cast<RelationId>(rng() % n_rel),
               static_cast<EntityId>(rng() % n)};
      if (known.insert(t).second) test.push_back(t);
      tuples.insert({t.head, t.relation, t.tail});
    }
    std::vector<double> raw_ranks, filt_ranks;
    for (const auto& q : test) {
      for (bool head : {true, false}) {
        const auto side = head ? Side::kHead : Side::kTail;
        const double raw = rank_query(score, q, side, RankMode::kRaw, nullptr, n);
        const double filt = rank_query(score, q, side, RankMode::kFiltered, &known, n);
        if (raw != oracle::brute_rank(score_one, q, head, false, tuples, n)) o.fail("raw rank differs");
        if (filt != oracle::brute_rank(score_one, q, head, true, tuples, n)) o.fail("filtered rank differs");
        if (filt > raw) o.fail("filtered rank above raw");
        raw_ranks.push_back(raw);
        filt_ranks.push_back(filt);
        ++queries;
      }
    }
    for (const auto* ranks : {&raw_ranks, &filt_ranks}) {
      const auto m = metrics_from_ranks(*ranks);
      try {
        check_metrics(m);
      } catch (const Error& e) {
        o.fail(e.what());
      }
      if (!(m.hits1 <= m.hits3 && m.hits3 <= m.hits10 && m.hits1 <= m.mrr && m.mrr <= 1.0)) {
        o.fail("metric ordering violated");
      }
    }
    const auto rep_raw = evaluate(score, test, {RankMode::kRaw, Side::kBoth}, &known, n);
    const auto rep_filt = evaluate(score, test, {RankMode::kFiltered, Side::kBoth}, &known, n);
    if (std::abs(rep_raw.overall.mrr - metrics_from_ranks(raw_ranks).mrr) > 1e-12) o.fail("evaluate raw mrr");
    if (std::abs(rep_filt.overall.mrr - metrics_from_ranks(filt_ranks).mrr) > 1e-12) o.fail("evaluate filtered mrr");
    if (rep_filt.overall.mrr < rep_raw.overall.mrr) o.fail("filtered mrr below raw");
  }
  if (o.pass) o.detail = std::to_string(queries) + " queries over 300 candidate sets";
  return o;
}

struct LiftRun {
  double kge_mrr = 0.0;
  double r2n_mrr = 0.0;
};

LiftRun lift_run(std::uint64_t seed) {
  const auto g = synthetic::make(200, 300, 300, 0.2, seed);
  Vocabulary ents, rels;
  for (int e = 0; e < 200; ++e) ents.add("e" + std::to_string(e));
  for (const char* r : {"P", "S", "Q"}) rels.add(r);
  auto to_triples = [&](const std::vector<synthetic::Row>& rows) {
    std::vector<Triple> out;
    for (const auto& [h, r, t] : rows) out.push_back({*ents.find(h), *rels.find(r), *ents.find(t)});
    return out;
  };
  const auto train = to_triples(g.train);
  const auto test = to_triples(g.test);
  const KnowledgeGraph kg(ents, rels, train);
  TripleSet known(train.begin(), train.end());
  known.insert(test.begin(), test.end());

  const std::vector<HornRule> rules{parse_rule("P(y,x) => Q(x,y)", rels),
                                    parse_rule("P(x,z) & S(z,y) => Q(x,y)", rels)};
  const auto graph = ground_rules(rules, kg, atom_universe(train, test));

  KGEModel kge(ScorerKind::kDistMult, ents.size(), rels.size(), 32, seed);
  PretrainConfig pcfg;
  pcfg.epochs = 100;
  pcfg.batch = 128;
  pcfg.seed = seed;
  pretrain(kge, train, kg.members(), pcfg);

  LiftRun out;
  const RankingProtocol protocol;
  out.kge_mrr = evaluate(kge_scorer(kge), test, protocol, &known, ents.size()).overall.mrr;

  R2NModel m(std::move(kge), graph.rules(), rels, R2NConfig{2, 8, Anchor::kInput, false, seed});
  FinetuneConfig fcfg;
  fcfg.epochs = 30;
  fcfg.lr = 1e-2;
  fcfg.batch = 128;
  fcfg.seed = seed;
  finetune(m, graph, train, kg.members(), fcfg);
  out.r2n_mrr = evaluate(r2n_scorer(m, &graph, CandidateWiring::kGraph), test, protocol, &known, ents.size())
                    .overall.mrr;
  return out;
}

Outcome planted_rule_lift() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> ratios;
  std::ostringstream s;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = lift_run(seed);
    ratios.push_back(r.r2n_mrr / r.kge_mrr);
    s << (seed ? "; " : "") << "seed " << seed << " kge " << r.kge_mrr << " r2n " << r.r2n_mrr;
  }
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[2];
  s << "; median ratio " << median << ", " << minutes << " min";
  o.detail = s.str();
  if (!(median >= 1.2)) o.pass = false;
  if (!(minutes < 10.0)) o.pass = false;
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"1 miner equals exhaustive oracle", miner_matches_oracle},
      {"2 rule statistics bounded, pca >= conf", statistic_bounds},
      {"3 analytic gradients match finite differences", gradients},
      {"4 isolated identity, zero-message equivalence, two-hop reach", reasoning_laws},
      {"5 ranking equals exhaustive ranker, filtered <= raw, metric order", ranking},
      {"6 planted rules lift test MRR >= 1.2x DistMult", planted_rule_lift},
  };
  bool all = true;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.name << "  (" << o.detail << ")" << std::endl;
  }
  return all ? 0 : 1;
}
