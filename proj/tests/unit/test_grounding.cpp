#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "r2n/error.hpp"
#include "r2n/grounding.hpp"

using namespace r2n;

namespace {

using Grounding = std::vector<Triple>;

std::multiset<Grounding> groundings(const FactorGraph& g) {
  std::multiset<Grounding> out;
  for (FactorId f = 0; f < g.num_factors(); ++f) {
    Grounding atoms;
    for (auto a : g.factor_atoms(f)) atoms.push_back(g.atom(a).triple);
    out.insert(atoms);
  }
  return out;
}

// Every assignment of entities to the rule's variables whose body atoms are
// all training facts.
std::multiset<Grounding> brute_groundings(const HornRule& rule, const KnowledgeGraph& kg) {
  const auto n = kg.num_entities();
  const auto n_vars = rule.num_variables();
  std::multiset<Grounding> out;
  std::vector<EntityId> b(n_vars, 0);
  std::size_t total = 1;
  for (std::size_t v = 0; v < n_vars; ++v) total *= n;
  for (std::size_t code = 0; code < total; ++code) {
    auto c = code;
    for (std::size_t v = 0; v < n_vars; ++v) {
      b[v] = static_cast<EntityId>(c % n);
      c /= n;
    }
    bool ok = true;
    for (const auto& a : rule.body) ok = ok && kg.contains(b[a.subject], a.relation, b[a.object]);
    if (!ok) continue;
    Grounding atoms;
    for (std::size_t i = 0; i < rule.arity(); ++i) {
      const auto& a = rule.atom(i);
      atoms.push_back({b[a.subject], a.relation, b[a.object]});
    }
    out.insert(atoms);
  }
  return out;
}

}  // namespace

TEST_CASE("friends and smokes over three constants") {
  const auto kg = fixture::graph({{"a", "Friends", "b"}, {"a", "Smokes", "a"}, {"c", "Friends", "c"}});
  const std::vector<HornRule> rules{
      parse_rule("Friends(x,y) & Smokes(x) => Smokes(y)", kg.relations())};
  SUBCASE("filter off enumerates every binding") {
    GroundingConfig cfg;
    cfg.premise_filter = false;
    const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}), cfg);
    CHECK(g.num_factors() == 9);
    CHECK(g.num_atoms() == 12);
    std::size_t friends = 0, smokes = 0;
    for (const auto& a : g.universe().atoms()) {
      (a.triple.relation == 0 ? friends : smokes) += 1;
    }
    CHECK(friends == 9);
    CHECK(smokes == 3);
  }
  SUBCASE("filter on keeps the verified premise") {
    const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
    REQUIRE(g.num_factors() == 1);
    const auto atoms = g.factor_atoms(0);
    REQUIRE(atoms.size() == 3);
    const auto a = *kg.entities().find("a");
    const auto b = *kg.entities().find("b");
    CHECK(g.atom(atoms[0]).triple == Triple{a, 0, b});
    CHECK(g.atom(atoms[1]).triple == Triple{a, 1, a});
    CHECK(g.atom(atoms[2]).triple == Triple{b, 1, b});
    CHECK(g.atom(atoms[2]).label == AtomLabel::kUnknown);
    CHECK(g.atom(atoms[0]).label == AtomLabel::kKnownTrue);
  }
  SUBCASE("unfiltered grounding is bounded") {
    GroundingConfig cfg;
    cfg.premise_filter = false;
    cfg.max_entities_unfiltered = 2;
    CHECK_THROWS_AS(ground_rules(rules, kg, atom_universe(kg.triples(), {}), cfg), Error);
  }
  SUBCASE("excluding repeated constants") {
    GroundingConfig cfg;
    cfg.premise_filter = false;
    cfg.allow_repeated_constants = false;
    CHECK(ground_rules(rules, kg, atom_universe(kg.triples(), {}), cfg).num_factors() == 6);
  }
}

TEST_CASE("rule with an absent body relation grounds to nothing") {
  Vocabulary ents, rels;
  ents.add("a");
  ents.add("b");
  rels.add("R");
  rels.add("S");
  const KnowledgeGraph kg(ents, rels, {{0, 0, 1}});
  const std::vector<HornRule> rules{parse_rule("S(x,y) => R(x,y)", rels)};
  const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
  CHECK(g.num_factors() == 0);
  CHECK(g.num_atoms() == 1);
}

TEST_CASE("neighbourhoods") {
  SUBCASE("three-atom factor") {
    const auto kg = fixture::graph({{"a", "R", "b"}, {"b", "R", "c"}});
    const std::vector<HornRule> rules{parse_rule("R(x,z) & R(z,y) => R(x,y)", kg.relations())};
    const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
    REQUIRE(g.num_factors() == 1);
    const auto atoms = g.factor_atoms(0);
    REQUIRE(atoms.size() == 3);
    for (std::uint32_t p = 0; p < 3; ++p) {
      const auto edges = g.atom_factors(atoms[p]);
      REQUIRE(edges.size() == 1);
      CHECK(edges[0].factor == 0);
      CHECK(edges[0].position == p);
    }
  }
  SUBCASE("one atom, two groundings, two positions") {
    const auto kg = fixture::graph({{"a", "R", "b"}, {"b", "R", "a"}});
    const std::vector<HornRule> rules{parse_rule("R(y,x) => R(x,y)", kg.relations())};
    const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
    REQUIRE(g.num_factors() == 2);
    const auto edges = g.atom_factors(*g.find({0, 0, 1}));
    REQUIRE(edges.size() == 2);
    CHECK(edges[0].factor != edges[1].factor);
    CHECK(edges[0].position != edges[1].position);
  }
  SUBCASE("one atom at both positions of one grounding") {
    const auto kg = fixture::graph({{"a", "R", "a"}});
    const std::vector<HornRule> rules{parse_rule("R(y,x) => R(x,y)", kg.relations())};
    const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
    REQUIRE(g.num_factors() == 1);
    CHECK(g.num_atoms() == 1);
    const auto edges = g.atom_factors(0);
    REQUIRE(edges.size() == 2);
    CHECK(edges[0].position == 0);
    CHECK(edges[1].position == 1);
  }
  SUBCASE("unknown ids throw") {
    const auto kg = fixture::graph({{"a", "R", "b"}});
    const auto g = ground_rules({}, kg, atom_universe(kg.triples(), {}));
    CHECK_THROWS(g.factor_atoms(0));
    CHECK_THROWS(g.atom_factors(5));
  }
}

TEST_CASE("premise-filtered grounding equals brute-force binding enumeration") {
  std::mt19937_64 rng(77);
  for (int round = 0; round < 40; ++round) {
    const auto kg = fixture::random_graph(rng, 3 + rng() % 12, 1 + rng() % 3, 5 + rng() % 60);
    const auto mined = mine(kg, MinerConfig{2, 1, 0.0});
    std::vector<HornRule> rules;
    for (const auto& m : mined) rules.push_back(m.rule);
    const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
    std::multiset<Grounding> want;
    for (const auto& r : g.rules()) {
      const auto part = brute_groundings(r, kg);
      want.insert(part.begin(), part.end());
    }
    CHECK(groundings(g) == want);
    for (FactorId f = 0; f < g.num_factors(); ++f) {
      CHECK(g.factor_atoms(f).size() == g.rules()[g.factor_rule(f)].arity());
    }
  }
}

TEST_CASE("grounding is independent of rule input order") {
  std::mt19937_64 rng(5);
  const auto kg = fixture::random_graph(rng, 15, 3, 80);
  std::vector<HornRule> rules;
  for (const auto& m : mine(kg, MinerConfig{2, 2, 0.0})) rules.push_back(m.rule);
  REQUIRE(rules.size() > 2);
  const auto a = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
  std::shuffle(rules.begin(), rules.end(), rng);
  const auto b = ground_rules(rules, kg, atom_universe(kg.triples(), {}));
  CHECK(a == b);
}

TEST_CASE("factor graph text round trip") {
  std::mt19937_64 rng(8);
  const auto kg = fixture::random_graph(rng, 15, 3, 80);
  std::vector<HornRule> rules;
  for (const auto& m : mine(kg, MinerConfig{2, 2, 0.0})) rules.push_back(m.rule);
  const std::vector<Triple> queries{{0, 0, 1}, {2, 1, 3}, {4, 2, 4}};
  const auto g = ground_rules(rules, kg, atom_universe(kg.triples(), queries));
  std::ostringstream out;
  write_factor_graph(out, g, kg.relations());
  std::istringstream in(out.str());
  const auto back = read_factor_graph(in, kg.relations());
  CHECK(back == g);
  CHECK(back.frozen());
  std::istringstream bad("R2NFG 99\n");
  CHECK_THROWS_AS(read_factor_graph(bad, kg.relations()), Error);
}

TEST_CASE("atom universe") {
  const std::vector<Triple> train{{0, 0, 1}, {1, 0, 2}};
  const std::vector<Triple> queries{{1, 0, 2}, {2, 0, 0}};
  const auto u = atom_universe(train, queries);
  REQUIRE(u.size() == 3);
  CHECK(u.atom(1).label == AtomLabel::kKnownTrue);
  CHECK(u.atom(2).label == AtomLabel::kUnknown);
  CHECK(*u.find({2, 0, 0}) == 2);
}
