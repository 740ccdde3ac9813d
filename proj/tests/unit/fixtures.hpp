#pragma once

#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "r2n/kg.hpp"

namespace fixture {

using Row = std::tuple<std::string, std::string, std::string>;

inline std::string tsv(const std::vector<Row>& rows) {
  std::string out;
  for (const auto& [h, r, t] : rows) out += h + "\t" + r + "\t" + t + "\n";
  return out;
}

inline r2n::KnowledgeGraph graph(const std::vector<Row>& rows) {
  std::istringstream in(tsv(rows));
  return r2n::ingest(in, nullptr);
}

inline r2n::KnowledgeGraph graph(const std::vector<Row>& rows, const std::string& domains) {
  std::istringstream in(tsv(rows));
  std::istringstream dom(domains);
  return r2n::ingest(in, &dom);
}

// Distinct random triples over numbered entities and relations; relation
// names are "r0".."r{n-1}" and all are registered first, in order.
inline r2n::KnowledgeGraph random_graph(std::mt19937_64& rng, std::size_t n_entities,
                                        std::size_t n_relations, std::size_t n_triples) {
  r2n::Vocabulary ents;
  r2n::Vocabulary rels;
  for (std::size_t e = 0; e < n_entities; ++e) ents.add("e" + std::to_string(e));
  for (std::size_t r = 0; r < n_relations; ++r) rels.add("r" + std::to_string(r));
  std::uniform_int_distribution<std::uint32_t> pe(0, static_cast<std::uint32_t>(n_entities - 1));
  std::uniform_int_distribution<std::uint32_t> pr(0, static_cast<std::uint32_t>(n_relations - 1));
  r2n::TripleSet seen;
  std::vector<r2n::Triple> triples;
  for (std::size_t i = 0; i < n_triples; ++i) {
    r2n::Triple t{pe(rng), pr(rng), pe(rng)};
    if (seen.insert(t).second) triples.push_back(t);
  }
  return r2n::KnowledgeGraph(std::move(ents), std::move(rels), std::move(triples));
}

}  // namespace fixture
