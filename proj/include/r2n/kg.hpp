#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace r2n {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

enum class Domain : std::uint8_t { kGene = 0, kChemical = 1, kDisease = 2 };

std::string_view domain_name(Domain d);
std::optional<Domain> parse_domain(std::string_view name);

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t k = (static_cast<std::uint64_t>(t.head) << 32) ^ t.tail;
    k ^= static_cast<std::uint64_t>(t.relation) * 0x9E3779B97F4A7C15ULL;
    k ^= k >> 33;
    k *= 0xff51afd7ed558ccdULL;
    k ^= k >> 33;
    return static_cast<std::size_t>(k);
  }
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

// Dense name <-> id map, ids assigned in first-seen order.
class Vocabulary {
 public:
  std::uint32_t add(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> ids_;
};

struct IngestReport {
  std::size_t lines_read = 0;
  std::size_t duplicates_dropped = 0;
};

// Immutable, indexed triple store. Duplicate triples are dropped on
// construction; triple order is otherwise preserved.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  KnowledgeGraph(Vocabulary entities, Vocabulary relations,
                 std::vector<Triple> triples,
                 std::optional<std::vector<Domain>> domains = std::nullopt);

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }
  std::size_t duplicates_dropped() const { return duplicates_dropped_; }

  const std::vector<Triple>& triples() const { return triples_; }

  bool contains(const Triple& t) const { return members_.contains(t); }
  bool contains(EntityId h, RelationId r, EntityId t) const {
    return contains(Triple{h, r, t});
  }
  const TripleSet& members() const { return members_; }

  // All triples of relation r, sorted by (head, tail).
  std::span<const Triple> relation_triples(RelationId r) const;
  std::size_t relation_count(RelationId r) const {
    return relation_triples(r).size();
  }
  // Tails t with (h, r, t), ascending.
  std::span<const EntityId> tails(EntityId h, RelationId r) const;
  // Heads h with (h, r, t), ascending.
  std::span<const EntityId> heads(RelationId r, EntityId t) const;
  // Relations r with (h, r, t), ascending.
  std::span<const RelationId> relations_between(EntityId h, EntityId t) const;
  // Relations for which h occurs as a head, ascending.
  std::span<const RelationId> subject_relations(EntityId h) const;

  bool has_domains() const { return domains_.has_value(); }
  Domain domain(EntityId e) const { return domains_->at(e); }
  const std::optional<std::vector<Domain>>& domains() const { return domains_; }

 private:
  struct Range {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };
  static std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }
  void build_indexes();

  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<Triple> triples_;
  std::optional<std::vector<Domain>> domains_;
  std::size_t duplicates_dropped_ = 0;

  TripleSet members_;
  std::vector<Triple> by_relation_;           // sorted (r, h, t)
  std::vector<std::uint32_t> relation_offsets_;
  std::vector<EntityId> tails_;               // grouped by (h, r)
  std::unordered_map<std::uint64_t, Range> tails_index_;
  std::vector<EntityId> heads_;               // grouped by (r, t)
  std::unordered_map<std::uint64_t, Range> heads_index_;
  std::vector<RelationId> rels_;              // grouped by (h, t)
  std::unordered_map<std::uint64_t, Range> rels_index_;
  std::vector<RelationId> subject_rels_;
  std::vector<std::uint32_t> subject_offsets_;
};

// --- ingestion -----------------------------------------------------------

// Parses `head<TAB>relation<TAB>tail` lines, `#` comments and blank lines
// skipped, interning names into the given vocabularies. Exact duplicate
// lines are kept here; KnowledgeGraph drops them.
std::vector<Triple> parse_triples(std::istream& in, Vocabulary& entities,
                                  Vocabulary& relations,
                                  const std::string& source_name,
                                  IngestReport* report = nullptr);

// Like parse_triples, but every name must already be in the vocabularies.
std::vector<Triple> parse_triples_known(std::istream& in,
                                        const Vocabulary& entities,
                                        const Vocabulary& relations,
                                        const std::string& source_name);

std::vector<Domain> parse_domains(std::istream& in, const Vocabulary& entities,
                                  const std::string& source_name);

// Throws EmptyDataset when no triple is read, MissingDomain when a domain
// sidecar is supplied but does not tag every entity.
KnowledgeGraph ingest(std::istream& triples, std::istream* domains,
                      IngestReport* report = nullptr,
                      const std::string& source_name = "<triples>");

KnowledgeGraph load_graph(const std::filesystem::path& triples,
                          const std::optional<std::filesystem::path>& domains = {},
                          IngestReport* report = nullptr);

std::vector<Triple> load_triples_known(const std::filesystem::path& path,
                                       const KnowledgeGraph& vocab);

void write_triples(std::ostream& out, std::span<const Triple> triples,
                   const Vocabulary& entities, const Vocabulary& relations);
void write_domains(std::ostream& out, const KnowledgeGraph& kg);

// --- statistics ----------------------------------------------------------

// Bitmasks over Domain for the heads and tails a relation is observed with.
struct DomainSignature {
  std::uint8_t head_mask = 0;
  std::uint8_t tail_mask = 0;

  friend auto operator<=>(const DomainSignature&, const DomainSignature&) = default;
};

DomainSignature domain_signature(const KnowledgeGraph& kg, RelationId r);
std::string signature_label(const DomainSignature& sig);

enum class FrequencyGrouping { kOverall, kByDomainSignature };

// Percentages per relation id. By-domain grouping divides by the number of
// triples whose relation shares the same domain signature; without domain
// tags it degrades to the overall grouping.
std::vector<double> relation_frequency(const KnowledgeGraph& kg,
                                       FrequencyGrouping grouping);

// Empty optional means "not applicable".
struct PropertyStats {
  std::optional<double> reflexive;
  std::optional<double> symmetric;
  std::optional<double> transitive;
};

PropertyStats property_stats(const KnowledgeGraph& kg, RelationId r);

struct RelationStatsRow {
  RelationId relation = 0;
  std::string block;
  double freq_overall = 0.0;
  double freq_in_block = 0.0;
  PropertyStats properties;
};

struct StatsReport {
  std::vector<RelationStatsRow> rows;  // relation-id order
};

StatsReport compute_stats(const KnowledgeGraph& kg);
void write_stats_csv(std::ostream& out, const StatsReport& report,
                     const KnowledgeGraph& kg);

// --- splits --------------------------------------------------------------

struct Split {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  std::uint64_t seed = 0;
};

// Seeded shuffle + proportional cut, then any valid/test triple whose
// entities or relation are absent from train is moved into train.
Split split(const KnowledgeGraph& kg, std::array<double, 3> ratios,
            std::uint64_t seed);

}  // namespace r2n
