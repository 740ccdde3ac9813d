#include "r2n/kg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "r2n/error.hpp"

namespace r2n {

namespace {

constexpr std::array<std::string_view, 3> kDomainNames = {"Gene", "Chemical",
                                                          "Disease"};
constexpr std::array<char, 3> kDomainLetters = {'G', 'C', 'D'};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

// Strips a trailing '\r' so CRLF files parse.
std::string_view chomp(const std::string& line) {
  std::string_view v(line);
  if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
  return v;
}

bool skippable(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#';
}

template <typename Resolve>
std::vector<Triple> parse_lines(std::istream& in, const std::string& source,
                                IngestReport* report, Resolve&& resolve) {
  std::vector<Triple> out;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = chomp(raw);
    if (skippable(line)) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(source, lineno,
                       "expected 3 tab-separated fields, got " +
                           std::to_string(fields.size()));
    }
    for (auto f : fields) {
      if (f.empty()) throw ParseError(source, lineno, "empty field");
    }
    out.push_back(resolve(fields[0], fields[1], fields[2], lineno));
  }
  if (report) report->lines_read += out.size();
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::kIo, "cannot open " + path.string());
  }
  return in;
}

}  // namespace

std::string_view domain_name(Domain d) {
  return kDomainNames.at(static_cast<std::size_t>(d));
}

std::optional<Domain> parse_domain(std::string_view name) {
  for (std::size_t i = 0; i < kDomainNames.size(); ++i) {
    if (kDomainNames[i] == name) return static_cast<Domain>(i);
  }
  return std::nullopt;
}

std::uint32_t Vocabulary::add(std::string_view name) {
  auto it = ids_.find(std::string(name));
  if (it != ids_.end()) return it->second;
  auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

// --- KnowledgeGraph -------------------------------------------------------

KnowledgeGraph::KnowledgeGraph(Vocabulary entities, Vocabulary relations,
                               std::vector<Triple> triples,
                               std::optional<std::vector<Domain>> domains)
    : entities_(std::move(entities)),
      relations_(std::move(relations)),
      domains_(std::move(domains)) {
  if (domains_ && domains_->size() != entities_.size()) {
    throw Error(ErrorKind::kMissingDomain,
                "domain table covers " + std::to_string(domains_->size()) +
                    " of " + std::to_string(entities_.size()) + " entities");
  }
  triples_.reserve(triples.size());
  members_.reserve(triples.size());
  for (const auto& t : triples) {
    if (t.head >= entities_.size() || t.tail >= entities_.size() ||
        t.relation >= relations_.size()) {
      throw invalid_argument("triple references an id outside the vocabulary");
    }
    if (members_.insert(t).second) {
      triples_.push_back(t);
    } else {
      ++duplicates_dropped_;
    }
  }
  build_indexes();
}

void KnowledgeGraph::build_indexes() {
  const auto n_rel = relations_.size();
  const auto n_ent = entities_.size();

  by_relation_ = triples_;
  std::sort(by_relation_.begin(), by_relation_.end(),
            [](const Triple& a, const Triple& b) {
              return std::tie(a.relation, a.head, a.tail) <
                     std::tie(b.relation, b.head, b.tail);
            });
  relation_offsets_.assign(n_rel + 1, 0);
  for (const auto& t : by_relation_) ++relation_offsets_[t.relation + 1];
  std::partial_sum(relation_offsets_.begin(), relation_offsets_.end(),
                   relation_offsets_.begin());

  // Grouped secondary indexes: sort a copy by the grouping key, then record
  // one range per distinct key.
  auto build = [&](auto key_of, auto value_of, auto& values, auto& index,
                   auto less) {
    auto sorted = triples_;
    std::sort(sorted.begin(), sorted.end(), less);
    values.clear();
    values.reserve(sorted.size());
    index.clear();
    index.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      auto key = key_of(sorted[i]);
      auto& range = index[key];
      if (range.end == range.begin) {
        range.begin = static_cast<std::uint32_t>(i);
      }
      range.end = static_cast<std::uint32_t>(i + 1);
      values.push_back(value_of(sorted[i]));
    }
  };
  build([](const Triple& t) { return pair_key(t.head, t.relation); },
        [](const Triple& t) { return t.tail; }, tails_, tails_index_,
        [](const Triple& a, const Triple& b) {
          return std::tie(a.head, a.relation, a.tail) <
                 std::tie(b.head, b.relation, b.tail);
        });
  build([](const Triple& t) { return pair_key(t.relation, t.tail); },
        [](const Triple& t) { return t.head; }, heads_, heads_index_,
        [](const Triple& a, const Triple& b) {
          return std::tie(a.relation, a.tail, a.head) <
                 std::tie(b.relation, b.tail, b.head);
        });
  build([](const Triple& t) { return pair_key(t.head, t.tail); },
        [](const Triple& t) { return t.relation; }, rels_, rels_index_,
        [](const Triple& a, const Triple& b) {
          return std::tie(a.head, a.tail, a.relation) <
                 std::tie(b.head, b.tail, b.relation);
        });

  subject_offsets_.assign(n_ent + 1, 0);
  std::vector<std::pair<EntityId, RelationId>> subj;
  subj.reserve(triples_.size());
  for (const auto& t : triples_) subj.emplace_back(t.head, t.relation);
  std::sort(subj.begin(), subj.end());
  subj.erase(std::unique(subj.begin(), subj.end()), subj.end());
  subject_rels_.clear();
  subject_rels_.reserve(subj.size());
  for (auto [h, r] : subj) {
    ++subject_offsets_[h + 1];
    subject_rels_.push_back(r);
  }
  std::partial_sum(subject_offsets_.begin(), subject_offsets_.end(),
                   subject_offsets_.begin());
}

std::span<const Triple> KnowledgeGraph::relation_triples(RelationId r) const {
  if (r >= relations_.size()) return {};
  return std::span<const Triple>(by_relation_)
      .subspan(relation_offsets_[r], relation_offsets_[r + 1] - relation_offsets_[r]);
}

std::span<const EntityId> KnowledgeGraph::tails(EntityId h, RelationId r) const {
  auto it = tails_index_.find(pair_key(h, r));
  if (it == tails_index_.end()) return {};
  return std::span<const EntityId>(tails_).subspan(it->second.begin,
                                                   it->second.end - it->second.begin);
}

std::span<const EntityId> KnowledgeGraph::heads(RelationId r, EntityId t) const {
  auto it = heads_index_.find(pair_key(r, t));
  if (it == heads_index_.end()) return {};
  return std::span<const EntityId>(heads_).subspan(it->second.begin,
                                                   it->second.end - it->second.begin);
}

std::span<const RelationId> KnowledgeGraph::relations_between(EntityId h,
                                                              EntityId t) const {
  auto it = rels_index_.find(pair_key(h, t));
  if (it == rels_index_.end()) return {};
  return std::span<const RelationId>(rels_).subspan(it->second.begin,
                                                    it->second.end - it->second.begin);
}

std::span<const RelationId> KnowledgeGraph::subject_relations(EntityId h) const {
  if (h >= entities_.size()) return {};
  return std::span<const RelationId>(subject_rels_)
      .subspan(subject_offsets_[h], subject_offsets_[h + 1] - subject_offsets_[h]);
}

// --- ingestion ------------------------------------------------------------

std::vector<Triple> parse_triples(std::istream& in, Vocabulary& entities,
                                  Vocabulary& relations,
                                  const std::string& source_name,
                                  IngestReport* report) {
  return parse_lines(in, source_name, report,
                     [&](std::string_view h, std::string_view r,
                         std::string_view t, std::size_t) {
                       Triple triple;
                       triple.head = entities.add(h);
                       triple.relation = relations.add(r);
                       triple.tail = entities.add(t);
                       return triple;
                     });
}

std::vector<Triple> parse_triples_known(std::istream& in,
                                        const Vocabulary& entities,
                                        const Vocabulary& relations,
                                        const std::string& source_name) {
  return parse_lines(
      in, source_name, nullptr,
      [&](std::string_view h, std::string_view r, std::string_view t,
          std::size_t lineno) {
        auto hid = entities.find(h);
        auto rid = relations.find(r);
        auto tid = entities.find(t);
        if (!hid || !tid) {
          throw ParseError(source_name, lineno,
                           "unknown entity '" +
                               std::string(hid ? t : h) + "'");
        }
        if (!rid) {
          throw ParseError(source_name, lineno,
                           "unknown relation '" + std::string(r) + "'");
        }
        return Triple{*hid, *rid, *tid};
      });
}

std::vector<Domain> parse_domains(std::istream& in, const Vocabulary& entities,
                                  const std::string& source_name) {
  std::vector<std::optional<Domain>> tags(entities.size());
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = chomp(raw);
    if (skippable(line)) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2) {
      throw ParseError(source_name, lineno, "expected entity<TAB>domain");
    }
    auto domain = parse_domain(fields[1]);
    if (!domain) {
      throw ParseError(source_name, lineno,
                       "unknown domain '" + std::string(fields[1]) + "'");
    }
    // Entities outside the triple vocabulary are ignored.
    if (auto id = entities.find(fields[0])) tags[*id] = *domain;
  }
  std::vector<Domain> out;
  out.reserve(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!tags[i]) {
      throw Error(ErrorKind::kMissingDomain,
                  "entity '" + entities.name(static_cast<std::uint32_t>(i)) +
                      "' has no domain tag in " + source_name);
    }
    out.push_back(*tags[i]);
  }
  return out;
}

KnowledgeGraph ingest(std::istream& triples, std::istream* domains,
                      IngestReport* report, const std::string& source_name) {
  Vocabulary entities;
  Vocabulary relations;
  IngestReport local;
  auto parsed = parse_triples(triples, entities, relations, source_name, &local);
  if (parsed.empty()) {
    throw Error(ErrorKind::kEmptyDataset, source_name + " contains no triples");
  }
  std::optional<std::vector<Domain>> tags;
  if (domains) tags = parse_domains(*domains, entities, "<domains>");
  KnowledgeGraph kg(std::move(entities), std::move(relations), std::move(parsed),
                    std::move(tags));
  local.duplicates_dropped = kg.duplicates_dropped();
  if (report) *report = local;
  return kg;
}

KnowledgeGraph load_graph(const std::filesystem::path& triples,
                          const std::optional<std::filesystem::path>& domains,
                          IngestReport* report) {
  auto in = open_input(triples);
  if (domains) {
    auto din = open_input(*domains);
    return ingest(in, &din, report, triples.string());
  }
  return ingest(in, nullptr, report, triples.string());
}

std::vector<Triple> load_triples_known(const std::filesystem::path& path,
                                       const KnowledgeGraph& vocab) {
  auto in = open_input(path);
  return parse_triples_known(in, vocab.entities(), vocab.relations(),
                             path.string());
}

void write_triples(std::ostream& out, std::span<const Triple> triples,
                   const Vocabulary& entities, const Vocabulary& relations) {
  for (const auto& t : triples) {
    out << entities.name(t.head) << '\t' << relations.name(t.relation) << '\t'
        << entities.name(t.tail) << '\n';
  }
}

void write_domains(std::ostream& out, const KnowledgeGraph& kg) {
  if (!kg.has_domains()) return;
  for (EntityId e = 0; e < kg.num_entities(); ++e) {
    out << kg.entities().name(e) << '\t' << domain_name(kg.domain(e)) << '\n';
  }
}

// --- statistics -----------------------------------------------------------

DomainSignature domain_signature(const KnowledgeGraph& kg, RelationId r) {
  DomainSignature sig;
  if (!kg.has_domains()) return sig;
  for (const auto& t : kg.relation_triples(r)) {
    sig.head_mask |= static_cast<std::uint8_t>(1u << static_cast<int>(kg.domain(t.head)));
    sig.tail_mask |= static_cast<std::uint8_t>(1u << static_cast<int>(kg.domain(t.tail)));
  }
  return sig;
}

std::string signature_label(const DomainSignature& sig) {
  if (sig.head_mask == 0 && sig.tail_mask == 0) return "all";
  auto side = [](std::uint8_t mask) {
    std::string s;
    for (std::size_t i = 0; i < kDomainLetters.size(); ++i) {
      if (mask & (1u << i)) {
        if (!s.empty()) s += '+';
        s += kDomainLetters[i];
      }
    }
    return s;
  };
  return side(sig.head_mask) + "x" + side(sig.tail_mask);
}

std::vector<double> relation_frequency(const KnowledgeGraph& kg,
                                       FrequencyGrouping grouping) {
  if (kg.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "relation_frequency on empty graph");
  }
  const auto n_rel = kg.num_relations();
  std::vector<double> out(n_rel, 0.0);
  if (grouping == FrequencyGrouping::kOverall || !kg.has_domains()) {
    const auto total = static_cast<double>(kg.size());
    for (RelationId r = 0; r < n_rel; ++r) {
      out[r] = 100.0 * static_cast<double>(kg.relation_count(r)) / total;
    }
    return out;
  }
  std::vector<DomainSignature> sigs(n_rel);
  for (RelationId r = 0; r < n_rel; ++r) sigs[r] = domain_signature(kg, r);
  for (RelationId r = 0; r < n_rel; ++r) {
    std::size_t block_total = 0;
    for (RelationId s = 0; s < n_rel; ++s) {
      if (sigs[s] == sigs[r]) block_total += kg.relation_count(s);
    }
    if (block_total > 0) {
      out[r] = 100.0 * static_cast<double>(kg.relation_count(r)) /
               static_cast<double>(block_total);
    }
  }
  return out;
}

PropertyStats property_stats(const KnowledgeGraph& kg, RelationId r) {
  if (r >= kg.num_relations()) {
    throw invalid_argument("unknown relation id " + std::to_string(r));
  }
  auto triples = kg.relation_triples(r);
  if (triples.empty()) {
    throw invalid_argument("relation '" + kg.relations().name(r) +
                           "' has no triples");
  }
  PropertyStats out;
  if (kg.has_domains()) {
    auto sig = domain_signature(kg, r);
    if ((sig.head_mask & sig.tail_mask) == 0) return out;
  }

  std::unordered_set<EntityId> active;
  std::size_t reflexive = 0;
  std::size_t symmetric = 0;
  std::size_t premises = 0;
  std::size_t satisfied = 0;
  for (const auto& t : triples) {
    active.insert(t.head);
    active.insert(t.tail);
    if (t.head == t.tail) ++reflexive;
    if (kg.contains(t.tail, r, t.head)) ++symmetric;
    for (EntityId z : kg.tails(t.tail, r)) {
      ++premises;
      if (kg.contains(t.head, r, z)) ++satisfied;
    }
  }
  out.reflexive = 100.0 * static_cast<double>(reflexive) /
                  static_cast<double>(active.size());
  out.symmetric = 100.0 * static_cast<double>(symmetric) /
                  static_cast<double>(triples.size());
  if (premises > 0) {
    out.transitive = 100.0 * static_cast<double>(satisfied) /
                     static_cast<double>(premises);
  }
  return out;
}

StatsReport compute_stats(const KnowledgeGraph& kg) {
  auto overall = relation_frequency(kg, FrequencyGrouping::kOverall);
  auto in_block = relation_frequency(kg, FrequencyGrouping::kByDomainSignature);
  StatsReport report;
  for (RelationId r = 0; r < kg.num_relations(); ++r) {
    if (kg.relation_count(r) == 0) continue;
    RelationStatsRow row;
    row.relation = r;
    row.block = signature_label(domain_signature(kg, r));
    row.freq_overall = overall[r];
    row.freq_in_block = in_block[r];
    row.properties = property_stats(kg, r);
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_stats_csv(std::ostream& out, const StatsReport& report,
                     const KnowledgeGraph& kg) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << *v;
    return s.str();
  };
  out << "relation,domain_block,freq_overall,freq_in_block,reflexive,symmetric,"
         "transitive\n";
  for (const auto& row : report.rows) {
    out << kg.relations().name(row.relation) << ',' << row.block << ','
        << cell(row.freq_overall) << ',' << cell(row.freq_in_block) << ','
        << cell(row.properties.reflexive) << ','
        << cell(row.properties.symmetric) << ','
        << cell(row.properties.transitive) << '\n';
  }
}

// --- splits -----------------------------------------------------------------

Split split(const KnowledgeGraph& kg, std::array<double, 3> ratios,
            std::uint64_t seed) {
  for (double r : ratios) {
    if (!(r >= 0.0)) throw invalid_argument("split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw invalid_argument("split ratios must sum to 1");
  }
  const auto n = kg.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_valid = static_cast<std::size_t>(std::floor(ratios[1] * n + 0.5));
  const auto n_test =
      std::min(n - n_valid, static_cast<std::size_t>(std::floor(ratios[2] * n + 0.5)));
  const auto n_train = n - n_valid - n_test;

  // 0 = train, 1 = valid, 2 = test, indexed by original triple position.
  std::vector<std::uint8_t> part(n, 0);
  for (std::size_t i = n_train; i < n_train + n_valid; ++i) part[order[i]] = 1;
  for (std::size_t i = n_train + n_valid; i < n; ++i) part[order[i]] = 2;

  std::vector<bool> ent_seen(kg.num_entities(), false);
  std::vector<bool> rel_seen(kg.num_relations(), false);
  const auto& triples = kg.triples();
  auto cover = [&](const Triple& t) {
    ent_seen[t.head] = ent_seen[t.tail] = true;
    rel_seen[t.relation] = true;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (part[i] == 0) cover(triples[i]);
  }
  for (std::uint8_t p : {std::uint8_t{1}, std::uint8_t{2}}) {
    for (std::size_t k = 0; k < n; ++k) {
      auto i = order[k];
      if (part[i] != p) continue;
      const auto& t = triples[i];
      if (!ent_seen[t.head] || !ent_seen[t.tail] || !rel_seen[t.relation]) {
        part[i] = 0;
        cover(t);
      }
    }
  }

  Split out;
  out.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    (part[i] == 0 ? out.train : part[i] == 1 ? out.valid : out.test)
        .push_back(triples[i]);
  }
  if ((ratios[1] > 0.0 && n_valid > 0 && out.valid.empty()) ||
      (ratios[2] > 0.0 && n_test > 0 && out.test.empty())) {
    throw invalid_argument(
        "graph too small: coverage reassignment emptied a held-out partition");
  }
  return out;
}

}  // namespace r2n
