#include "r2n/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "r2n/digest.hpp"
#include "r2n/error.hpp"

namespace r2n {

namespace {

ad::Tensor uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                   std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

constexpr std::size_t kPredictChunk = 256;

}  // namespace

std::string anchor_name(Anchor a) { return a == Anchor::kInput ? "input" : "previous"; }

Anchor parse_anchor(std::string_view name) {
  const auto s = lower(name);
  if (s == "input") return Anchor::kInput;
  if (s == "previous") return Anchor::kPrevious;
  throw invalid_argument("unknown anchor '" + std::string(name) + "' (input|previous)");
}

std::string wiring_name(CandidateWiring w) {
  return w == CandidateWiring::kGraph ? "graph" : "isolated";
}

CandidateWiring parse_wiring(std::string_view name) {
  const auto s = lower(name);
  if (s == "graph") return CandidateWiring::kGraph;
  if (s == "isolated") return CandidateWiring::kIsolated;
  throw invalid_argument("unknown candidate wiring '" + std::string(name) +
                         "' (graph|isolated)");
}

std::string R2NModel::factor_weight_name(std::size_t layer, const std::string& rule) {
  return "layer" + std::to_string(layer) + ".factor[" + rule + "]";
}

std::string R2NModel::atom_weight_name(std::size_t layer, const std::string& rule,
                                       std::size_t position) {
  return "layer" + std::to_string(layer) + ".atom[" + rule + "]." + std::to_string(position);
}

R2NModel::R2NModel(KGEModel kge, std::vector<HornRule> rules, const Vocabulary& relations,
                   R2NConfig config)
    : kge_(std::move(kge)), rules_(std::move(rules)), config_(config) {
  if (config_.layers == 0) throw invalid_argument("R2N needs at least one reasoning layer");
  if (config_.factor_dim == 0) throw invalid_argument("factor dim must be positive");
  std::string joined;
  for (const auto& r : rules_) {
    if (r.body.empty()) throw invalid_argument("rule without body atoms");
    rule_texts_.push_back(rule_text(r, relations));
    joined += rule_texts_.back();
    joined += '\n';
  }
  digest_ = sha256_hex(joined);

  const auto d = atom_dim();
  const auto df = config_.factor_dim;
  std::mt19937_64 rng(config_.seed);
  for (std::size_t l = 1; l <= config_.layers; ++l) {
    for (std::size_t j = 0; j < rules_.size(); ++j) {
      const auto& text = rule_texts_[j];
      const auto arity = rules_[j].arity();
      const auto fname = factor_weight_name(l, text);
      if (params_.contains(fname + ".W")) {
        throw invalid_argument("duplicate rule in R2N rule set: " + text);
      }
      params_.add(fname + ".W", uniform(arity * d, df, arity * d, rng));
      params_.add(fname + ".b", uniform(1, df, arity * d, rng));
      for (std::size_t p = 0; p < arity; ++p) {
        const auto aname = atom_weight_name(l, text, p);
        params_.add(aname + ".W", uniform(df, d, df, rng));
        params_.add(aname + ".b", uniform(1, d, df, rng));
      }
    }
  }
  params_.add("output.W", uniform(d, 1, d, rng));
  params_.add("output.b", uniform(1, 1, d, rng));
}

void R2NModel::check_graph(const FactorGraph& graph) const {
  if (!graph.frozen()) throw invalid_argument("factor graph must be frozen");
  if (graph.rules() != rules_) {
    throw Error(ErrorKind::kFormat, "factor graph rule set does not match the R2N model");
  }
}

ad::Var R2NModel::run(ad::Tape& tape, const FactorGraph* graph, std::span<const Slot> slots,
                      std::size_t layers, bool head) {
  std::vector<Triple> local_triples;
  std::unordered_map<AtomId, std::uint32_t> local_of;
  std::vector<std::uint32_t> slot_local;
  slot_local.reserve(slots.size());
  auto local_atom = [&](AtomId a) {
    auto [it, inserted] =
        local_of.try_emplace(a, static_cast<std::uint32_t>(local_triples.size()));
    if (inserted) local_triples.push_back(graph->atom(a).triple);
    return it->second;
  };
  std::vector<AtomId> frontier;
  for (const auto& s : slots) {
    if (s.atom) {
      slot_local.push_back(local_atom(*s.atom));
      frontier.push_back(*s.atom);
    } else {
      slot_local.push_back(static_cast<std::uint32_t>(local_triples.size()));
      local_triples.push_back(s.triple);
    }
  }

  // Receptive field: factors[l] are the factors feeding layer l states of
  // the atoms that layer l+1 (or the head) reads.
  std::vector<std::vector<FactorId>> factors(layers + 1);
  if (graph != nullptr) {
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
    for (std::size_t l = layers; l >= 1; --l) {
      auto& fl = factors[l];
      for (AtomId a : frontier) {
        for (const auto& e : graph->atom_factors(a)) fl.push_back(e.factor);
      }
      std::sort(fl.begin(), fl.end());
      fl.erase(std::unique(fl.begin(), fl.end()), fl.end());
      if (l == 1) break;
      std::vector<AtomId> next = frontier;
      for (FactorId f : fl) {
        for (AtomId a : graph->factor_atoms(f)) next.push_back(a);
      }
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      frontier = std::move(next);
    }
    for (std::size_t l = layers; l >= 1; --l) {
      for (FactorId f : factors[l]) {
        for (AtomId a : graph->factor_atoms(f)) local_atom(a);
      }
    }
  }

  const auto n_local = local_triples.size();
  ad::Var x0 = kge_.representation(tape, local_triples);
  ad::Var prev = x0;
  std::map<std::string, ad::Var> leaves;
  auto param = [&](const std::string& name) {
    auto it = leaves.find(name);
    if (it != leaves.end()) return it->second;
    if (!params_.contains(name)) {
      throw Error(ErrorKind::kShape, "R2N has no network named '" + name + "'");
    }
    auto v = tape.parameter(params_.get(name));
    leaves.emplace(name, v);
    return v;
  };

  for (std::size_t l = 1; l <= layers; ++l) {
    const ad::Var anchor = config_.anchor == Anchor::kInput ? x0 : prev;
    if (factors[l].empty()) {
      prev = anchor;
      continue;
    }
    std::vector<std::vector<FactorId>> by_rule(rules_.size());
    for (FactorId f : factors[l]) by_rule[graph->factor_rule(f)].push_back(f);
    std::vector<ad::Var> messages;
    std::vector<std::uint32_t> targets;
    for (std::size_t j = 0; j < rules_.size(); ++j) {
      const auto& fs = by_rule[j];
      if (fs.empty()) continue;
      const auto arity = rules_[j].arity();
      std::vector<std::vector<std::uint32_t>> rows(arity);
      for (FactorId f : fs) {
        const auto atoms = graph->factor_atoms(f);
        if (atoms.size() != arity) throw invalid_argument("factor arity mismatch");
        for (std::size_t p = 0; p < arity; ++p) rows[p].push_back(local_of.at(atoms[p]));
      }
      std::vector<ad::Var> inputs;
      for (std::size_t p = 0; p < arity; ++p) inputs.push_back(ad::gather_rows(prev, rows[p]));
      const auto fname = factor_weight_name(l, rule_texts_[j]);
      auto xf = ad::relu(ad::add_bias(ad::matmul(ad::concat_cols(inputs), param(fname + ".W")),
                                      param(fname + ".b")));
      for (std::size_t p = 0; p < arity; ++p) {
        const auto aname = atom_weight_name(l, rule_texts_[j], p);
        auto m = ad::add_bias(ad::matmul(xf, param(aname + ".W")), param(aname + ".b"));
        if (!config_.linear_atom_output) m = ad::relu(m);
        messages.push_back(m);
        targets.insert(targets.end(), rows[p].begin(), rows[p].end());
      }
    }
    auto summed = ad::scatter_add_rows(ad::concat_rows(messages), targets, n_local);
    prev = ad::add(anchor, summed);
  }

  auto states = ad::gather_rows(prev, slot_local);
  if (!head) return states;
  return ad::sigmoid(
      ad::add_bias(ad::matmul(states, param("output.W")), param("output.b")));
}

ad::Var R2NModel::forward(ad::Tape& tape, const FactorGraph& graph,
                          std::span<const AtomId> atoms, std::optional<std::size_t> layers) {
  check_graph(graph);
  const auto L = layers.value_or(config_.layers);
  if (L > config_.layers) throw invalid_argument("layer override exceeds model depth");
  std::vector<Slot> slots;
  for (AtomId a : atoms) {
    if (a >= graph.num_atoms()) {
      throw invalid_argument("query atom " + std::to_string(a) + " is not in the factor graph");
    }
    slots.push_back({graph.atom(a).triple, a});
  }
  return run(tape, &graph, slots, L, true);
}

ad::Var R2NModel::forward_triples(ad::Tape& tape, const FactorGraph* graph,
                                  std::span<const Triple> triples, CandidateWiring wiring,
                                  std::optional<std::size_t> layers) {
  if (graph != nullptr) check_graph(*graph);
  const auto L = layers.value_or(config_.layers);
  if (L > config_.layers) throw invalid_argument("layer override exceeds model depth");
  std::vector<Slot> slots;
  slots.reserve(triples.size());
  for (const auto& t : triples) {
    std::optional<AtomId> a;
    if (graph != nullptr && wiring == CandidateWiring::kGraph) a = graph->find(t);
    slots.push_back({t, a});
  }
  return run(tape, graph, slots, L, true);
}

ad::Var R2NModel::atom_states(ad::Tape& tape, const FactorGraph& graph,
                              std::span<const AtomId> atoms, std::size_t layer) {
  check_graph(graph);
  if (layer > config_.layers) throw invalid_argument("layer exceeds model depth");
  std::vector<Slot> slots;
  for (AtomId a : atoms) {
    if (a >= graph.num_atoms()) throw invalid_argument("atom is not in the factor graph");
    slots.push_back({graph.atom(a).triple, a});
  }
  return run(tape, &graph, slots, layer, false);
}

double R2NModel::predict_isolated(const Triple& t) const {
  const auto d = atom_dim();
  std::vector<double> rep(d);
  kge_.representation_into(t, rep);
  const auto& w = params_.get("output.W").value;
  double acc = 0.0;
  for (std::size_t p = 0; p < d; ++p) {
    if (rep[p] == 0.0) continue;
    acc += rep[p] * w.at(p, 0);
  }
  const double v = acc + params_.get("output.b").value.item();
  return 1.0 / (1.0 + std::exp(-v));
}

std::vector<double> R2NModel::predict(const FactorGraph* graph, std::span<const Triple> triples,
                                      CandidateWiring wiring) {
  if (graph != nullptr) check_graph(*graph);
  std::vector<double> out(triples.size());
  std::vector<std::size_t> pending;
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    std::optional<AtomId> a;
    if (graph != nullptr && wiring == CandidateWiring::kGraph) a = graph->find(triples[i]);
    if (!a || graph->atom_factors(*a).empty()) {
      out[i] = predict_isolated(triples[i]);
      continue;
    }
    pending.push_back(i);
    slots.push_back({triples[i], a});
  }
  for (std::size_t start = 0; start < slots.size(); start += kPredictChunk) {
    const auto end = std::min(slots.size(), start + kPredictChunk);
    ad::Tape tape;
    auto y = run(tape, graph, std::span(slots).subspan(start, end - start), config_.layers,
                 true);
    for (std::size_t k = start; k < end; ++k) out[pending[k]] = y.value().at(k - start, 0);
  }
  return out;
}

TrainReport finetune(R2NModel& model, const FactorGraph& graph, std::span<const Triple> train,
                     const TripleSet& train_set, const FinetuneConfig& config) {
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "finetune: empty training set");
  if (config.batch == 0) throw invalid_argument("finetune: batch size must be positive");
  model.check_graph(graph);
  TrainReport report;
  if (config.epochs == 0) return report;

  const bool was_frozen = !model.kge().params().all().empty() &&
                          model.kge().params().all().front()->frozen;
  if (config.freeze_kge) model.kge().params().set_frozen(true);

  ad::Adam adam({.lr = config.lr, .sparse = config.sparse_adam});
  std::mt19937_64 rng(config.seed);
  NegativeSampler sampler(config.negatives, model.kge().num_entities(), rng());
  auto in_train = [&](const Triple& t) { return train_set.contains(t); };
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Triple> batch;
  std::vector<double> targets;
  ad::ParameterStore* stores[] = {&model.kge().params(), &model.params()};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      batch.clear();
      targets.clear();
      const auto end = std::min(order.size(), start + config.batch);
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train[order[i]]);
        targets.push_back(1.0);
      }
      for (std::size_t i = start; i < end; ++i) {
        for (const auto& neg : sampler.sample(train[order[i]], in_train)) {
          batch.push_back(neg);
          targets.push_back(0.0);
        }
      }
      ad::Tape tape;
      auto pred = model.forward_triples(tape, &graph, batch, config.wiring);
      auto loss = ad::bce_loss(pred, ad::Tensor(batch.size(), 1, targets));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "finetune: non-finite loss at epoch " << epoch << ", batch starting " << start;
        throw Error(ErrorKind::kNumeric, msg.str());
      }
      tape.backward(loss);
      adam.step(stores);
      total += value * static_cast<double>(batch.size());
      count += batch.size();
    }
    report.epoch_loss.push_back(total / static_cast<double>(count));
  }
  if (config.freeze_kge && !was_frozen) model.kge().params().set_frozen(false);
  return report;
}

namespace {

std::string checkpoint_echo(const R2NModel& model) {
  std::ostringstream out;
  const auto& c = model.config();
  out << "rule_set_digest=" << model.rule_set_digest() << '\n'
      << "scorer=" << scorer_name(model.kge().kind()) << '\n'
      << "dim=" << model.kge().dim() << '\n'
      << "layers=" << c.layers << '\n'
      << "factor_dim=" << c.factor_dim << '\n'
      << "anchor=" << anchor_name(c.anchor) << '\n'
      << "linear_atom_output=" << (c.linear_atom_output ? 1 : 0) << '\n'
      << "rules=" << model.rules().size() << '\n';
  return out.str();
}

std::string echo_value(const std::string& echo, const std::string& key) {
  std::istringstream in(echo);
  std::string line;
  while (std::getline(in, line)) {
    if (line.starts_with(key + "=")) return line.substr(key.size() + 1);
  }
  return {};
}

}  // namespace

void save_r2n_checkpoint(const std::filesystem::path& path, const R2NModel& model,
                         const ad::Adam* adam) {
  const ad::ParameterStore* stores[] = {&model.kge().params(), &model.params()};
  ad::save_checkpoint(path, ad::make_checkpoint(stores, adam, checkpoint_echo(model)));
}

void load_r2n_checkpoint(const std::filesystem::path& path, R2NModel& model, ad::Adam* adam) {
  const auto ckpt = ad::load_checkpoint(path);
  const auto digest = echo_value(ckpt.config, "rule_set_digest");
  if (digest != model.rule_set_digest()) {
    throw Error(ErrorKind::kFormat, "checkpoint " + path.string() +
                                        " was trained on a different rule set (digest " +
                                        digest + ", model " + model.rule_set_digest() + ")");
  }
  ad::ParameterStore* stores[] = {&model.kge().params(), &model.params()};
  ad::restore_checkpoint(ckpt, stores, adam);
}

}  // namespace r2n
