#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2n/autodiff.hpp"
#include "r2n/grounding.hpp"
#include "r2n/kge.hpp"

namespace r2n {

// Residual anchor of the atom update: the KGE representation at every
// layer, or the previous layer's state.
enum class Anchor { kInput, kPrevious };

// How a triple that is not a query atom of the graph is wired: looked up in
// the factor graph (and then it sees its factors), or always isolated.
enum class CandidateWiring { kGraph, kIsolated };

std::string anchor_name(Anchor a);
Anchor parse_anchor(std::string_view name);
std::string wiring_name(CandidateWiring w);
CandidateWiring parse_wiring(std::string_view name);

struct R2NConfig {
  std::size_t layers = 2;
  std::size_t factor_dim = 25;
  Anchor anchor = Anchor::kInput;
  // Atom networks end in ReLU unless this is set.
  bool linear_atom_output = false;
  std::uint64_t seed = 0;
};

// Reasoning layers plus output head on top of a KGE model. Per-layer,
// per-rule weights are keyed by canonical rule text.
class R2NModel {
 public:
  // `rules` must be the rule list of the factor graphs this model is run on
  // (see FactorGraph::rules()).
  R2NModel(KGEModel kge, std::vector<HornRule> rules, const Vocabulary& relations,
           R2NConfig config);

  const R2NConfig& config() const { return config_; }
  KGEModel& kge() { return kge_; }
  const KGEModel& kge() const { return kge_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }
  const std::vector<HornRule>& rules() const { return rules_; }
  const std::vector<std::string>& rule_texts() const { return rule_texts_; }
  std::size_t atom_dim() const { return kge_.rep_dim(); }
  // SHA-256 over the newline-joined canonical rule texts.
  const std::string& rule_set_digest() const { return digest_; }

  static std::string factor_weight_name(std::size_t layer, const std::string& rule);
  static std::string atom_weight_name(std::size_t layer, const std::string& rule,
                                      std::size_t position);

  // Predictions [n x 1] for atoms of the graph. `layers` overrides the
  // number of reasoning layers used (at most config().layers).
  ad::Var forward(ad::Tape& tape, const FactorGraph& graph, std::span<const AtomId> atoms,
                  std::optional<std::size_t> layers = std::nullopt);
  // Predictions for arbitrary triples; a triple absent from the graph (or
  // any triple under kIsolated wiring) is an atom without factors.
  ad::Var forward_triples(ad::Tape& tape, const FactorGraph* graph,
                          std::span<const Triple> triples, CandidateWiring wiring,
                          std::optional<std::size_t> layers = std::nullopt);
  // Atom states x^l for the given atoms after `layer` reasoning layers
  // (0 = KGE representation), [n x atom_dim].
  ad::Var atom_states(ad::Tape& tape, const FactorGraph& graph,
                      std::span<const AtomId> atoms, std::size_t layer);

  // Tape-free inference. Atoms without factors take a fast path that
  // reproduces the tape arithmetic exactly.
  std::vector<double> predict(const FactorGraph* graph, std::span<const Triple> triples,
                              CandidateWiring wiring);
  double predict_isolated(const Triple& t) const;

  void check_graph(const FactorGraph& graph) const;

 private:
  struct Slot {
    Triple triple;
    std::optional<AtomId> atom;
  };
  ad::Var run(ad::Tape& tape, const FactorGraph* graph, std::span<const Slot> slots,
              std::size_t layers, bool head);

  KGEModel kge_;
  std::vector<HornRule> rules_;
  std::vector<std::string> rule_texts_;
  std::string digest_;
  R2NConfig config_;
  ad::ParameterStore params_;
};

struct FinetuneConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch = 1024;
  std::size_t negatives = 2;
  std::uint64_t seed = 0;
  bool sparse_adam = true;
  bool freeze_kge = false;
  CandidateWiring wiring = CandidateWiring::kGraph;
};

// BCE over train positives and sampled negatives through the full model.
// Throws kNumeric on a non-finite loss.
TrainReport finetune(R2NModel& model, const FactorGraph& graph, std::span<const Triple> train,
                     const TripleSet& train_set, const FinetuneConfig& config);

// KGE tables, reasoning weights, Adam state and a config echo holding the
// rule-set digest. Loading into a model built from different rules fails.
void save_r2n_checkpoint(const std::filesystem::path& path, const R2NModel& model,
                         const ad::Adam* adam);
void load_r2n_checkpoint(const std::filesystem::path& path, R2NModel& model,
                         ad::Adam* adam);

}  // namespace r2n
