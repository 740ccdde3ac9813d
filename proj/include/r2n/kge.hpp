#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "r2n/autodiff.hpp"
#include "r2n/kg.hpp"

namespace r2n {

enum class ScorerKind { kTransE, kDistMult, kComplEx };

std::string scorer_name(ScorerKind kind);
ScorerKind parse_scorer(std::string_view name);

// Input atom embedding layer: entity and relation tables plus the scorer's
// atom representation and score function.
class KGEModel {
 public:
  // Tables are initialised uniformly in [-1/sqrt(dim), 1/sqrt(dim)].
  KGEModel(ScorerKind kind, std::size_t n_entities, std::size_t n_relations,
           std::size_t dim, std::uint64_t seed);

  ScorerKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  // Width of the atom representation: dim, or dim/2 complex lanes for ComplEx.
  std::size_t rep_dim() const;
  std::size_t num_entities() const { return n_entities_; }
  std::size_t num_relations() const { return n_relations_; }

  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }

  // [n x rep_dim] atom representations recorded on the tape.
  ad::Var representation(ad::Tape& tape, std::span<const Triple> triples);
  // [n x 1] probabilities from representations.
  ad::Var score(ad::Var representation) const;

  // Tape-free paths used for ranking; identical arithmetic to the tape path.
  void representation_into(const Triple& t, std::span<double> out) const;
  double score(const Triple& t) const;
  static double score_from_rep(ScorerKind kind, std::span<const double> rep);

  void check_ids(const Triple& t) const;

 private:
  ScorerKind kind_;
  std::size_t n_entities_;
  std::size_t n_relations_;
  std::size_t dim_;
  ad::ParameterStore params_;
};

class NegativeSampler {
 public:
  // Replacement entity must differ from the source triple; corrupted triples
  // in train are redrawn up to max_retries times, then accepted.
  NegativeSampler(std::size_t k, std::size_t n_entities, std::uint64_t seed,
                  std::size_t max_retries = 32);

  std::vector<Triple> sample(const Triple& positive,
                             const std::function<bool(const Triple&)>& in_train);
  std::size_t k() const { return k_; }
  std::size_t accepted_after_retries() const { return accepted_after_retries_; }

 private:
  std::size_t k_;
  std::size_t n_entities_;
  std::size_t max_retries_;
  std::mt19937_64 rng_;
  std::size_t accepted_after_retries_ = 0;
};

struct PretrainConfig {
  std::size_t epochs = 250;
  double lr = 1e-2;
  std::size_t batch = 1024;
  std::size_t negatives = 2;
  std::uint64_t seed = 0;
  bool sparse_adam = true;
};

struct TrainReport {
  std::vector<double> epoch_loss;
};

// BCE over positives (target 1) and sampled negatives (target 0), Adam.
// Throws kNumeric on a non-finite loss.
TrainReport pretrain(KGEModel& model, std::span<const Triple> train,
                     const TripleSet& train_set, const PretrainConfig& config);

}  // namespace r2n
