#include "r2n/kge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "r2n/error.hpp"

namespace r2n {

namespace {

ad::Tensor uniform_table(std::size_t rows, std::size_t cols, double bound,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::uint32_t> column(std::span<const Triple> triples, int which) {
  std::vector<std::uint32_t> out;
  out.reserve(triples.size());
  for (const auto& t : triples) {
    out.push_back(which == 0 ? t.head : which == 1 ? t.relation : t.tail);
  }
  return out;
}

}  // namespace

std::string scorer_name(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::kTransE: return "transe";
    case ScorerKind::kDistMult: return "distmult";
    case ScorerKind::kComplEx: return "complex";
  }
  return "?";
}

ScorerKind parse_scorer(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "transe") return ScorerKind::kTransE;
  if (lower == "distmult") return ScorerKind::kDistMult;
  if (lower == "complex") return ScorerKind::kComplEx;
  throw invalid_argument("unknown scorer '" + std::string(name) + "'");
}

KGEModel::KGEModel(ScorerKind kind, std::size_t n_entities, std::size_t n_relations,
                   std::size_t dim, std::uint64_t seed)
    : kind_(kind), n_entities_(n_entities), n_relations_(n_relations), dim_(dim) {
  if (dim == 0) throw invalid_argument("embedding dim must be positive");
  if (kind == ScorerKind::kComplEx && dim % 2 != 0) {
    throw invalid_argument("ComplEx needs an even embedding dim");
  }
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  if (kind == ScorerKind::kComplEx) {
    const auto half = dim / 2;
    params_.add("kge.entity.re", uniform_table(n_entities, half, bound, rng), true);
    params_.add("kge.entity.im", uniform_table(n_entities, half, bound, rng), true);
    params_.add("kge.relation.re", uniform_table(n_relations, half, bound, rng), true);
    params_.add("kge.relation.im", uniform_table(n_relations, half, bound, rng), true);
  } else {
    params_.add("kge.entity", uniform_table(n_entities, dim, bound, rng), true);
    params_.add("kge.relation", uniform_table(n_relations, dim, bound, rng), true);
  }
}

std::size_t KGEModel::rep_dim() const {
  return kind_ == ScorerKind::kComplEx ? dim_ / 2 : dim_;
}

void KGEModel::check_ids(const Triple& t) const {
  if (t.head >= n_entities_ || t.tail >= n_entities_ || t.relation >= n_relations_) {
    throw invalid_argument("triple id out of range for the embedding tables");
  }
}

ad::Var KGEModel::representation(ad::Tape& tape, std::span<const Triple> triples) {
  for (const auto& t : triples) check_ids(t);
  const auto heads = column(triples, 0);
  const auto rels = column(triples, 1);
  const auto tails = column(triples, 2);
  switch (kind_) {
    case ScorerKind::kTransE: {
      auto& ent = params_.get("kge.entity");
      auto& rel = params_.get("kge.relation");
      auto h = ad::gather_rows(tape, ent, heads);
      auto r = ad::gather_rows(tape, rel, rels);
      auto t = ad::gather_rows(tape, ent, tails);
      return ad::subtract(ad::add(h, r), t);
    }
    case ScorerKind::kDistMult: {
      auto& ent = params_.get("kge.entity");
      auto& rel = params_.get("kge.relation");
      auto h = ad::gather_rows(tape, ent, heads);
      auto r = ad::gather_rows(tape, rel, rels);
      auto t = ad::gather_rows(tape, ent, tails);
      return ad::multiply(ad::multiply(h, r), t);
    }
    case ScorerKind::kComplEx: {
      auto& ere = params_.get("kge.entity.re");
      auto& eim = params_.get("kge.entity.im");
      auto& rre = params_.get("kge.relation.re");
      auto& rim = params_.get("kge.relation.im");
      auto hr = ad::gather_rows(tape, ere, heads);
      auto hi = ad::gather_rows(tape, eim, heads);
      auto wr = ad::gather_rows(tape, rre, rels);
      auto wi = ad::gather_rows(tape, rim, rels);
      auto tr = ad::gather_rows(tape, ere, tails);
      auto ti = ad::gather_rows(tape, eim, tails);
      // Re(h * w * conj(t)) per lane.
      auto a = ad::multiply(ad::multiply(hr, wr), tr);
      auto b = ad::multiply(ad::multiply(hi, wr), ti);
      auto c = ad::multiply(ad::multiply(hr, wi), ti);
      auto d = ad::multiply(ad::multiply(hi, wi), tr);
      return ad::subtract(ad::add(ad::add(a, b), c), d);
    }
  }
  throw invalid_argument("unknown scorer");
}

ad::Var KGEModel::score(ad::Var rep) const {
  if (kind_ == ScorerKind::kTransE) return ad::reciprocal_1p(ad::row_norm(rep));
  return ad::sigmoid(ad::sum_cols(rep));
}

void KGEModel::representation_into(const Triple& t, std::span<double> out) const {
  check_ids(t);
  const auto n = rep_dim();
  if (out.size() != n) throw invalid_argument("representation buffer has wrong width");
  if (kind_ == ScorerKind::kComplEx) {
    auto hr = params_.get("kge.entity.re").value.row(t.head);
    auto hi = params_.get("kge.entity.im").value.row(t.head);
    auto tr = params_.get("kge.entity.re").value.row(t.tail);
    auto ti = params_.get("kge.entity.im").value.row(t.tail);
    auto wr = params_.get("kge.relation.re").value.row(t.relation);
    auto wi = params_.get("kge.relation.im").value.row(t.relation);
    for (std::size_t k = 0; k < n; ++k) {
      out[k] = hr[k] * wr[k] * tr[k] + hi[k] * wr[k] * ti[k] + hr[k] * wi[k] * ti[k] -
               hi[k] * wi[k] * tr[k];
    }
    return;
  }
  auto h = params_.get("kge.entity").value.row(t.head);
  auto r = params_.get("kge.relation").value.row(t.relation);
  auto e = params_.get("kge.entity").value.row(t.tail);
  if (kind_ == ScorerKind::kTransE) {
    for (std::size_t k = 0; k < n; ++k) out[k] = h[k] + r[k] - e[k];
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = h[k] * r[k] * e[k];
  }
}

double KGEModel::score_from_rep(ScorerKind kind, std::span<const double> rep) {
  double p = 0.0;
  if (kind == ScorerKind::kTransE) {
    double s = 0.0;
    for (double v : rep) s += v * v;
    p = 1.0 / (1.0 + std::sqrt(s));
  } else {
    p = sigmoid(std::accumulate(rep.begin(), rep.end(), 0.0));
  }
  return std::clamp(p, ad::kProbClamp, 1.0 - ad::kProbClamp);
}

double KGEModel::score(const Triple& t) const {
  std::vector<double> rep(rep_dim());
  representation_into(t, rep);
  return score_from_rep(kind_, rep);
}

// --- negative sampling ---------------------------------------------------------------

NegativeSampler::NegativeSampler(std::size_t k, std::size_t n_entities, std::uint64_t seed,
                                 std::size_t max_retries)
    : k_(k), n_entities_(n_entities), max_retries_(max_retries), rng_(seed) {
  if (k == 0) throw invalid_argument("negative sampler needs k >= 1");
  if (n_entities < 2) throw invalid_argument("negative sampling needs >= 2 entities");
}

std::vector<Triple> NegativeSampler::sample(
    const Triple& positive, const std::function<bool(const Triple&)>& in_train) {
  std::vector<Triple> out;
  out.reserve(k_);
  std::bernoulli_distribution coin(0.5);
  // Draw from n-1 values and skip the original, so the replacement always differs.
  std::uniform_int_distribution<EntityId> pick(0, static_cast<EntityId>(n_entities_ - 2));
  for (std::size_t i = 0; i < k_; ++i) {
    Triple neg = positive;
    for (std::size_t attempt = 0;; ++attempt) {
      neg = positive;
      const bool corrupt_head = coin(rng_);
      EntityId& slot = corrupt_head ? neg.head : neg.tail;
      EntityId e = pick(rng_);
      if (e >= slot) ++e;
      slot = e;
      if (!in_train || !in_train(neg)) break;
      if (attempt + 1 >= max_retries_) {
        ++accepted_after_retries_;
        break;
      }
    }
    out.push_back(neg);
  }
  return out;
}

// --- pretraining -------------------------------------------------------------------------

TrainReport pretrain(KGEModel& model, std::span<const Triple> train,
                     const TripleSet& train_set, const PretrainConfig& config) {
  if (train.empty()) throw Error(ErrorKind::kEmptyDataset, "pretrain: empty training set");
  if (config.batch == 0) throw invalid_argument("pretrain: batch size must be positive");
  TrainReport report;
  ad::Adam adam({.lr = config.lr, .sparse = config.sparse_adam});
  std::mt19937_64 rng(config.seed);
  NegativeSampler sampler(config.negatives, model.num_entities(), rng());
  auto in_train = [&](const Triple& t) { return train_set.contains(t); };
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Triple> batch;
  std::vector<double> targets;
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
      auto pred = model.score(model.representation(tape, batch));
      auto loss = ad::bce_loss(pred, ad::Tensor(batch.size(), 1, targets));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "pretrain: non-finite loss at epoch " << epoch << ", batch starting "
            << start;
        throw Error(ErrorKind::kNumeric, msg.str());
      }
      tape.backward(loss);
      adam.step(model.params());
      total += value * static_cast<double>(batch.size());
      count += batch.size();
    }
    report.epoch_loss.push_back(total / static_cast<double>(count));
  }
  return report;
}

}  // namespace r2n
