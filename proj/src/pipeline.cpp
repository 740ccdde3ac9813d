#include "r2n/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "r2n/digest.hpp"
#include "r2n/eval.hpp"
#include "r2n/grounding.hpp"
#include "r2n/reasoning.hpp"
#include "r2n/rules.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace r2n {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse: return 3;
    case ErrorKind::kEmptyDataset: return 4;
    case ErrorKind::kMissingDomain: return 5;
    case ErrorKind::kMissingArtifact: return 6;
    case ErrorKind::kNumeric: return 7;
    case ErrorKind::kLocked: return 8;
    case ErrorKind::kInvalidArgument: return 9;
    case ErrorKind::kIo: return 10;
    case ErrorKind::kUndefinedStatistic:
    case ErrorKind::kShape:
    case ErrorKind::kFormat: return 11;
  }
  return 1;
}

// --- lock and atomic writes ---------------------------------------------------------

DirLock::DirLock(const fs::path& dir) : path_(dir / ".lock") {
  fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd_ < 0) {
    if (errno == EEXIST) {
      throw Error(ErrorKind::kLocked, "experiment directory " + dir.string() +
                                          " is locked by another process (remove " +
                                          path_.string() + " if it is stale)");
    }
    throw Error(ErrorKind::kIo, "cannot create lock file " + path_.string());
  }
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd_, pid.data(), pid.size());
}

DirLock::~DirLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

void commit_atomic(const fs::path& path, const std::function<void(const fs::path&)>& write) {
  fs::path tmp = path;
  tmp += ".tmp";
  try {
    write(tmp);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot rename " + tmp.string() + ": " + ec.message());
}

void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& write) {
  commit_atomic(path, [&](const fs::path& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    write(out);
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "write failed for " + tmp.string());
  });
}

// --- experiment -----------------------------------------------------------------

namespace {

const fs::path& ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

}  // namespace

Experiment::Experiment(fs::path dir, ExperimentConfig config, bool force, std::ostream* log)
    : dir_(std::move(dir)),
      config_(std::move(config)),
      force_(force),
      log_(log),
      lock_(ensure_dir(dir_)) {
  const auto path = file("manifest.json");
  if (fs::exists(path)) {
    std::ifstream in(path);
    try {
      manifest_ = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kFormat, "corrupt manifest " + path.string() + ": " + e.what());
    }
  }
  if (!manifest_.is_object()) manifest_ = json::object();
  manifest_["version"] = 1;
  if (!manifest_.contains("stages")) manifest_["stages"] = json::object();
}

std::ostream& Experiment::log() const { return log_ ? *log_ : std::clog; }

std::uint64_t Experiment::seed(const std::string& stage) const {
  return derive_seed(config_.uinteger("seed"), stage);
}

fs::path Experiment::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : file(p.string());
}

fs::path Experiment::require(const std::string& name, const std::string& producer) const {
  const auto p = file(name);
  if (!fs::exists(p)) {
    throw Error(ErrorKind::kMissingArtifact,
                "missing " + p.string() + "; run `r2n " + producer + "` first");
  }
  return p;
}

void Experiment::set_manifest_value(const std::string& key, json value) {
  manifest_[key] = std::move(value);
}

void Experiment::save_manifest() {
  manifest_["config"] = config_.serialize();
  write_atomic(file("manifest.json"), [&](std::ostream& out) { out << manifest_.dump(2) << '\n'; });
}

bool Experiment::run_stage(const std::string& stage, const std::vector<fs::path>& inputs,
                           const std::string& params, const std::vector<std::string>& outputs,
                           const std::function<void()>& body) {
  json in_digests = json::object();
  for (const auto& p : inputs) {
    const auto full = resolve(p);
    if (!fs::exists(full)) {
      throw Error(ErrorKind::kMissingArtifact, "stage " + stage + " needs " + full.string());
    }
    in_digests[p.string()] = sha256_file(full);
  }
  const auto params_digest = sha256_hex(params);
  auto& stages = manifest_["stages"];
  if (!force_ && stages.contains(stage)) {
    const auto& st = stages[stage];
    bool fresh = st.value("params_digest", "") == params_digest && st["inputs"] == in_digests &&
                 st.contains("outputs");
    if (fresh) {
      for (const auto& o : outputs) {
        const auto p = file(o);
        if (!st["outputs"].contains(o) || !fs::exists(p) ||
            st["outputs"][o].get<std::string>() != sha256_file(p)) {
          fresh = false;
          break;
        }
      }
    }
    if (fresh) {
      log() << stage << ": up to date\n";
      return false;
    }
  }
  log() << stage << ": running\n";
  const auto t0 = std::chrono::steady_clock::now();
  body();
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  json outs = json::object();
  for (const auto& o : outputs) outs[o] = sha256_file(require(o, stage));
  stages[stage] = json{{"params_digest", params_digest},
                       {"params", params},
                       {"inputs", in_digests},
                       {"outputs", outs},
                       {"seconds", dt.count()}};
  save_manifest();
  log() << stage << ": done in " << dt.count() << " s\n";
  return true;
}

KGEModel clone_kge(const KGEModel& model) {
  KGEModel copy(model.kind(), model.num_entities(), model.num_relations(), model.dim(), 0);
  for (const auto* p : model.params().all()) copy.params().get(p->name).value = p->value;
  return copy;
}

// --- helpers ------------------------------------------------------------------------

namespace {

struct Splits {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
};

KnowledgeGraph load_kg(const Experiment& exp) {
  const auto kg_path = exp.require("kg.tsv", "ingest");
  std::optional<fs::path> domains;
  if (fs::exists(exp.file("domains.tsv"))) domains = exp.file("domains.tsv");
  return load_graph(kg_path, domains);
}

Splits load_splits(const Experiment& exp, const KnowledgeGraph& kg) {
  return {load_triples_known(exp.require("train.tsv", "split"), kg),
          load_triples_known(exp.require("valid.tsv", "split"), kg),
          load_triples_known(exp.require("test.tsv", "split"), kg)};
}

KnowledgeGraph subgraph(const KnowledgeGraph& kg, std::vector<Triple> triples) {
  return KnowledgeGraph(kg.entities(), kg.relations(), std::move(triples));
}

MinedRuleSet load_rules(const fs::path& path, const Vocabulary& relations) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return read_rules(in, relations, path.string());
}

FactorGraph load_factor_graph(const Experiment& exp, const KnowledgeGraph& kg) {
  const auto path = exp.require("factor_graph.txt", "ground");
  std::ifstream in(path);
  return read_factor_graph(in, kg.relations());
}

KGEModel new_kge(const ExperimentConfig& cfg, const KnowledgeGraph& kg, std::uint64_t seed) {
  return KGEModel(parse_scorer(cfg.str("kge.scorer")), kg.num_entities(), kg.num_relations(),
                  cfg.uinteger("kge.dim"), seed);
}

KGEModel load_kge(const Experiment& exp, const KnowledgeGraph& kg) {
  auto model = new_kge(exp.config(), kg, exp.seed("kge-init"));
  const auto ckpt = ad::load_checkpoint(exp.require("kge.ckpt", "pretrain"));
  ad::ParameterStore* stores[] = {&model.params()};
  ad::restore_checkpoint(ckpt, stores, nullptr);
  return model;
}

R2NConfig r2n_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  R2NConfig c;
  c.layers = cfg.uinteger("r2n.layers");
  c.factor_dim = cfg.uinteger("r2n.factor_dim");
  c.anchor = parse_anchor(cfg.str("r2n.anchor"));
  c.linear_atom_output = cfg.boolean("r2n.linear_atom_output");
  c.seed = seed;
  return c;
}

PretrainConfig pretrain_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  PretrainConfig c;
  c.epochs = cfg.uinteger("kge.epochs");
  c.lr = cfg.real("kge.lr");
  c.batch = cfg.uinteger("kge.batch");
  c.negatives = cfg.uinteger("train.negatives");
  c.sparse_adam = cfg.boolean("train.sparse_adam");
  c.seed = seed;
  return c;
}

FinetuneConfig finetune_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  FinetuneConfig c;
  c.epochs = cfg.uinteger("finetune.epochs");
  c.lr = cfg.real("finetune.lr");
  c.batch = cfg.uinteger("finetune.batch");
  c.negatives = cfg.uinteger("train.negatives");
  c.sparse_adam = cfg.boolean("train.sparse_adam");
  c.freeze_kge = cfg.boolean("r2n.freeze_kge");
  c.wiring = parse_wiring(cfg.str("eval.wiring"));
  c.seed = seed;
  return c;
}

std::string kge_echo(const KGEModel& m) {
  std::ostringstream out;
  out << "scorer=" << scorer_name(m.kind()) << "\ndim=" << m.dim()
      << "\nentities=" << m.num_entities() << "\nrelations=" << m.num_relations() << '\n';
  return out.str();
}

void write_loss(const fs::path& path, const TrainReport& report) {
  write_atomic(path, [&](std::ostream& out) {
    out << "epoch,loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
      out << i + 1 << ',' << report.epoch_loss[i] << '\n';
    }
  });
}

std::vector<Triple> eval_queries(const ExperimentConfig& cfg, const Splits& s) {
  const auto which = cfg.str("eval.split");
  std::vector<Triple> q;
  if (which == "test") {
    q = s.test;
  } else if (which == "valid") {
    q = s.valid;
  } else {
    throw invalid_argument("eval.split must be test or valid, got '" + which + "'");
  }
  const auto cap = cfg.uinteger("eval.max_queries");
  if (cap > 0 && q.size() > cap) q.resize(cap);
  return q;
}

std::array<double, 3> parse_ratios(const ExperimentConfig& cfg) {
  const auto parts = cfg.list("split.ratios");
  if (parts.size() != 3) throw invalid_argument("split.ratios needs three values");
  std::array<double, 3> r{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      r[i] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw invalid_argument("split.ratios has a non-numeric value '" + parts[i] + "'");
    }
  }
  return r;
}

std::vector<std::uint64_t> parse_uints(const ExperimentConfig& cfg, const std::string& key) {
  std::vector<std::uint64_t> out;
  for (const auto& s : cfg.list(key)) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      out.push_back(v);
    } catch (const std::exception&) {
      throw invalid_argument(key + " has a non-integer value '" + s + "'");
    }
  }
  return out;
}

std::string prefixed(const ExperimentConfig& cfg, std::vector<std::string> prefixes) {
  return cfg.subset(prefixes);
}

// Stats where defined, zero otherwise: a user-supplied rule may have no
// body pairs on the training graph.
RuleStats lenient_stats(const HornRule& rule, const KnowledgeGraph& kg) {
  const auto c = count_rule(rule, kg);
  RuleStats s;
  s.support = c.support;
  auto ratio = [](std::uint64_t a, std::uint64_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  s.head_coverage = ratio(c.support, c.head_count);
  s.std_confidence = ratio(c.support, c.body_pairs);
  s.pca_confidence = ratio(c.support, c.pca_pairs);
  return s;
}

}  // namespace

// --- commands -----------------------------------------------------------------------

void cmd_ingest(Experiment& exp) {
  const auto& cfg = exp.config();
  const auto triples = cfg.str("data.triples");
  const auto domains = cfg.str("data.domains");
  const auto train = cfg.str("data.train");
  std::vector<fs::path> inputs;
  if (!train.empty()) {
    for (const auto* k : {"data.train", "data.valid", "data.test"}) {
      if (cfg.str(k).empty()) throw invalid_argument(std::string(k) + " is not set");
      inputs.emplace_back(fs::absolute(cfg.str(k)));
    }
  } else if (!triples.empty()) {
    inputs.emplace_back(fs::absolute(triples));
  } else {
    throw invalid_argument("no input: set data.triples (or data.train/valid/test)");
  }
  if (!domains.empty()) inputs.emplace_back(fs::absolute(domains));
  std::vector<std::string> outputs = {"kg.tsv"};
  if (!domains.empty()) outputs.emplace_back("domains.tsv");

  exp.run_stage("ingest", inputs, "", outputs, [&] {
    Vocabulary ents;
    Vocabulary rels;
    std::vector<Triple> all;
    IngestReport report;
    const std::size_t n_triple_files = train.empty() ? 1 : 3;
    for (std::size_t i = 0; i < n_triple_files; ++i) {
      std::ifstream in(inputs[i]);
      if (!in) throw Error(ErrorKind::kIo, "cannot open " + inputs[i].string());
      auto part = parse_triples(in, ents, rels, inputs[i].string(), &report);
      all.insert(all.end(), part.begin(), part.end());
    }
    if (all.empty()) throw Error(ErrorKind::kEmptyDataset, "no triples in the input");
    std::optional<std::vector<Domain>> dom;
    if (!domains.empty()) {
      std::ifstream in(domains);
      if (!in) throw Error(ErrorKind::kIo, "cannot open " + domains);
      dom = parse_domains(in, ents, domains);
    }
    KnowledgeGraph kg(std::move(ents), std::move(rels), std::move(all), std::move(dom));
    write_atomic(exp.file("kg.tsv"), [&](std::ostream& out) {
      write_triples(out, kg.triples(), kg.entities(), kg.relations());
    });
    if (kg.has_domains()) {
      write_atomic(exp.file("domains.tsv"), [&](std::ostream& out) { write_domains(out, kg); });
    }
    exp.log() << "ingest: " << report.lines_read << " lines, " << kg.size() << " triples, "
              << kg.duplicates_dropped() << " duplicates dropped, " << kg.num_entities()
              << " entities, " << kg.num_relations() << " relations\n";
  });
}

void cmd_stats(Experiment& exp) {
  std::vector<fs::path> inputs = {exp.require("kg.tsv", "ingest").filename()};
  if (fs::exists(exp.file("domains.tsv"))) inputs.emplace_back("domains.tsv");
  exp.run_stage("stats", inputs, "", {"stats.csv"}, [&] {
    const auto kg = load_kg(exp);
    const auto report = compute_stats(kg);
    write_atomic(exp.file("stats.csv"),
                 [&](std::ostream& out) { write_stats_csv(out, report, kg); });
  });
}

void cmd_split(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("kg.tsv", "ingest");
  const bool premade = !cfg.str("data.train").empty();
  std::vector<fs::path> inputs = {"kg.tsv"};
  if (premade) {
    for (const auto* k : {"data.train", "data.valid", "data.test"}) {
      inputs.emplace_back(fs::absolute(cfg.str(k)));
    }
  }
  const auto params = prefixed(cfg, {"split.", "seed"});
  exp.run_stage("split", inputs, params, {"train.tsv", "valid.tsv", "test.tsv"}, [&] {
    const auto kg = load_kg(exp);
    Split s;
    if (premade) {
      s.train = load_triples_known(cfg.str("data.train"), kg);
      s.valid = load_triples_known(cfg.str("data.valid"), kg);
      s.test = load_triples_known(cfg.str("data.test"), kg);
    } else {
      s = split(kg, parse_ratios(cfg), exp.seed("split"));
    }
    auto put = [&](const std::string& name, const std::vector<Triple>& ts) {
      write_atomic(exp.file(name), [&](std::ostream& out) {
        write_triples(out, ts, kg.entities(), kg.relations());
      });
    };
    put("train.tsv", s.train);
    put("valid.tsv", s.valid);
    put("test.tsv", s.test);
    exp.log() << "split: " << s.train.size() << " train, " << s.valid.size() << " valid, "
              << s.test.size() << " test\n";
  });
}

void cmd_mine(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("train.tsv", "split");
  std::vector<fs::path> inputs = {"kg.tsv", "train.tsv"};
  const auto rule_file = cfg.str("rules.file");
  if (!rule_file.empty()) inputs.emplace_back(fs::absolute(rule_file));
  const auto params = prefixed(cfg, {"mine.", "rules."});
  exp.run_stage("mine", inputs, params, {"rules.tsv"}, [&] {
    const auto kg = load_kg(exp);
    const auto train = subgraph(kg, load_splits(exp, kg).train);
    MinedRuleSet rules;
    if (!rule_file.empty()) {
      for (auto& r : load_rules(rule_file, kg.relations())) {
        r.rule = canonicalize(r.rule);
        r.stats = lenient_stats(r.rule, train);
        rules.push_back(std::move(r));
      }
    } else {
      MinerConfig mc;
      mc.max_body_atoms = static_cast<int>(cfg.integer("mine.max_body_atoms"));
      mc.min_support = cfg.uinteger("mine.min_support");
      mc.min_head_coverage = cfg.real("mine.min_head_coverage");
      rules = mine(train, mc);
    }
    write_atomic(exp.file("rules.tsv"),
                 [&](std::ostream& out) { write_rules(out, rules, kg.relations()); });
    exp.log() << "mine: " << rules.size() << " rules\n";
  });
}

void cmd_select(Experiment& exp, std::ostream* print) {
  const auto& cfg = exp.config();
  exp.require("rules.tsv", "mine");
  const auto params = prefixed(cfg, {"select."});
  exp.run_stage("select", {"kg.tsv", "rules.tsv"}, params, {"selected_rules.tsv"}, [&] {
    const auto kg = load_kg(exp);
    const auto rules = load_rules(exp.file("rules.tsv"), kg.relations());
    const auto top = select_top(rules, parse_criterion(cfg.str("select.criterion")),
                                cfg.uinteger("select.n"), kg.relations());
    write_atomic(exp.file("selected_rules.tsv"),
                 [&](std::ostream& out) { write_rules(out, top, kg.relations()); });
  });
  if (print != nullptr) {
    const auto kg = load_kg(exp);
    const auto top = load_rules(exp.file("selected_rules.tsv"), kg.relations());
    *print << "rule\tsupport\thc\tconf\tpca\n";
    write_rules(*print, top, kg.relations());
  }
}

void cmd_ground(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("selected_rules.tsv", "select");
  exp.require("train.tsv", "split");
  const auto params = prefixed(cfg, {"ground."});
  exp.run_stage("ground", {"kg.tsv", "train.tsv", "valid.tsv", "test.tsv", "selected_rules.tsv"},
                params, {"factor_graph.txt"}, [&] {
                  const auto kg = load_kg(exp);
                  const auto s = load_splits(exp, kg);
                  const auto train = subgraph(kg, s.train);
                  std::vector<HornRule> rules;
                  for (const auto& r : load_rules(exp.file("selected_rules.tsv"), kg.relations())) {
                    rules.push_back(r.rule);
                  }
                  std::vector<Triple> queries = s.valid;
                  queries.insert(queries.end(), s.test.begin(), s.test.end());
                  GroundingConfig gc;
                  gc.premise_filter = cfg.boolean("ground.premise_filter");
                  const auto graph =
                      ground_rules(rules, train, atom_universe(s.train, queries), gc);
                  write_atomic(exp.file("factor_graph.txt"), [&](std::ostream& out) {
                    write_factor_graph(out, graph, kg.relations());
                  });
                  exp.log() << "ground: " << graph.rules().size() << " rules, "
                            << graph.num_atoms() << " atoms, " << graph.num_factors()
                            << " factors\n";
                });
}

void cmd_pretrain(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("train.tsv", "split");
  const auto params = prefixed(cfg, {"kge.", "train.", "seed"});
  exp.run_stage("pretrain", {"kg.tsv", "train.tsv"}, params, {"kge.ckpt", "kge_loss.csv"}, [&] {
    const auto kg = load_kg(exp);
    const auto train = load_splits(exp, kg).train;
    const auto train_kg = subgraph(kg, train);
    auto model = new_kge(cfg, kg, exp.seed("kge-init"));
    const auto report =
        pretrain(model, train_kg.triples(), train_kg.members(),
                 pretrain_config(cfg, exp.seed("kge-train")));
    const ad::ParameterStore* stores[] = {&model.params()};
    commit_atomic(exp.file("kge.ckpt"), [&](const fs::path& tmp) {
      ad::save_checkpoint(tmp, ad::make_checkpoint(stores, nullptr, kge_echo(model)));
    });
    write_loss(exp.file("kge_loss.csv"), report);
  });
}

void cmd_finetune(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("kge.ckpt", "pretrain");
  exp.require("factor_graph.txt", "ground");
  const auto params = prefixed(cfg, {"r2n.", "finetune.", "train.", "eval.wiring", "seed"});
  exp.run_stage(
      "finetune", {"kg.tsv", "train.tsv", "kge.ckpt", "factor_graph.txt"}, params,
      {"r2n.ckpt", "r2n_loss.csv"}, [&] {
        const auto kg = load_kg(exp);
        const auto train_kg = subgraph(kg, load_splits(exp, kg).train);
        const auto graph = load_factor_graph(exp, kg);
        R2NModel model(load_kge(exp, kg), graph.rules(), kg.relations(),
                       r2n_config(cfg, exp.seed("r2n-init")));
        const auto report = finetune(model, graph, train_kg.triples(), train_kg.members(),
                                     finetune_config(cfg, exp.seed("r2n-train")));
        commit_atomic(exp.file("r2n.ckpt"),
                      [&](const fs::path& tmp) { save_r2n_checkpoint(tmp, model, nullptr); });
        write_loss(exp.file("r2n_loss.csv"), report);
        exp.set_manifest_value("rule_set_digest", model.rule_set_digest());
      });
  exp.set_manifest_value("checkpoints", json::array({"kge.ckpt", "r2n.ckpt"}));
  exp.save_manifest();
}

void cmd_evaluate(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("r2n.ckpt", "finetune");
  const auto params = prefixed(cfg, {"eval.", "r2n.", "kge.scorer", "kge.dim", "select.", "seed"});
  exp.run_stage(
      "evaluate",
      {"kg.tsv", "train.tsv", "valid.tsv", "test.tsv", "factor_graph.txt", "kge.ckpt", "r2n.ckpt"},
      params, {"metrics_filtered.csv", "metrics_raw.csv", "metrics_per_relation.csv"}, [&] {
        const auto kg = load_kg(exp);
        const auto s = load_splits(exp, kg);
        const auto graph = load_factor_graph(exp, kg);
        const auto kge = load_kge(exp, kg);
        R2NModel model(clone_kge(kge), graph.rules(), kg.relations(),
                       r2n_config(cfg, exp.seed("r2n-init")));
        load_r2n_checkpoint(exp.file("r2n.ckpt"), model, nullptr);
        const auto queries = eval_queries(cfg, s);
        const auto wiring = parse_wiring(cfg.str("eval.wiring"));
        const auto side = parse_side(cfg.str("eval.side"));
        const auto seed = cfg.uinteger("seed");
        const auto criterion = cfg.str("select.criterion");
        const auto n_rules = graph.rules().size();
        for (const auto mode : {RankMode::kFiltered, RankMode::kRaw}) {
          const RankingProtocol protocol{mode, side};
          const auto base =
              evaluate(kge_scorer(kge), queries, protocol, &kg.members(), kg.num_entities());
          const auto r2n = evaluate(r2n_scorer(model, &graph, wiring), queries, protocol,
                                    &kg.members(), kg.num_entities());
          write_atomic(exp.file("metrics_" + mode_name(mode) + ".csv"), [&](std::ostream& out) {
            out << kMetricsCsvHeader << '\n';
            write_metrics_row(out, "kge", 0, seed, base.overall);
            write_metrics_row(out, criterion, n_rules, seed, r2n.overall);
          });
          if (mode == RankMode::kFiltered) {
            write_atomic(exp.file("metrics_per_relation.csv"), [&](std::ostream& out) {
              write_per_relation_csv(out, r2n, kg.relations());
            });
          }
          exp.log() << "evaluate (" << mode_name(mode) << "): kge mrr " << base.overall.mrr
                    << ", r2n mrr " << r2n.overall.mrr << ", r2n hits@10 "
                    << r2n.overall.hits10 << "\n";
        }
      });
  exp.set_manifest_value(
      "metrics", json::array({"metrics_filtered.csv", "metrics_raw.csv", "metrics_per_relation.csv"}));
  exp.save_manifest();
}

void cmd_ablate(Experiment& exp) {
  const auto& cfg = exp.config();
  exp.require("rules.tsv", "mine");
  const auto params = prefixed(cfg, {"ablate.", "eval.", "r2n.", "kge.", "finetune.", "train.",
                                     "ground."});
  exp.run_stage(
      "ablate", {"kg.tsv", "train.tsv", "valid.tsv", "test.tsv", "rules.tsv"}, params,
      {"ablation.csv"}, [&] {
        const auto kg = load_kg(exp);
        const auto s = load_splits(exp, kg);
        const auto train_kg = subgraph(kg, s.train);
        const auto mined = load_rules(exp.file("rules.tsv"), kg.relations());
        const auto queries = eval_queries(cfg, s);
        std::vector<Triple> universe_queries = s.valid;
        universe_queries.insert(universe_queries.end(), s.test.begin(), s.test.end());
        const RankingProtocol protocol{RankMode::kFiltered, parse_side(cfg.str("eval.side"))};
        const auto wiring = parse_wiring(cfg.str("eval.wiring"));
        GroundingConfig gc;
        gc.premise_filter = cfg.boolean("ground.premise_filter");

        std::vector<RankCriterion> criteria;
        for (const auto& c : cfg.list("ablate.criteria")) criteria.push_back(parse_criterion(c));
        std::vector<std::size_t> counts;
        for (auto n : parse_uints(cfg, "ablate.rules")) counts.push_back(n);
        const auto seeds = parse_uints(cfg, "ablate.seeds");

        std::map<std::uint64_t, KGEModel> pretrained;
        auto kge_for = [&](std::uint64_t seed) -> const KGEModel& {
          auto it = pretrained.find(seed);
          if (it != pretrained.end()) return it->second;
          auto model = new_kge(cfg, kg, derive_seed(seed, "kge-init"));
          pretrain(model, train_kg.triples(), train_kg.members(),
                   pretrain_config(cfg, derive_seed(seed, "kge-train")));
          return pretrained.emplace(seed, std::move(model)).first->second;
        };

        auto runner = [&](std::optional<RankCriterion> c, std::size_t n, std::uint64_t seed) {
          const auto& kge = kge_for(seed);
          if (!c) {
            return evaluate(kge_scorer(kge), queries, protocol, &kg.members(), kg.num_entities())
                .overall;
          }
          std::vector<HornRule> rules;
          for (const auto& r : select_top(mined, *c, n, kg.relations())) rules.push_back(r.rule);
          const auto graph =
              ground_rules(rules, train_kg, atom_universe(s.train, universe_queries), gc);
          R2NModel model(clone_kge(kge), graph.rules(), kg.relations(),
                         r2n_config(cfg, derive_seed(seed, "r2n-init")));
          finetune(model, graph, train_kg.triples(), train_kg.members(),
                   finetune_config(cfg, derive_seed(seed, "r2n-train")));
          exp.log() << "ablate: " << criterion_name(*c) << " n=" << n << " seed=" << seed
                    << " done\n";
          return evaluate(r2n_scorer(model, &graph, wiring), queries, protocol, &kg.members(),
                          kg.num_entities())
              .overall;
        };
        const auto cells = run_ablation(criteria, counts, seeds, runner);
        for (const auto& cell : cells) {
          if (!cell.error.empty()) {
            exp.log() << "ablate: cell " << cell.criterion << " n=" << cell.n_rules
                      << " seed=" << cell.seed << " failed: " << cell.error << '\n';
          }
        }
        write_atomic(exp.file("ablation.csv"),
                     [&](std::ostream& out) { write_ablation_csv(out, cells); });
      });
}

void cmd_run_all(Experiment& exp) {
  cmd_ingest(exp);
  cmd_stats(exp);
  cmd_split(exp);
  cmd_mine(exp);
  cmd_select(exp, nullptr);
  cmd_ground(exp);
  cmd_pretrain(exp);
  cmd_finetune(exp);
  cmd_evaluate(exp);
}

}  // namespace r2n
