// Acceptance checks against the PharmKG export. Needs R2N_PHARMKG_DIR with
//   triples.tsv            head<TAB>relation<TAB>tail
//   domains.tsv            entity<TAB>Gene|Chemical|Disease   (criterion 7)
//   train.tsv valid.tsv test.tsv                               (optional published split)
// Criteria 9 and 10 train the full model and run only with R2N_PHARMKG_FULL=1.
// Exit 77 when the export is absent.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "r2n/config.hpp"
#include "r2n/error.hpp"
#include "r2n/kg.hpp"
#include "r2n/pipeline.hpp"
#include "r2n/rules.hpp"

using namespace r2n;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class State { kPass, kFail, kNotRun } state = State::kPass;
  std::string detail;
};

const char* const kNames[] = {
    "7 PharmKG relation statistics",
    "8 PharmKG mined rule confidences",
    "9 PharmKG full benchmark MRR and Hits@10",
    "10 PharmKG DistMult-only baseline band",
};

double minutes_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

ExperimentConfig base_config(const fs::path& data) {
  ExperimentConfig cfg;
  cfg.set("data.triples", (data / "triples.tsv").string());
  if (fs::exists(data / "domains.tsv")) cfg.set("data.domains", (data / "domains.tsv").string());
  if (fs::exists(data / "train.tsv") && fs::exists(data / "valid.tsv") && fs::exists(data / "test.tsv")) {
    cfg.set("data.train", (data / "train.tsv").string());
    cfg.set("data.valid", (data / "valid.tsv").string());
    cfg.set("data.test", (data / "test.tsv").string());
  }
  return cfg;
}

Outcome statistics(const fs::path& data) {
  Outcome o;
  if (!fs::exists(data / "domains.tsv")) {
    o.state = Outcome::State::kFail;
    o.detail = "domains.tsv missing; block frequencies need domain tags";
    return o;
  }
  const auto start = std::chrono::steady_clock::now();
  const auto kg = load_graph(data / "triples.tsv", data / "domains.tsv");
  const auto report = compute_stats(kg);
  const double minutes = minutes_since(start);

  std::optional<double> an_freq, an_trans, cc_freq;
  for (const auto& row : report.rows) {
    const auto& name = kg.relations().name(row.relation);
    if (name == "An" && row.block == "DxD") {
      an_freq = row.freq_in_block;
      an_trans = row.properties.transitive;
    }
    if (row.block == "CxC" && (!cc_freq || row.freq_in_block > *cc_freq)) {
      cc_freq = row.freq_in_block;
    }
  }
  std::ostringstream s;
  auto show = [&](const char* label, const std::optional<double>& v) {
    s << label << ' ';
    if (v) {
      s << *v;
    } else {
      s << "NA";
    }
    s << "; ";
  };
  show("An in DxD", an_freq);
  show("CxC top", cc_freq);
  show("An transitive", an_trans);
  s << minutes << " min";
  o.detail = s.str();
  const bool ok = an_freq && within(*an_freq, 94.94, 1.0) && cc_freq && within(*cc_freq, 100.0, 1.0) &&
                  an_trans && within(*an_trans, 83.29, 1.0) && minutes < 2.0;
  if (!ok) o.state = Outcome::State::kFail;
  return o;
}

Outcome mining(const fs::path& data, const fs::path& work) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  Experiment exp(work / "mine", base_config(data), false);
  cmd_ingest(exp);
  cmd_split(exp);
  cmd_mine(exp);
  const double minutes = minutes_since(start);

  const auto kg = load_graph(exp.file("kg.tsv"), std::nullopt);
  std::ifstream in(exp.file("rules.tsv"));
  const auto rules = read_rules(in, kg.relations(), "rules.tsv");
  const auto top = select_top(rules, RankCriterion::kStdConfidence, 1, kg.relations());
  std::ostringstream s;
  bool ok = minutes < 30.0;
  if (top.empty()) {
    o.state = Outcome::State::kFail;
    o.detail = "no rules mined";
    return o;
  }
  const auto an_iw = canonicalize(parse_rule("An(y,x) & Iw(y,x) => An(x,y)", kg.relations()));
  s << "top " << rule_text(top[0].rule, kg.relations()) << " conf " << top[0].stats.std_confidence;
  ok = ok && canonicalize(top[0].rule) == an_iw && within(top[0].stats.std_confidence, 0.909, 0.05);

  const auto q_sym = canonicalize(parse_rule("Q(y,x) => Q(x,y)", kg.relations()));
  std::optional<double> q_conf;
  for (const auto& r : rules) {
    if (canonicalize(r.rule) == q_sym) q_conf = r.stats.std_confidence;
  }
  s << "; Q symmetric conf ";
  if (q_conf) {
    s << *q_conf;
  } else {
    s << "absent";
  }
  s << "; " << minutes << " min";
  ok = ok && q_conf && within(*q_conf, 0.786, 0.05);
  o.detail = s.str();
  if (!ok) o.state = Outcome::State::kFail;
  return o;
}

struct Row {
  std::string criterion;
  std::size_t n_rules = 0;
  double mrr = 0.0;
  double hits10 = 0.0;
};

std::vector<Row> read_metrics(const fs::path& path) {
  std::vector<Row> rows;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8 || cells[3] == "NA") continue;
    rows.push_back({cells[0], std::stoul(cells[1]), std::stod(cells[3]), std::stod(cells[6])});
  }
  return rows;
}

// Runs the default configuration end to end and fills criteria 9 and 10.
void full_benchmark(const fs::path& data, const fs::path& work, Outcome& bench, Outcome& baseline) {
  const auto start = std::chrono::steady_clock::now();
  Experiment exp(work / "full", base_config(data), false);
  cmd_run_all(exp);
  const double hours = minutes_since(start) / 60.0;

  std::optional<Row> best, kge;
  for (const char* file : {"metrics_filtered.csv", "metrics_raw.csv"}) {
    for (const auto& row : read_metrics(exp.file(file))) {
      if (row.criterion == "kge" && (!kge || row.mrr > kge->mrr)) kge = row;
      if (row.criterion == "conf" && (!best || row.mrr > best->mrr)) best = row;
    }
  }
  std::ostringstream b;
  if (best) {
    b << best->n_rules << " rules, MRR " << best->mrr << ", Hits@10 " << best->hits10 << "; " << hours << " h";
    if (!(best->mrr >= 0.19 && best->hits10 >= 0.30)) bench.state = Outcome::State::kFail;
  } else {
    b << "no conf row in metrics";
    bench.state = Outcome::State::kFail;
  }
  bench.detail = b.str();

  std::ostringstream k;
  if (kge) {
    k << "DistMult MRR " << kge->mrr;
    if (!(kge->mrr >= 0.063 - 0.05 && kge->mrr <= 0.107 + 0.05)) baseline.state = Outcome::State::kFail;
  } else {
    k << "no kge row in metrics";
    baseline.state = Outcome::State::kFail;
  }
  baseline.detail = k.str();
}

void print(const char* name, const Outcome& o) {
  const char* tag = o.state == Outcome::State::kPass   ? "PASS"
                    : o.state == Outcome::State::kFail ? "FAIL"
                                                       : "NOT RUN";
  std::cout << tag << "  criterion " << name << "  (" << o.detail << ")" << std::endl;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {Outcome::State::kFail, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  const char* dir = std::getenv("R2N_PHARMKG_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "triples.tsv")) {
    for (const char* name : kNames) {
      print(name, {Outcome::State::kNotRun, "R2N_PHARMKG_DIR/triples.tsv not available"});
    }
    return 77;
  }
  const fs::path data(dir);
  const char* work_env = std::getenv("R2N_PHARMKG_WORK");
  const fs::path work = work_env ? fs::path(work_env) : fs::temp_directory_path() / "r2n_pharmkg_acceptance";
  fs::create_directories(work);

  Outcome out[4];
  out[0] = guarded([&] { return statistics(data); });
  out[1] = guarded([&] { return mining(data, work); });
  const char* full = std::getenv("R2N_PHARMKG_FULL");
  if (full && std::string(full) == "1") {
    try {
      full_benchmark(data, work, out[2], out[3]);
    } catch (const std::exception& e) {
      out[2] = out[3] = {Outcome::State::kFail, std::string("exception: ") + e.what()};
    }
  } else {
    out[2] = out[3] = {Outcome::State::kNotRun, "set R2N_PHARMKG_FULL=1 for the multi-hour training run"};
  }
  bool failed = false;
  for (std::size_t i = 0; i < 4; ++i) {
    print(kNames[i], out[i]);
    failed = failed || out[i].state == Outcome::State::kFail;
  }
  return failed ? 1 : 0;
}
