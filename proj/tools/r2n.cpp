// r2n: knowledge graph completion pipeline.
//
//   r2n --out exp/ --data-triples kg.tsv --data-domains dom.tsv run-all
//   r2n --out exp/ select --criterion conf --n 1
//
// Precedence: schema defaults < --config file < R2N_* environment < flags.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "r2n/config.hpp"
#include "r2n/error.hpp"
#include "r2n/pipeline.hpp"

extern char** environ;

namespace {

std::string flag_name(const std::string& key) {
  std::string out = key;
  for (auto& c : out) {
    if (c == '.' || c == '_') c = '-';
  }
  return "--" + out;
}

void print_schema(std::ostream& out) {
  for (const auto& k : r2n::config_schema()) {
    out << k.key << " (" << r2n::config_type_name(k.type) << ", default '" << k.default_value
        << "', env " << r2n::ExperimentConfig::env_name(k.key) << ", flag " << flag_name(k.key)
        << "): " << k.doc << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rule mining, grounding and relational reasoning over knowledge graphs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "experiment";
  std::string seed;
  bool force = false;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--out", out_dir, "experiment directory")->capture_default_str();
  app.add_option("--seed", seed, "top-level seed");
  app.add_flag("--force", force, "rerun stages even when their inputs are unchanged");
  app.add_option("--set", sets, "override any config key: --set key=value");

  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
  for (const auto& k : r2n::config_schema()) {
    if (std::string(k.key) == "seed") continue;
    flag_options[k.key] = app.add_option(flag_name(k.key), flag_values[k.key], k.doc);
  }

  std::string criterion;
  std::string n_rules;
  const std::map<std::string, std::string> commands = {
      {"ingest", "read triples (and domain tags) into the experiment"},
      {"stats", "relation frequencies and algebraic properties"},
      {"split", "train/valid/test split"},
      {"mine", "mine Horn rules on the training split"},
      {"select", "keep the top-N rules by a criterion and print them"},
      {"ground", "ground selected rules into a factor graph"},
      {"pretrain", "train the KGE input layer"},
      {"finetune", "train the reasoning layers"},
      {"evaluate", "filtered and raw ranking metrics"},
      {"ablate", "criterion x rule-count x seed grid"},
      {"run-all", "ingest through evaluate"},
      {"schema", "print the configuration schema"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, doc] : commands) subs[name] = app.add_subcommand(name, doc);
  subs["select"]->add_option("--criterion", criterion, "hc|conf|pca");
  subs["select"]->add_option("--n", n_rules, "number of rules");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (subs["schema"]->parsed()) {
    print_schema(std::cout);
    return 0;
  }

  try {
    auto cfg = config_path.empty() ? r2n::ExperimentConfig()
                                   : r2n::ExperimentConfig::load(config_path);
    cfg.apply_env(environ);
    for (const auto& [key, opt] : flag_options) {
      if (opt->count() > 0) cfg.set(key, flag_values[key]);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw r2n::invalid_argument("--set expects key=value");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!seed.empty()) cfg.set("seed", seed);
    if (!criterion.empty()) cfg.set("select.criterion", criterion);
    if (!n_rules.empty()) cfg.set("select.n", n_rules);

    r2n::Experiment exp(out_dir, cfg, force, &std::cerr);
    if (subs["ingest"]->parsed()) r2n::cmd_ingest(exp);
    if (subs["stats"]->parsed()) r2n::cmd_stats(exp);
    if (subs["split"]->parsed()) r2n::cmd_split(exp);
    if (subs["mine"]->parsed()) r2n::cmd_mine(exp);
    if (subs["select"]->parsed()) r2n::cmd_select(exp, &std::cout);
    if (subs["ground"]->parsed()) r2n::cmd_ground(exp);
    if (subs["pretrain"]->parsed()) r2n::cmd_pretrain(exp);
    if (subs["finetune"]->parsed()) r2n::cmd_finetune(exp);
    if (subs["evaluate"]->parsed()) r2n::cmd_evaluate(exp);
    if (subs["ablate"]->parsed()) r2n::cmd_ablate(exp);
    if (subs["run-all"]->parsed()) r2n::cmd_run_all(exp);
  } catch (const r2n::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return r2n::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
