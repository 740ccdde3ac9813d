#include "r2n/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "r2n/digest.hpp"
#include "r2n/error.hpp"

namespace r2n {

namespace {

constexpr ConfigKey kSchema[] = {
    {"seed", ConfigType::kInt, "0", "top-level seed; stages use named sub-seeds"},
    {"data.triples", ConfigType::kPath, "", "head<TAB>relation<TAB>tail file"},
    {"data.domains", ConfigType::kPath, "", "entity<TAB>Gene|Chemical|Disease sidecar"},
    {"data.train", ConfigType::kPath, "", "pre-made train split (with data.valid, data.test)"},
    {"data.valid", ConfigType::kPath, "", "pre-made validation split"},
    {"data.test", ConfigType::kPath, "", "pre-made test split"},
    {"split.ratios", ConfigType::kList, "0.8,0.1,0.1", "train,valid,test fractions"},
    {"mine.max_body_atoms", ConfigType::kInt, "2", "1 or 2"},
    {"mine.min_support", ConfigType::kInt, "10", "minimum rule support"},
    {"mine.min_head_coverage", ConfigType::kFloat, "0.01", "minimum head coverage"},
    {"rules.file", ConfigType::kPath, "", "use this rule file instead of mining"},
    {"select.criterion", ConfigType::kString, "conf", "hc|conf|pca"},
    {"select.n", ConfigType::kInt, "100", "number of rules kept"},
    {"ground.premise_filter", ConfigType::kBool, "true", "keep groundings with known-true bodies"},
    {"kge.scorer", ConfigType::kString, "distmult", "transe|distmult|complex"},
    {"kge.dim", ConfigType::kInt, "250", "embedding width (ComplEx: 2x complex lanes)"},
    {"kge.epochs", ConfigType::kInt, "250", "pretraining epochs"},
    {"kge.lr", ConfigType::kFloat, "0.01", "pretraining learning rate"},
    {"kge.batch", ConfigType::kInt, "1024", "positives per batch"},
    {"train.negatives", ConfigType::kInt, "2", "corruptions per positive"},
    {"train.sparse_adam", ConfigType::kBool, "true", "update only touched embedding rows"},
    {"r2n.layers", ConfigType::kInt, "2", "reasoning layers"},
    {"r2n.factor_dim", ConfigType::kInt, "25", "factor state width"},
    {"r2n.anchor", ConfigType::kString, "input", "input|previous residual anchor"},
    {"r2n.linear_atom_output", ConfigType::kBool, "false", "drop ReLU after atom networks"},
    {"r2n.freeze_kge", ConfigType::kBool, "false", "keep KGE tables fixed while fine-tuning"},
    {"finetune.epochs", ConfigType::kInt, "30", "fine-tuning epochs"},
    {"finetune.lr", ConfigType::kFloat, "0.001", "fine-tuning learning rate"},
    {"finetune.batch", ConfigType::kInt, "1024", "positives per batch"},
    {"eval.side", ConfigType::kString, "both", "head|tail|both"},
    {"eval.wiring", ConfigType::kString, "graph", "graph|isolated candidate wiring"},
    {"eval.split", ConfigType::kString, "test", "test|valid"},
    {"eval.max_queries", ConfigType::kInt, "0", "evaluate only the first N triples (0 = all)"},
    {"ablate.criteria", ConfigType::kList, "hc,conf,pca", "criteria of the grid"},
    {"ablate.rules", ConfigType::kList, "5,10,25,50,75,100", "rule counts of the grid"},
    {"ablate.seeds", ConfigType::kList, "0", "seeds of the grid"},
};

const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : kSchema) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_int(const std::string& s, std::int64_t& out) {
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

bool parse_float(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::istringstream in(s);
  in >> out;
  return in && in.peek() == std::char_traits<char>::eof();
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0" || s == "no" || s == "off") {
    out = false;
    return true;
  }
  return false;
}

void validate(const ConfigKey& k, const std::string& value) {
  bool ok = true;
  std::int64_t i = 0;
  double d = 0.0;
  bool b = false;
  switch (k.type) {
    case ConfigType::kInt: ok = parse_int(value, i); break;
    case ConfigType::kFloat: ok = parse_float(value, d); break;
    case ConfigType::kBool: ok = parse_bool(value, b); break;
    default: break;
  }
  if (!ok) {
    throw invalid_argument("config key '" + std::string(k.key) + "' expects " +
                           config_type_name(k.type) + ", got '" + value + "'");
  }
}

}  // namespace

std::span<const ConfigKey> config_schema() { return kSchema; }

std::string config_type_name(ConfigType t) {
  switch (t) {
    case ConfigType::kString: return "string";
    case ConfigType::kPath: return "path";
    case ConfigType::kInt: return "int";
    case ConfigType::kFloat: return "float";
    case ConfigType::kBool: return "bool";
    case ConfigType::kList: return "list";
  }
  return "?";
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& k : kSchema) values_[k.key] = k.default_value;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto* k = find_key(key);
  if (k == nullptr) throw invalid_argument("unknown config key '" + key + "'");
  const auto v = trim(value);
  validate(*k, v);
  values_[key] = v;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(source, lineno, "expected key = value");
    try {
      cfg.set(trim(std::string_view(body).substr(0, eq)), body.substr(eq + 1));
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open config file " + path);
  return parse(in, path);
}

std::string ExperimentConfig::env_name(const std::string& key) {
  std::string out = "R2N_";
  for (char c : key) {
    out.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

void ExperimentConfig::apply_env(char** envp) {
  if (envp == nullptr) return;
  std::map<std::string, std::string> env;
  for (char** e = envp; *e != nullptr; ++e) {
    const char* eq = std::strchr(*e, '=');
    if (eq == nullptr) continue;
    env.emplace(std::string(*e, static_cast<std::size_t>(eq - *e)), std::string(eq + 1));
  }
  for (const auto& k : kSchema) {
    if (auto it = env.find(env_name(k.key)); it != env.end()) set(k.key, it->second);
  }
}

const std::string& ExperimentConfig::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw invalid_argument("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t ExperimentConfig::integer(const std::string& key) const {
  std::int64_t v = 0;
  if (!parse_int(raw(key), v)) throw invalid_argument("config key '" + key + "' is not an int");
  return v;
}

std::uint64_t ExperimentConfig::uinteger(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw invalid_argument("config key '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

double ExperimentConfig::real(const std::string& key) const {
  double v = 0.0;
  if (!parse_float(raw(key), v)) throw invalid_argument("config key '" + key + "' is not a float");
  return v;
}

bool ExperimentConfig::boolean(const std::string& key) const {
  bool v = false;
  if (!parse_bool(raw(key), v)) throw invalid_argument("config key '" + key + "' is not a bool");
  return v;
}

std::vector<std::string> ExperimentConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(raw(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

void ExperimentConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  write(out);
  return out.str();
}

std::string ExperimentConfig::subset(std::span<const std::string> prefixes) const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) {
    for (const auto& p : prefixes) {
      if (k.starts_with(p)) {
        out << k << " = " << v << '\n';
        break;
      }
    }
  }
  return out.str();
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stage) {
  const auto hex = sha256_hex(std::to_string(seed) + ":" + stage);
  std::uint64_t out = 0;
  std::from_chars(hex.data(), hex.data() + 16, out, 16);
  return out;
}

}  // namespace r2n
