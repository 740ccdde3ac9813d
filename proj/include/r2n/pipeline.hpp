#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "r2n/config.hpp"
#include "r2n/error.hpp"
#include "r2n/kge.hpp"

namespace r2n {

// Process exit code for an error class; 0 is success, 2 is CLI usage.
int exit_code(ErrorKind kind);

// Exclusive lock on an experiment directory, held for the object's life.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
};

// Writes through a temp file in the same directory, then renames.
void write_atomic(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& write);
void commit_atomic(const std::filesystem::path& path,
                   const std::function<void(const std::filesystem::path& tmp)>& write);

// An experiment directory with its manifest.json. Stages are skipped when
// their parameters, input digests and output digests all match the
// manifest, unless forced.
class Experiment {
 public:
  Experiment(std::filesystem::path dir, ExperimentConfig config, bool force,
             std::ostream* log = nullptr);

  const std::filesystem::path& dir() const { return dir_; }
  const ExperimentConfig& config() const { return config_; }
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }
  const nlohmann::json& manifest() const { return manifest_; }
  std::uint64_t seed(const std::string& stage) const;

  // Path of an artifact produced by `producer`; throws kMissingArtifact
  // naming the command to run when it is absent.
  std::filesystem::path require(const std::string& name, const std::string& producer) const;

  // `inputs` are files (absolute, or names inside the directory). Returns
  // true when the body ran.
  bool run_stage(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
                 const std::string& params, const std::vector<std::string>& outputs,
                 const std::function<void()>& body);

  void set_manifest_value(const std::string& key, nlohmann::json value);
  void save_manifest();
  std::ostream& log() const;

 private:
  std::filesystem::path resolve(const std::filesystem::path& p) const;

  std::filesystem::path dir_;
  ExperimentConfig config_;
  bool force_;
  std::ostream* log_;
  DirLock lock_;
  nlohmann::json manifest_;
};

// Commands. Each fronts one module operation; run_all chains them.
void cmd_ingest(Experiment& exp);
void cmd_stats(Experiment& exp);
void cmd_split(Experiment& exp);
void cmd_mine(Experiment& exp);
// Prints the selected rules with their statistics to `print` when given.
void cmd_select(Experiment& exp, std::ostream* print);
void cmd_ground(Experiment& exp);
void cmd_pretrain(Experiment& exp);
void cmd_finetune(Experiment& exp);
void cmd_evaluate(Experiment& exp);
void cmd_ablate(Experiment& exp);
void cmd_run_all(Experiment& exp);

// Copies parameter values into a freshly built model of the same shape.
KGEModel clone_kge(const KGEModel& model);

}  // namespace r2n
