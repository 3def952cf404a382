#pragma once

// Experiment configuration. Serialized as JSON; every field has a default
// so a config file only needs to name what it changes. Unknown keys are
// rejected so that typos do not silently fall back to defaults.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ceb/attacks.hpp"
#include "ceb/corruptions.hpp"
#include "ceb/dataset.hpp"
#include "ceb/objective.hpp"
#include "ceb/schedule.hpp"
#include "ceb/train.hpp"

namespace ceb {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  enum class Source { Blobs, TwoMoons, Patterns, File, Csv };
  Source source = Source::Blobs;
  BlobsParams blobs;
  MoonsParams moons;
  PatternsParams patterns;
  std::string path;            // File and Csv sources
  double test_fraction = 0.2;  // Csv only
};

std::string to_string(DatasetConfig::Source s);

/// Schedule shape shared by every rho in the sweep; the target is the rho
/// being trained. Steps are optimizer steps.
struct ScheduleSettings {
  RhoScheduleConfig::Kind kind = RhoScheduleConfig::Kind::JumpStart;
  double start_rho = 100.0;
  double intermediate_rho = 10.0;  // jump_start only
  std::size_t anneal_start_step = 0;
  std::size_t anneal_end_step = 0;
  std::optional<double> accuracy_trigger = 0.2;
  std::size_t accuracy_window = 10;

  /// Schedule for one target rho. A target at or above start_rho trains at
  /// that constant rho, since there is nothing to anneal from.
  RhoScheduleConfig for_rho(double target) const;
};

struct AttackSettings {
  Norm norm = Norm::Linf;
  AttackMode mode = AttackMode::Untargeted;
  std::vector<double> epsilons;
  std::size_t steps = 20;
  std::optional<double> step_size;
  bool random_start = false;
};

struct CorruptionSettings {
  std::vector<CorruptionKind> kinds;
  std::string severity_table;  // path; empty = built-in table
  /// Rho whose model is the mCE baseline; empty = largest rho of the sweep.
  std::optional<double> baseline_rho;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  std::vector<std::size_t> hidden = {64};
  std::size_t latent_dim = 4;
  Objective objective = Objective::Ceb;
  ClassifierKind classifier = ClassifierKind::Linear;
  std::vector<double> rhos = {0.0};
  ScheduleSettings schedule;
  OptimizerConfig optimizer;
  std::vector<AttackSettings> attacks;
  CorruptionSettings corruptions;
  std::uint64_t seed = 0;
  std::string output_dir;  // empty = $CEB_OUTPUT_ROOT/<name>, else runs/<name>
  unsigned threads = 0;    // 0 = hardware concurrency

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys take their defaults. Throws ConfigError naming the offending
/// key for unknown keys, wrong types and invalid values.
ExperimentConfig config_from_json(const nlohmann::json& j);
/// Relative dataset and severity-table paths are taken relative to the
/// config file and returned absolute. output_dir is left as written.
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

/// Compact dump with sorted keys; the identity hashed into artifacts.
std::string canonical_json(const ExperimentConfig& c);
std::uint64_t config_hash(const ExperimentConfig& c);

/// Output directory resolution (see ExperimentConfig::output_dir).
inline constexpr const char* kOutputRootEnv = "CEB_OUTPUT_ROOT";
std::filesystem::path resolve_output_dir(const ExperimentConfig& c);

/// Seed streams derived from the single experiment seed. Initialization
/// and training noise are shared across rho so runs differ only in rho.
std::uint64_t data_seed(const ExperimentConfig& c);
std::uint64_t model_seed(const ExperimentConfig& c);
std::uint64_t train_seed(const ExperimentConfig& c);
std::uint64_t attack_seed(const ExperimentConfig& c);
std::uint64_t corruption_seed(const ExperimentConfig& c);

}  // namespace ceb
