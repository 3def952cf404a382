#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ceb/attacks.hpp"
#include "ceb/checkpoint.hpp"
#include "ceb/config.hpp"
#include "ceb/robustness.hpp"
#include "ceb/train.hpp"

namespace ceb {

inline constexpr int kReportFormatVersion = 1;

/// Generates or reads the configured dataset.
DataBundle load_dataset(const ExperimentConfig& c);
EncoderSpec encoder_spec(const ExperimentConfig& c, const Dataset& train);

struct TrainedRun {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

/// Trains one model at `rho`. Deterministic given the config.
TrainedRun train_run(const ExperimentConfig& c, const DataBundle& data, double rho);

struct AttackCurve {
  AttackSettings settings;
  std::vector<SweepPoint> points;
};

struct Evaluation {
  double clean_accuracy = 0.0;
  std::vector<AttackCurve> attacks;
  std::optional<ErrorGrid> grid;  // present when corruptions are configured
  std::string severity_table;
};

const SeverityTable& configured_severity_table(const ExperimentConfig& c);

/// Clean accuracy, every configured attack curve and the corruption grid on
/// the test split. Corruptions require an image dataset.
Evaluation evaluate_run(const ExperimentConfig& c, const CebModel& model, const Dataset& test,
                        unsigned threads = 1);

std::string model_id(const ExperimentConfig& c, double rho);
std::string rho_dir_name(double rho);

/// Structured run report (see docs/formats.md).
nlohmann::json run_report(const ExperimentConfig& c, const TrainedRun& run,
                          const Evaluation& eval, const std::optional<Baseline>& baseline);

/// Cross-validation rule: highest clean accuracy, ties to the lower rho.
/// Entries are (rho, clean accuracy).
double select_rho(const std::vector<std::pair<double, double>>& candidates);

struct SweepOutcome {
  std::filesystem::path dir;
  nlohmann::json report;
  std::optional<double> rho_star;
};

/// Trains and evaluates one model per rho (in parallel across rho), then
/// writes into the output directory:
///   config.json, rho_<r>/checkpoint.bin, rho_<r>/report.json,
///   sweep_report.json, sweep_report.txt and plots/*.tsv.
SweepOutcome run_sweep(const ExperimentConfig& c, std::ostream* progress = nullptr);

/// Writes `text` to `path` in binary mode, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

// Rendering of report JSON into aligned text tables and TSV plot series.
std::string render_run_report(const nlohmann::json& report);
std::string render_sweep_report(const nlohmann::json& report);
/// Writes plot files for either report kind; returns the paths written.
std::vector<std::filesystem::path> write_plots(const nlohmann::json& report,
                                               const std::filesystem::path& dir);

}  // namespace ceb
