#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ceb/corruptions.hpp"
#include "ceb/dataset.hpp"
#include "ceb/models.hpp"

namespace ceb {

/// E_cs: misclassification fraction per corruption kind and severity.
struct ErrorGrid {
  std::vector<CorruptionKind> kinds;
  std::vector<std::array<double, kNumSeverities>> errors;  // parallel to kinds

  std::size_t size() const { return kinds.size(); }
  /// Throws std::out_of_range when the kind is absent.
  const std::array<double, kNumSeverities>& row(CorruptionKind kind) const;
  /// Entries in [0, 1], no duplicate kinds, rows match kinds.
  void validate() const;
};

/// Fraction of rows the model misclassifies.
double error_rate(const LogitModel& model, const Dataset& data);

/// Evaluates every (kind, severity) cell on a corrupted copy of `data`.
/// The corruption seed of a cell is derive_seed(seed, kind * 8 + severity),
/// so results do not depend on `threads`. The model must be safe for
/// concurrent reads (e.g. CebModel::frozen()) when threads > 1.
ErrorGrid evaluate_grid(const LogitModel& model, const Dataset& data,
                        std::span<const CorruptionKind> kinds, std::uint64_t seed,
                        const SeverityTable& table = SeverityTable::builtin(),
                        unsigned threads = 1);

/// E_c = (1/5) sum_s E_cs, in the grid's kind order.
std::vector<double> per_corruption(const ErrorGrid& grid);
/// Unweighted mean of E_c over the C kinds in the grid.
double average_error(const ErrorGrid& grid);

struct MceResult {
  double value = 0.0;  // percent
  std::vector<CorruptionKind> included;
  std::vector<std::string> warnings;
};

/// mCE = (100 / C) sum_c (sum_s E_cs) / (sum_s E_cs^baseline). Kinds with a
/// zero baseline denominator are excluded and reported in `warnings`.
/// Throws std::invalid_argument when the corruption sets differ or every
/// kind is excluded. The sum runs in a fixed kind order, so the result does
/// not depend on the order of either grid.
MceResult mce(const ErrorGrid& model, const ErrorGrid& baseline);

struct RobustnessReport {
  std::string model_id;
  std::string baseline_id;  // empty when no baseline was supplied
  std::uint64_t seed = 0;
  std::string severity_table;  // version tag of the table used
  double clean_error = 0.0;
  ErrorGrid grid;
  std::vector<double> per_corruption;
  double average = 0.0;
  std::optional<double> mce;
  std::vector<std::string> warnings;
};

struct Baseline {
  std::string id;
  ErrorGrid grid;
};

RobustnessReport make_robustness_report(std::string model_id, std::uint64_t seed,
                                        std::string severity_table, double clean_error,
                                        ErrorGrid grid,
                                        const std::optional<Baseline>& baseline = std::nullopt);

}  // namespace ceb
