#include "ceb/robustness.hpp"

#include <algorithm>
#include <atomic>
#include <fmt/format.h>
#include <stdexcept>
#include <thread>

#include "ceb/random.hpp"

namespace ceb {

const std::array<double, kNumSeverities>& ErrorGrid::row(CorruptionKind kind) const {
  for (std::size_t i = 0; i < kinds.size(); ++i)
    if (kinds[i] == kind) return errors.at(i);
  throw std::out_of_range("error grid has no row for " + to_string(kind));
}

void ErrorGrid::validate() const {
  if (kinds.size() != errors.size()) throw std::invalid_argument("error grid: ragged rows");
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (kinds[i] == kinds[j]) {
        throw std::invalid_argument("error grid: duplicate kind " + to_string(kinds[i]));
      }
    for (double e : errors[i])
      if (!(e >= 0.0 && e <= 1.0)) {
        throw std::invalid_argument("error grid: entry outside [0, 1] for " + to_string(kinds[i]));
      }
  }
}

double error_rate(const LogitModel& model, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("error_rate: empty dataset");
  auto pred = model.predict(data.inputs());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != data.labels[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

ErrorGrid evaluate_grid(const LogitModel& model, const Dataset& data,
                        std::span<const CorruptionKind> kinds, std::uint64_t seed,
                        const SeverityTable& table, unsigned threads) {
  if (data.empty()) throw std::invalid_argument("evaluate_grid: empty dataset");
  ErrorGrid grid;
  grid.kinds.assign(kinds.begin(), kinds.end());
  grid.errors.resize(kinds.size());

  const std::size_t cells = kinds.size() * kNumSeverities;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t c = next++; c < cells && !failed; c = next++) {
      try {
        const std::size_t k = c / kNumSeverities;
        const int s = static_cast<int>(c % kNumSeverities) + 1;
        const CorruptionSpec spec{
            kinds[k], s,
            derive_seed(seed, static_cast<std::uint64_t>(kinds[k]) * 8 + static_cast<std::uint64_t>(s))};
        grid.errors[k][static_cast<std::size_t>(s - 1)] =
            error_rate(model, corrupt_dataset(data, spec, table));
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cells)));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return grid;
}

std::vector<double> per_corruption(const ErrorGrid& grid) {
  std::vector<double> out;
  out.reserve(grid.size());
  for (const auto& row : grid.errors) {
    double s = 0.0;
    for (double e : row) s += e;
    out.push_back(s / kNumSeverities);
  }
  return out;
}

double average_error(const ErrorGrid& grid) {
  if (grid.size() == 0) throw std::invalid_argument("average_error: empty grid");
  double s = 0.0;
  for (double e : per_corruption(grid)) s += e;
  return s / static_cast<double>(grid.size());
}

MceResult mce(const ErrorGrid& model, const ErrorGrid& baseline) {
  model.validate();
  baseline.validate();
  if (model.size() != baseline.size()) {
    throw std::invalid_argument("mce: model and baseline grids cover different corruption sets");
  }
  for (CorruptionKind k : model.kinds) {
    if (std::find(baseline.kinds.begin(), baseline.kinds.end(), k) == baseline.kinds.end()) {
      throw std::invalid_argument("mce: baseline grid has no row for " + to_string(k));
    }
  }
  std::vector<CorruptionKind> order = model.kinds;
  std::sort(order.begin(), order.end());

  MceResult r;
  double total = 0.0;
  for (CorruptionKind k : order) {
    double num = 0.0, den = 0.0;
    for (double e : model.row(k)) num += e;
    for (double e : baseline.row(k)) den += e;
    if (den == 0.0) {
      r.warnings.push_back(fmt::format(
          "mce: baseline has zero error on every severity of {}; kind excluded", to_string(k)));
      continue;
    }
    total += num / den;
    r.included.push_back(k);
  }
  if (r.included.empty()) {
    throw std::invalid_argument("mce: every corruption has a zero baseline denominator");
  }
  r.value = 100.0 * total / static_cast<double>(r.included.size());
  return r;
}

RobustnessReport make_robustness_report(std::string model_id, std::uint64_t seed,
                                        std::string severity_table, double clean_error,
                                        ErrorGrid grid, const std::optional<Baseline>& baseline) {
  grid.validate();
  RobustnessReport r;
  r.model_id = std::move(model_id);
  r.seed = seed;
  r.severity_table = std::move(severity_table);
  r.clean_error = clean_error;
  r.per_corruption = per_corruption(grid);
  r.average = average_error(grid);
  if (baseline) {
    r.baseline_id = baseline->id;
    auto m = mce(grid, baseline->grid);
    r.mce = m.value;
    r.warnings = std::move(m.warnings);
  }
  r.grid = std::move(grid);
  return r;
}

}  // namespace ceb
