#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ceb/dataset.hpp"
#include "ceb/objective.hpp"
#include "ceb/schedule.hpp"

namespace ceb {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Learning rate is multiplied by decay_factor at the start of each listed
  /// epoch.
  double decay_factor = 0.3;
  std::vector<std::size_t> decay_epochs;
  std::size_t batch_size = 64;
  std::size_t epochs = 50;

  void validate() const;
};

/// Adam over a fixed set of parameter leaves.
class Adam {
 public:
  Adam(std::vector<Tensor> params, const OptimizerConfig& config);

  void zero_grad();
  void step();

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t end_step = 0;
  double rho = 0.0;  // at the last step of the epoch
  RhoPhase phase = RhoPhase::Constant;
  double learning_rate = 0.0;
  LossBreakdown mean_terms;  // averaged over the epoch's batches
  double train_accuracy = 0.0;
};

struct TrainConfig {
  Objective objective = Objective::Ceb;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

struct TrainResult {
  CebModel model;
  RhoSchedule schedule;
  std::size_t steps = 0;
  std::vector<EpochLog> log;
};

/// Training stopped on a non-finite loss. Carries the model as of the end
/// of the last fully finite epoch.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, CebModel last_good, std::size_t step)
      : std::runtime_error(what), last_good_(std::move(last_good)), step_(step) {}
  const CebModel& last_good() const { return last_good_; }
  std::size_t step() const { return step_; }

 private:
  CebModel last_good_;
  std::size_t step_;
};

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size);

/// Minibatch Adam on the chosen objective with rho drawn from the schedule.
/// Noise for step s is seeded with derive_seed(seed, s); the epoch order is
/// a seeded shuffle. The consistent classifier's prior is set to the
/// empirical training label distribution. The returned model is the
/// trained parameters; its logits() is the deterministic mean-encoding path.
TrainResult train(CebModel model, const Dataset& data, RhoSchedule schedule,
                  const TrainConfig& config);

/// Fraction of rows whose argmax logit equals the label.
double accuracy(const LogitModel& model, const Dataset& data);

}  // namespace ceb
