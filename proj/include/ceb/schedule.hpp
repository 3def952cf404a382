#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

namespace ceb {

enum class RhoPhase { JumpStart, AnnealToTarget, Constant };
std::string to_string(RhoPhase p);

/// Bottleneck-strength schedule parameters, in optimizer steps.
///
/// Constant:  rho = target_rho throughout.
/// Linear:    start_rho held until anneal_start_step, then linear to
///            target_rho at anneal_end_step.
/// JumpStart: start_rho -> intermediate_rho linearly over
///            [0, anneal_start_step], held there, then linear to target_rho
///            over a span of (anneal_end_step - anneal_start_step) steps.
///
/// With accuracy_trigger set, the final anneal additionally waits until the
/// running mean of the last accuracy_window training-batch accuracies first
/// exceeds the trigger; it then begins on the step after the one whose
/// accuracy fired it (or at anneal_start_step, whichever is later).
struct RhoScheduleConfig {
  enum class Kind { Constant, Linear, JumpStart };

  Kind kind = Kind::Constant;
  double target_rho = 0.0;
  double start_rho = 100.0;
  std::optional<double> intermediate_rho;
  std::size_t anneal_start_step = 0;
  std::size_t anneal_end_step = 0;
  std::optional<double> accuracy_trigger;
  std::size_t accuracy_window = 10;

  static RhoScheduleConfig constant(double rho);
  static RhoScheduleConfig linear(double start_rho, double target_rho, std::size_t start_step,
                                  std::size_t end_step);
  /// 100 -> 10 over jump_steps, then -> target over final_steps once
  /// training accuracy passes 20%.
  static RhoScheduleConfig jump_start(double target_rho, std::size_t jump_steps,
                                      std::size_t final_steps, double start_rho = 100.0,
                                      double intermediate_rho = 10.0,
                                      std::optional<double> accuracy_trigger = 0.2);

  void validate() const;
};

std::string to_string(RhoScheduleConfig::Kind k);
RhoScheduleConfig::Kind parse_schedule_kind(const std::string& s);

class RhoSchedule {
 public:
  explicit RhoSchedule(RhoScheduleConfig config);

  double rho(std::size_t step) const;
  RhoPhase phase(std::size_t step) const;

  /// Feeds the training accuracy measured on the batch at `step`.
  void observe_accuracy(std::size_t step, double batch_accuracy);

  const RhoScheduleConfig& config() const { return config_; }
  std::optional<std::size_t> trigger_step() const { return trigger_step_; }

  /// Step at which the final anneal begins; empty while still waiting on
  /// the accuracy trigger.
  std::optional<std::size_t> final_anneal_start() const;

  struct State {
    std::optional<std::size_t> trigger_step;
    std::vector<double> window;
  };
  State state() const;
  void restore(const State& state);

 private:
  double pre_anneal_rho(std::size_t step) const;

  RhoScheduleConfig config_;
  std::optional<std::size_t> trigger_step_;
  std::deque<double> window_;
};

}  // namespace ceb
