#include "ceb/schedule.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "ceb/objective.hpp"

namespace ceb {

std::string to_string(RhoPhase p) {
  switch (p) {
    case RhoPhase::JumpStart: return "jump_start";
    case RhoPhase::AnnealToTarget: return "anneal_to_target";
    case RhoPhase::Constant: return "constant";
  }
  return "?";
}

std::string to_string(RhoScheduleConfig::Kind k) {
  switch (k) {
    case RhoScheduleConfig::Kind::Constant: return "constant";
    case RhoScheduleConfig::Kind::Linear: return "linear";
    case RhoScheduleConfig::Kind::JumpStart: return "jump_start";
  }
  return "?";
}

RhoScheduleConfig::Kind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return RhoScheduleConfig::Kind::Constant;
  if (s == "linear") return RhoScheduleConfig::Kind::Linear;
  if (s == "jump_start") return RhoScheduleConfig::Kind::JumpStart;
  throw std::invalid_argument("unknown schedule kind '" + s +
                              "' (expected constant, linear or jump_start)");
}

RhoScheduleConfig RhoScheduleConfig::constant(double rho) {
  RhoScheduleConfig c;
  c.kind = Kind::Constant;
  c.target_rho = rho;
  c.start_rho = rho;
  return c;
}

RhoScheduleConfig RhoScheduleConfig::linear(double start_rho, double target_rho,
                                            std::size_t start_step, std::size_t end_step) {
  RhoScheduleConfig c;
  c.kind = Kind::Linear;
  c.start_rho = start_rho;
  c.target_rho = target_rho;
  c.anneal_start_step = start_step;
  c.anneal_end_step = end_step;
  c.validate();
  return c;
}

RhoScheduleConfig RhoScheduleConfig::jump_start(double target_rho, std::size_t jump_steps,
                                                std::size_t final_steps, double start_rho,
                                                double intermediate_rho,
                                                std::optional<double> accuracy_trigger) {
  RhoScheduleConfig c;
  c.kind = Kind::JumpStart;
  c.start_rho = start_rho;
  c.intermediate_rho = intermediate_rho;
  c.target_rho = target_rho;
  c.anneal_start_step = jump_steps;
  c.anneal_end_step = jump_steps + final_steps;
  c.accuracy_trigger = accuracy_trigger;
  c.validate();
  return c;
}

void RhoScheduleConfig::validate() const {
  if (anneal_end_step < anneal_start_step) {
    throw std::invalid_argument("rho schedule: anneal_end_step precedes anneal_start_step");
  }
  if (kind == Kind::JumpStart && !intermediate_rho) {
    throw std::invalid_argument("rho schedule: jump_start needs intermediate_rho");
  }
  if (kind != Kind::JumpStart && intermediate_rho) {
    throw std::invalid_argument("rho schedule: intermediate_rho only applies to jump_start");
  }
  if (accuracy_trigger && (*accuracy_trigger < 0.0 || *accuracy_trigger >= 1.0)) {
    throw std::invalid_argument("rho schedule: accuracy_trigger must be in [0, 1)");
  }
  if (accuracy_window == 0) throw std::invalid_argument("rho schedule: accuracy_window is 0");
}

RhoSchedule::RhoSchedule(RhoScheduleConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::optional<std::size_t> RhoSchedule::final_anneal_start() const {
  if (config_.kind == RhoScheduleConfig::Kind::Constant) return 0;
  if (config_.accuracy_trigger) {
    if (!trigger_step_) return std::nullopt;
    return std::max(config_.anneal_start_step, *trigger_step_ + 1);
  }
  return config_.anneal_start_step;
}

double RhoSchedule::pre_anneal_rho(std::size_t step) const {
  if (config_.kind == RhoScheduleConfig::Kind::JumpStart) {
    if (config_.anneal_start_step == 0) return *config_.intermediate_rho;
    return lerp(static_cast<double>(step), 0.0, static_cast<double>(config_.anneal_start_step),
                config_.start_rho, *config_.intermediate_rho);
  }
  return config_.start_rho;
}

double RhoSchedule::rho(std::size_t step) const {
  if (config_.kind == RhoScheduleConfig::Kind::Constant) return config_.target_rho;
  auto begin = final_anneal_start();
  if (!begin || step < *begin) return pre_anneal_rho(step);
  const std::size_t span = config_.anneal_end_step - config_.anneal_start_step;
  if (span == 0) return config_.target_rho;
  return lerp(static_cast<double>(step), static_cast<double>(*begin),
              static_cast<double>(*begin + span), pre_anneal_rho(*begin), config_.target_rho);
}

RhoPhase RhoSchedule::phase(std::size_t step) const {
  if (config_.kind == RhoScheduleConfig::Kind::Constant) return RhoPhase::Constant;
  auto begin = final_anneal_start();
  if (!begin || step < *begin) return RhoPhase::JumpStart;
  const std::size_t span = config_.anneal_end_step - config_.anneal_start_step;
  return step < *begin + span ? RhoPhase::AnnealToTarget : RhoPhase::Constant;
}

void RhoSchedule::observe_accuracy(std::size_t step, double batch_accuracy) {
  if (!config_.accuracy_trigger || trigger_step_) return;
  window_.push_back(batch_accuracy);
  while (window_.size() > config_.accuracy_window) window_.pop_front();
  const double mean =
      std::accumulate(window_.begin(), window_.end(), 0.0) / static_cast<double>(window_.size());
  if (mean > *config_.accuracy_trigger) trigger_step_ = step;
}

RhoSchedule::State RhoSchedule::state() const {
  return {trigger_step_, std::vector<double>(window_.begin(), window_.end())};
}

void RhoSchedule::restore(const State& state) {
  trigger_step_ = state.trigger_step;
  window_.assign(state.window.begin(), state.window.end());
}

}  // namespace ceb
