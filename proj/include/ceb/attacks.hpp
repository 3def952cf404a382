#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ceb/dataset.hpp"
#include "ceb/models.hpp"
#include "ceb/tensor.hpp"

namespace ceb {

enum class Norm { L2, Linf };
enum class AttackMode { Untargeted, RandomTarget };

std::string to_string(Norm n);
std::string to_string(AttackMode m);
Norm parse_norm(const std::string& s);
AttackMode parse_attack_mode(const std::string& s);

/// PGD parameters: norm p, radius epsilon, n steps of size epsilon_i.
/// When step_size is unset, epsilon_i = 4 epsilon / (3 n).
struct AttackConfig {
  Norm norm = Norm::Linf;
  double epsilon = 0.0;
  std::size_t steps = 1;
  std::optional<double> step_size;
  AttackMode mode = AttackMode::Untargeted;
  std::uint64_t seed = 0;  // target draws and random start
  bool random_start = false;

  double effective_step_size() const;
  void validate() const;

  /// Random-target setting epsilon = 16, n = 20, epsilon_i = 2.
  static AttackConfig random_target_reference(Norm norm, std::uint64_t seed);
};

struct AttackResult {
  /// Iterate with the highest attack objective seen, including the start.
  Tensor adversarial;
  /// Iterate after the last step, whether or not it improved.
  Tensor final_iterate;
  std::vector<bool> success;
  std::vector<std::size_t> clean_pred;
  std::vector<std::size_t> adversarial_pred;
  std::vector<std::size_t> targets;  // random-target mode only
  std::vector<double> norms;         // ||adversarial - x||_p per example

  double accuracy(std::span<const std::size_t> labels) const;
};

/// Called after every projected step with the step index (1-based) and the
/// feasible iterate.
using IterateObserver = std::function<void(std::size_t, const Tensor&)>;

/// Projects delta onto the epsilon-ball in place. Feasible points are
/// returned unchanged.
void project_to_ball(std::span<double> delta, Norm norm, double epsilon);
double perturbation_norm(std::span<const double> delta, Norm norm);

/// Per-example cross-entropy -log softmax(logits)[label].
std::vector<double> cross_entropy(const LogitModel& model, const Tensor& x,
                                  std::span<const std::size_t> labels);

/// Projected gradient attack on cross-entropy. Untargeted ascends the loss
/// of the true label; random-target descends the loss of a uniformly drawn
/// wrong label. L-inf steps along sign(g), L2 along g / ||g||_2 (a zero
/// gradient gives a zero step). Each iterate is projected onto the
/// epsilon-ball around x and clipped to `range`.
///
/// The model is only read. Pass a model whose parameters do not track
/// gradients (e.g. CebModel::frozen()) when attacking from several threads.
AttackResult pgd_attack(const LogitModel& model, const Tensor& x,
                        std::span<const std::size_t> labels, const AttackConfig& config,
                        InputRange range, const IterateObserver& observer = {});

struct SweepPoint {
  double epsilon = 0.0;
  double accuracy = 0.0;
};

/// Adversarial accuracy per epsilon; epsilon = 0 is clean accuracy. Each
/// point uses `base` with its epsilon replaced and the default step size
/// unless base.step_size is set.
std::vector<SweepPoint> attack_sweep(const LogitModel& model, const Dataset& data,
                                     const AttackConfig& base,
                                     std::span<const double> epsilons);

}  // namespace ceb
