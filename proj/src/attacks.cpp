#include "ceb/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ceb/distributions.hpp"
#include "ceb/random.hpp"

namespace ceb {

std::string to_string(Norm n) { return n == Norm::L2 ? "l2" : "linf"; }

std::string to_string(AttackMode m) {
  return m == AttackMode::Untargeted ? "untargeted" : "random_target";
}

Norm parse_norm(const std::string& s) {
  if (s == "l2" || s == "L2") return Norm::L2;
  if (s == "linf" || s == "Linf" || s == "inf") return Norm::Linf;
  throw std::invalid_argument("unknown norm '" + s + "' (expected l2 or linf)");
}

AttackMode parse_attack_mode(const std::string& s) {
  if (s == "untargeted") return AttackMode::Untargeted;
  if (s == "random_target") return AttackMode::RandomTarget;
  throw std::invalid_argument("unknown attack mode '" + s +
                              "' (expected untargeted or random_target)");
}

double AttackConfig::effective_step_size() const {
  if (step_size) return *step_size;
  return 4.0 * epsilon / (3.0 * static_cast<double>(steps));
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
  if (steps == 0) throw std::invalid_argument("attack: steps must be >= 1");
  if (step_size && !(*step_size > 0.0)) {
    throw std::invalid_argument("attack: step_size must be > 0");
  }
}

AttackConfig AttackConfig::random_target_reference(Norm norm, std::uint64_t seed) {
  AttackConfig c;
  c.norm = norm;
  c.epsilon = 16.0;
  c.steps = 20;
  c.step_size = 2.0;
  c.mode = AttackMode::RandomTarget;
  c.seed = seed;
  return c;
}

double AttackResult::accuracy(std::span<const std::size_t> labels) const {
  if (labels.size() != adversarial_pred.size() || labels.empty()) {
    throw std::invalid_argument("AttackResult::accuracy: label count mismatch");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += adversarial_pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double perturbation_norm(std::span<const double> delta, Norm norm) {
  double r = 0.0;
  if (norm == Norm::Linf) {
    for (double v : delta) r = std::max(r, std::abs(v));
    return r;
  }
  for (double v : delta) r += v * v;
  return std::sqrt(r);
}

void project_to_ball(std::span<double> delta, Norm norm, double epsilon) {
  if (norm == Norm::Linf) {
    for (auto& v : delta) v = std::clamp(v, -epsilon, epsilon);
    return;
  }
  // The slack keeps points that were just projected (and may sit an ulp
  // outside the sphere) from being rescaled again.
  const double n = perturbation_norm(delta, Norm::L2);
  if (n > epsilon * (1.0 + 1e-12)) {
    const double f = epsilon / n;
    for (auto& v : delta) v *= f;
  }
}

std::vector<double> cross_entropy(const LogitModel& model, const Tensor& x,
                                  std::span<const std::size_t> labels) {
  Tensor lp = categorical_log_prob({model.logits(x)}, labels);
  std::vector<double> out(lp.data().begin(), lp.data().end());
  for (auto& v : out) v = -v;
  return out;
}

namespace {

struct Evaluation {
  std::vector<double> objective;  // per example, to be maximized
  std::vector<double> gradient;   // d objective / d x, row-major
};

// Untargeted: maximize CE(true label). Targeted: maximize -CE(target).
Evaluation evaluate(const LogitModel& model, const std::vector<double>& x_values, const Shape& shape,
                    std::span<const std::size_t> labels, bool targeted) {
  Tensor x = Tensor::from(shape, x_values, true);
  Tensor lp = categorical_log_prob({model.logits(x)}, labels);
  Tensor objective = targeted ? lp : scale(lp, -1.0);
  reduce_sum(objective).backward();
  return {std::vector<double>(objective.data().begin(), objective.data().end()), x.grad()};
}

}  // namespace

AttackResult pgd_attack(const LogitModel& model, const Tensor& x,
                        std::span<const std::size_t> labels, const AttackConfig& config,
                        InputRange range, const IterateObserver& observer) {
  config.validate();
  if (x.rank() != 2 || x.dim(0) != labels.size()) {
    throw ShapeError("pgd_attack: inputs " + shape_string(x.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t b = x.dim(0), dim = x.dim(1);
  const std::size_t k = model.num_classes();
  const bool targeted = config.mode == AttackMode::RandomTarget;
  const double step = config.effective_step_size();
  Rng rng(config.seed);

  AttackResult result;
  result.clean_pred = model.predict(x);
  std::vector<std::size_t> attack_labels(labels.begin(), labels.end());
  if (targeted) {
    if (k < 2) throw std::invalid_argument("pgd_attack: random target needs >= 2 classes");
    for (auto& t : attack_labels) t = (t + 1 + rng.index(k - 1)) % k;
    result.targets = attack_labels;
  }

  const auto origin = x.data();
  std::vector<double> current(origin.begin(), origin.end());
  auto clip_and_project = [&](std::vector<double>& values) {
    for (std::size_t i = 0; i < b; ++i) {
      std::span<double> row(values.data() + i * dim, dim);
      std::vector<double> delta(dim);
      for (std::size_t j = 0; j < dim; ++j) delta[j] = row[j] - origin[i * dim + j];
      project_to_ball(delta, config.norm, config.epsilon);
      for (std::size_t j = 0; j < dim; ++j) {
        row[j] = std::clamp(origin[i * dim + j] + delta[j], range.lo, range.hi);
      }
    }
  };

  if (config.random_start) {
    for (std::size_t i = 0; i < b; ++i) {
      std::span<double> row(current.data() + i * dim, dim);
      if (config.norm == Norm::Linf) {
        for (auto& v : row) v += rng.uniform(-config.epsilon, config.epsilon);
      } else {
        std::vector<double> dir(dim);
        for (auto& v : dir) v = rng.normal();
        const double n = perturbation_norm(dir, Norm::L2);
        const double radius =
            config.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
        for (std::size_t j = 0; j < dim; ++j) row[j] += n > 0.0 ? radius * dir[j] / n : 0.0;
      }
    }
    clip_and_project(current);
  }

  std::vector<double> best = current;
  std::vector<double> best_objective(b, -std::numeric_limits<double>::infinity());
  auto keep_best = [&](const std::vector<double>& objective) {
    for (std::size_t i = 0; i < b; ++i) {
      if (objective[i] > best_objective[i]) {
        best_objective[i] = objective[i];
        std::copy_n(current.begin() + static_cast<std::ptrdiff_t>(i * dim), dim,
                    best.begin() + static_cast<std::ptrdiff_t>(i * dim));
      }
    }
  };

  for (std::size_t s = 1; s <= config.steps; ++s) {
    Evaluation ev = evaluate(model, current, x.shape(), attack_labels, targeted);
    keep_best(ev.objective);
    for (std::size_t i = 0; i < b; ++i) {
      std::span<double> g(ev.gradient.data() + i * dim, dim);
      double* row = current.data() + i * dim;
      if (config.norm == Norm::Linf) {
        for (std::size_t j = 0; j < dim; ++j) {
          const double sgn = g[j] > 0.0 ? 1.0 : (g[j] < 0.0 ? -1.0 : 0.0);
          row[j] += step * sgn;
        }
      } else {
        const double n = perturbation_norm(g, Norm::L2);
        if (n > 0.0) {
          for (std::size_t j = 0; j < dim; ++j) row[j] += step * g[j] / n;
        }
      }
    }
    clip_and_project(current);
    if (observer) observer(s, Tensor::from(x.shape(), current));
  }
  {
    Tensor xt = Tensor::from(x.shape(), current);
    auto lp = categorical_log_prob({model.logits(xt)}, attack_labels);
    std::vector<double> objective(lp.data().begin(), lp.data().end());
    if (!targeted)
      for (auto& v : objective) v = -v;
    keep_best(objective);
  }

  result.final_iterate = Tensor::from(x.shape(), current);
  result.adversarial = Tensor::from(x.shape(), best);
  result.adversarial_pred = model.predict(result.adversarial);
  result.success.resize(b);
  result.norms.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    result.success[i] = targeted ? result.adversarial_pred[i] == attack_labels[i]
                                 : result.adversarial_pred[i] != labels[i];
    std::vector<double> delta(dim);
    for (std::size_t j = 0; j < dim; ++j) delta[j] = best[i * dim + j] - origin[i * dim + j];
    result.norms[i] = perturbation_norm(delta, config.norm);
  }
  return result;
}

std::vector<SweepPoint> attack_sweep(const LogitModel& model, const Dataset& data,
                                     const AttackConfig& base,
                                     std::span<const double> epsilons) {
  if (data.empty()) throw std::invalid_argument("attack_sweep: empty dataset");
  Tensor x = data.inputs();
  std::vector<SweepPoint> out;
  for (double eps : epsilons) {
    if (eps < 0.0) throw std::invalid_argument("attack_sweep: negative epsilon");
    if (eps == 0.0) {
      auto pred = model.predict(x);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
      out.push_back({0.0, static_cast<double>(hits) / static_cast<double>(pred.size())});
      continue;
    }
    AttackConfig cfg = base;
    cfg.epsilon = eps;
    auto r = pgd_attack(model, x, data.labels, cfg, data.range);
    out.push_back({eps, r.accuracy(data.labels)});
  }
  return out;
}

}  // namespace ceb
