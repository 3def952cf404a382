#include "ceb/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ceb/random.hpp"

namespace ceb {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
  if (batch_size == 0) throw std::invalid_argument("optimizer: batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("optimizer: epochs must be positive");
  if (!(decay_factor > 0.0)) throw std::invalid_argument("optimizer: decay_factor must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must be in [0, 1)");
  }
}

Adam::Adam(std::vector<Tensor> params, const OptimizerConfig& config)
    : params_(std::move(params)),
      lr_(config.learning_rate),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    auto g = params_[i].grad();
    auto w = params_[i].mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

std::size_t steps_per_epoch(std::size_t dataset_size, std::size_t batch_size) {
  return (dataset_size + batch_size - 1) / batch_size;
}

double accuracy(const LogitModel& model, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("accuracy: empty dataset");
  auto pred = model.predict(data.inputs());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

namespace {

double batch_accuracy(const Tensor& logits, std::span<const std::size_t> y) {
  const std::size_t k = logits.dim(1);
  auto v = logits.data();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (v[i * k + j] > v[i * k + best]) best = j;
    hits += best == y[i];
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

std::vector<Tensor> leaves(const CebModel& model) {
  std::vector<Tensor> out;
  for (auto& p : model.parameters()) out.push_back(p.tensor);
  return out;
}

}  // namespace

TrainResult train(CebModel model, const Dataset& data, RhoSchedule schedule,
                  const TrainConfig& config) {
  config.optimizer.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (data.num_classes != model.num_classes()) {
    throw std::invalid_argument("train: dataset has " + std::to_string(data.num_classes) +
                                " classes but model has " + std::to_string(model.num_classes()));
  }
  if (data.dim != model.encoder.spec().input_dim) {
    throw std::invalid_argument("train: dataset dim " + std::to_string(data.dim) +
                                " does not match encoder input_dim " +
                                std::to_string(model.encoder.spec().input_dim));
  }
  model.class_prior = label_prior(data.labels, data.num_classes);

  const auto& opt = config.optimizer;
  Adam adam(leaves(model), opt);
  Rng order_rng(derive_seed(config.seed, 0xdada));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{model, schedule, 0, {}};
  CebModel last_good = model.clone();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    if (std::find(opt.decay_epochs.begin(), opt.decay_epochs.end(), epoch) !=
        opt.decay_epochs.end()) {
      adam.set_learning_rate(adam.learning_rate() * opt.decay_factor);
    }
    std::shuffle(order.begin(), order.end(), order_rng.engine());

    EpochLog entry;
    entry.epoch = epoch;
    std::size_t batches = 0;
    double correct_weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t end = std::min(order.size(), start + opt.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Tensor x = data.batch(idx);
      auto y = data.batch_labels(idx);
      const double rho = schedule.rho(step);

      LossResult loss;
      try {
        loss = objective_loss(config.objective, model, x, y, rho, derive_seed(config.seed, step + 1));
      } catch (const NonFiniteLoss& e) {
        throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(step) +
                                   ": " + e.what(),
                               std::move(last_good), step);
      }
      adam.zero_grad();
      loss.total.backward();
      adam.step();

      const double acc = batch_accuracy(loss.logits, y);
      schedule.observe_accuracy(step, acc);
      correct_weighted += acc * static_cast<double>(y.size());

      auto& m = entry.mean_terms;
      m.hzx += loss.terms.hzx;
      m.hzy += loss.terms.hzy;
      m.hyz += loss.terms.hyz;
      m.rex += loss.terms.rex;
      m.total += loss.terms.total;
      entry.rho = rho;
      entry.phase = schedule.phase(step);
      entry.mean_terms.gamma = loss.terms.gamma;
      ++batches;
      ++step;
    }
    const double nb = static_cast<double>(batches);
    auto& m = entry.mean_terms;
    m.hzx /= nb;
    m.hzy /= nb;
    m.hyz /= nb;
    m.rex /= nb;
    m.total /= nb;
    entry.end_step = step;
    entry.learning_rate = adam.learning_rate();
    entry.train_accuracy = correct_weighted / static_cast<double>(data.size());
    result.log.push_back(entry);

    bool finite = true;
    for (const auto& p : model.parameters())
      for (double v : p.tensor.data()) finite = finite && std::isfinite(v);
    if (!finite) {
      throw TrainingDiverged("training diverged: non-finite parameters after epoch " +
                                 std::to_string(epoch),
                             std::move(last_good), step);
    }
    last_good = model.clone();
  }

  result.model = std::move(model);
  result.schedule = std::move(schedule);
  result.steps = step;
  return result;
}

}  // namespace ceb
