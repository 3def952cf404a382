// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 2 5        run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <unistd.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "ceb/attacks.hpp"
#include "ceb/config.hpp"
#include "ceb/distributions.hpp"
#include "ceb/experiment.hpp"
#include "ceb/infoprobe.hpp"
#include "ceb/objective.hpp"
#include "ceb/robustness.hpp"
#include "ceb/schedule.hpp"
#include "ceb/train.hpp"
#include "fd.hpp"

using namespace ceb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_s;  // 0 = no limit
  std::function<Outcome()> run;
};

void fill_normal(Tensor t, Rng& rng, double scale = 1.0) {
  for (auto& v : t.mutable_data()) v = scale * rng.normal();
}

CebModel randomized(const EncoderSpec& spec, std::size_t k, ClassifierKind kind,
                    std::uint64_t seed) {
  CebModel m(spec, k, kind, seed);
  Rng rng(derive_seed(seed, 1));
  fill_normal(m.backward_means, rng);
  fill_normal(m.marginal_mean, rng);
  fill_normal(m.classifier.weight, rng, 0.5);
  fill_normal(m.classifier.bias, rng, 0.5);
  for (const auto& l : m.encoder.layers()) fill_normal(l.bias, rng, 0.1);
  m.class_prior.assign(k, 1.0 / static_cast<double>(k));
  return m;
}

std::vector<std::size_t> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = rng.index(k);
  return y;
}

// 1. hzy - hzx through the log densities against 0.5 (f - mu)(f - mu + 2 eps).
Outcome loss_algebra() {
  const std::size_t d = 8, k = 3, batch = 1000, models = 10;
  double worst = 0.0;
  for (std::size_t t = 0; t < models; ++t) {
    Rng rng(derive_seed(101, t));
    auto m = randomized({6, {}, {16, 16}, d}, k, ClassifierKind::Linear, derive_seed(102, t));
    auto x = standard_normal({batch, 6}, rng);
    auto y = random_labels(batch, k, rng);
    auto noise = standard_normal({batch, d}, rng);
    auto r = ceb_loss(m, x, y, 0.0, noise);
    auto f = m.encode(x);
    for (std::size_t i = 0; i < batch; ++i) {
      double closed = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double v = f.at(i, j) - m.backward_means.at(y[i], j);
        closed += v * (v + 2.0 * noise.at(i, j));
      }
      worst = std::max(worst, std::abs((r.hzy[i] - r.hzx[i]) - 0.5 * closed));
    }
  }
  return {worst < 1e-9, fmt::format("max |diff| = {:.3e} over {} draws (tol 1e-9)", worst,
                                    models * batch)};
}

// 2. Mean rex over 1e5 noise draws against the analytic KL. The encoder is a
// linear layer fed zeros, so its bias is f.
Outcome monte_carlo_kl() {
  const std::size_t d = 4, n = 100000, pairs = 20;
  const std::uint64_t seed = 20261017;
  Rng rng(seed);
  double worst = 0.0;
  std::size_t failures = 0;
  std::string worst_case;
  const Tensor x = Tensor::zeros({n, 1});
  const std::vector<std::size_t> y(n, 0);
  for (std::size_t p = 0; p < pairs; ++p) {
    CebModel m(EncoderSpec{1, {}, {}, d}, 2, ClassifierKind::Linear, p);
    std::vector<double> dir(d);
    double norm2 = 0.0;
    for (auto& v : dir) {
      v = rng.normal();
      norm2 += v * v;
    }
    const double target = rng.uniform(0.1, 25.0);  // ||f - mu||^2
    auto f = Tensor(m.encoder.layers()[0].bias).mutable_data();
    auto mu = m.backward_means.mutable_data();
    for (std::size_t j = 0; j < d; ++j) {
      mu[j] = rng.normal();
      f[j] = mu[j] + dir[j] * std::sqrt(target / norm2);
    }
    const double kl = gaussian_kl(m.encoder.layers()[0].bias.data(), m.backward_means.data().subspan(0, d));
    const double est = ceb_loss(m, x, y, 0.0, derive_seed(seed, p)).terms.rex;
    const double rel = std::abs(est - kl) / kl;
    if (rel >= 0.01) ++failures;
    if (rel > worst) {
      worst = rel;
      worst_case = fmt::format("||f-mu||^2 = {:.3f}", 2.0 * kl);
    }
  }
  return {failures == 0, fmt::format("{}/{} pairs within 1%, worst rel err {:.4f} at {}",
                                     pairs - failures, pairs, worst, worst_case)};
}

// 3. Finite differences on every loss variant.
Outcome gradients() {
  const EncoderSpec spec{6, {}, {10, 10}, 8};
  Rng rng(303);
  auto x = standard_normal({12, 6}, rng);
  auto y = random_labels(12, 3, rng);
  auto noise = standard_normal({12, 8}, rng);
  struct Variant {
    const char* name;
    Objective objective;
    ClassifierKind head;
  };
  double worst = 0.0;
  std::string detail;
  for (auto v : {Variant{"ceb", Objective::Ceb, ClassifierKind::Linear},
                 Variant{"vib", Objective::Vib, ClassifierKind::Linear},
                 Variant{"ceb+consistent", Objective::Ceb, ClassifierKind::Consistent},
                 Variant{"vib+consistent", Objective::Vib, ClassifierKind::Consistent}}) {
    auto m = randomized(spec, 3, v.head, 304);
    m.class_prior = {0.5, 0.3, 0.2};
    auto loss = [&] {
      return v.objective == Objective::Ceb ? ceb_loss(m, x, y, 0.7, noise).total
                                           : vib_loss(m, x, y, 0.7, noise).total;
    };
    std::vector<Tensor> params;
    std::vector<std::string> names;
    for (const auto& p : m.parameters()) {
      params.push_back(p.tensor);
      names.push_back(p.name);
    }
    auto r = fd_check(loss, params, names);
    detail += fmt::format("{} {:.2e} ({}); ", v.name, r.max_relative_error, r.worst);
    worst = std::max(worst, r.max_relative_error);
  }
  return {worst < 1e-5, detail + "tol 1e-5"};
}

// 4. Chain rule and bound ordering on random discrete joints.
Outcome information_identities() {
  Rng rng(404);
  const std::size_t joints = 1000;
  double chain = 0.0, dominance = 0.0, residual = 0.0;
  for (std::size_t t = 0; t < joints; ++t) {
    auto j = random_joint(1 + rng.index(8), 1 + rng.index(8), 1 + rng.index(8), rng);
    const double izx = mutual_information(j, MiPair::ZX);
    const double izy = mutual_information(j, MiPair::ZY);
    const double cmi = conditional_mutual_information(j);
    chain = std::max(chain, std::abs(izx - izy - cmi));
    auto opt = variational_bound_gap(j, j.p_z_given_y(), j.p_z());
    dominance = std::max(dominance, opt.ceb_bound - opt.vib_bound);
    auto q = variational_bound_gap(j, random_conditional(j.ny(), j.nz(), rng),
                                   random_conditional(1, j.nz(), rng));
    residual = std::max(residual, q.true_residual - q.ceb_bound);
  }
  const bool ok = chain < 1e-12 && dominance <= 1e-12 && residual <= 1e-12;
  return {ok, fmt::format("{} joints: max chain-rule gap {:.2e}; max (ceb - vib) at optima {:.2e}; "
                          "max (residual - ceb) for random q {:.2e}",
                          joints, chain, dominance, residual)};
}

// 5. Robustness trend over rho on blobs with nuisance dimensions.
Outcome rho_trend() {
  const std::vector<double> rhos = {0.0, 2.0, 5.0, 100.0};
  const std::size_t seeds = 5, epochs = 200, batch = 50;
  const double eps = 0.5;
  BlobsParams bp;
  bp.nuisance_dims = 50;
  bp.train_size = 500;
  bp.test_size = 500;
  std::vector<double> clean(rhos.size(), 0.0), adv(rhos.size(), 0.0);
  std::vector<std::vector<double>> per_seed(seeds, std::vector<double>(rhos.size()));
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    for (std::size_t s = 0; s < seeds; ++s) {
      auto data = make_blobs(bp, 5000 + s);
      const std::uint64_t seed = 6000 + s;
      CebModel m(EncoderSpec{data.train.dim, {}, {}, 4}, 2, ClassifierKind::Linear, seed);
      TrainConfig tc;
      tc.seed = seed;
      tc.optimizer.epochs = epochs;
      tc.optimizer.batch_size = batch;
      tc.optimizer.learning_rate = 3e-3;
      tc.optimizer.decay_epochs = {epochs / 2, 3 * epochs / 4, 9 * epochs / 10};
      const std::size_t spe = steps_per_epoch(bp.train_size, batch);
      auto sched = rhos[r] >= 100.0 ? RhoScheduleConfig::constant(rhos[r])
                                    : RhoScheduleConfig::jump_start(rhos[r], 2 * spe, spe);
      auto model = train(m, data.train, RhoSchedule(sched), tc).model.frozen();
      AttackConfig ac;
      ac.norm = Norm::Linf;
      ac.epsilon = eps;
      ac.steps = 20;
      const double a =
          pgd_attack(model, data.test.inputs(), data.test.labels, ac, data.test.range)
              .accuracy(data.test.labels);
      clean[r] += accuracy(model, data.test) / seeds;
      adv[r] += a / seeds;
      per_seed[s][r] = a;
    }
  }
  const double spread = *std::max_element(clean.begin(), clean.end()) -
                        *std::min_element(clean.begin(), clean.end());
  std::size_t inversions = 0;
  for (std::size_t r = 1; r < rhos.size(); ++r)
    if (!(adv[r] < adv[r - 1])) ++inversions;
  std::string seed_inv;
  for (const auto& row : per_seed) {
    std::size_t inv = 0;
    for (std::size_t r = 1; r < rhos.size(); ++r)
      if (!(row[r] < row[r - 1])) ++inv;
    seed_inv += std::to_string(inv);
  }
  std::string table;
  for (std::size_t r = 0; r < rhos.size(); ++r)
    table += fmt::format("rho={} clean={:.4f} pgd={:.4f}; ", rhos[r], clean[r], adv[r]);
  return {spread <= 0.02 && inversions <= 1,
          fmt::format("{}clean spread {:.4f} (<= 0.02), mean-curve inversions {} (<= 1), "
                      "per-seed inversions [{}] at eps={}",
                      table, spread, inversions, seed_inv, eps)};
}

// 6. Attack contracts.
Outcome attack_contracts() {
  std::vector<std::string> failed;
  // Default step size.
  for (double e : {0.1, 0.3, 8.0, 16.0})
    for (std::size_t n : {1u, 7u, 20u}) {
      AttackConfig c;
      c.epsilon = e;
      c.steps = n;
      if (c.effective_step_size() != 4.0 * e / (3.0 * static_cast<double>(n)))
        failed.push_back(fmt::format("step size eps={} n={}", e, n));
    }
  // Ball containment on every iterate of a nonlinear model.
  auto m = randomized({5, {}, {16}, 3}, 3, ClassifierKind::Linear, 601).frozen();
  Rng rng(602);
  std::vector<double> xv(40 * 5);
  for (auto& v : xv) v = rng.uniform();
  auto x = Tensor::from({40, 5}, xv);
  auto y = random_labels(40, 3, rng);
  double excess = 0.0;
  for (auto norm : {Norm::L2, Norm::Linf})
    for (auto mode : {AttackMode::Untargeted, AttackMode::RandomTarget}) {
      AttackConfig c;
      c.norm = norm;
      c.mode = mode;
      c.epsilon = 0.25;
      c.steps = 10;
      c.random_start = true;
      c.seed = 603;
      pgd_attack(m, x, y, c, {0.0, 1.0}, [&](std::size_t, const Tensor& it) {
        for (std::size_t i = 0; i < 40; ++i) {
          std::vector<double> d(5);
          for (std::size_t j = 0; j < 5; ++j) {
            d[j] = it.at(i, j) - x.at(i, j);
            if (it.at(i, j) < 0.0 || it.at(i, j) > 1.0) excess = std::max(excess, 1.0);
          }
          excess = std::max(excess, perturbation_norm(d, norm) - 0.25);
        }
      });
    }
  if (excess > 1e-12) failed.push_back(fmt::format("ball containment (excess {:.2e})", excess));
  // n = 1 is the fast gradient method.
  auto xg = Tensor::from({40, 5}, xv, true);
  scale(reduce_sum(categorical_log_prob({m.logits(xg)}, y)), -1.0).backward();
  const auto g = xg.grad();
  double fgm_err = 0.0;
  for (auto norm : {Norm::Linf, Norm::L2}) {
    AttackConfig c;
    c.norm = norm;
    c.epsilon = 0.05;
    c.steps = 1;
    auto r = pgd_attack(m, x, y, c, {});
    for (std::size_t i = 0; i < 40; ++i) {
      double gn = 0.0;
      for (std::size_t j = 0; j < 5; ++j) gn += g[i * 5 + j] * g[i * 5 + j];
      gn = std::sqrt(gn);
      for (std::size_t j = 0; j < 5; ++j) {
        const double gij = g[i * 5 + j];
        const double step = norm == Norm::Linf ? 0.05 * ((gij > 0) - (gij < 0)) : 0.05 * gij / gn;
        fgm_err = std::max(fgm_err, std::abs(r.final_iterate.at(i, j) - (x.at(i, j) + step)));
      }
    }
  }
  if (fgm_err > 1e-12) failed.push_back(fmt::format("FGM reduction (err {:.2e})", fgm_err));
  // Linear model: the wrong-minus-true logit margin is linear in x, and one
  // L-inf step raises it by exactly epsilon * ||w||_1.
  Linear lin{Tensor::from({4, 2}, {0.5, -1.0, 2.0, 0.25, -0.75, 0.0, 1.5, 3.0}),
             Tensor::from({2}, {0.1, -0.2})};
  struct LinearModel : LogitModel {
    Linear l;
    Tensor logits(const Tensor& in) const override { return l.forward(in); }
    std::size_t num_classes() const override { return 2; }
  } lm;
  lm.l = lin;
  auto xl = Tensor::from({2, 4}, {0.3, -0.4, 1.2, 0.0, -1.0, 2.0, 0.5, 0.7});
  std::vector<std::size_t> yl = {0, 1};
  AttackConfig c;
  c.epsilon = 0.1;
  auto adv = pgd_attack(lm, xl, yl, c, {}).final_iterate;
  auto before = lm.logits(xl), after = lm.logits(adv);
  double lin_err = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    double w1 = 0.0;
    for (std::size_t j = 0; j < 4; ++j) w1 += std::abs(lin.weight.at(j, 1 - yl[i]) - lin.weight.at(j, yl[i]));
    const double gain = (after.at(i, 1 - yl[i]) - after.at(i, yl[i])) -
                        (before.at(i, 1 - yl[i]) - before.at(i, yl[i]));
    lin_err = std::max(lin_err, std::abs(gain - 0.1 * w1));
  }
  if (lin_err > 1e-9) failed.push_back(fmt::format("linear gain (err {:.2e})", lin_err));
  std::string detail = fmt::format(
      "step size exact; ball excess {:.2e}; FGM err {:.2e}; linear gain err {:.2e}", excess,
      fgm_err, lin_err);
  for (const auto& f : failed) detail += "; FAILED " + f;
  return {failed.empty(), detail};
}

// A classifier whose prediction is a hash of the input bits.
class HashClassifier : public LogitModel {
 public:
  explicit HashClassifier(std::size_t k) : k_(k) {}
  Tensor logits(const Tensor& x) const override {
    const std::size_t b = x.dim(0), d = x.dim(1);
    std::vector<double> out(b * k_, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      std::uint64_t h = 0;
      for (std::size_t j = 0; j < d; ++j) h = derive_seed(h, std::bit_cast<std::uint64_t>(x.at(i, j)));
      out[i * k_ + h % k_] = 1.0;
    }
    return Tensor::from({b, k_}, out);
  }
  std::size_t num_classes() const override { return k_; }

 private:
  std::size_t k_;
};

// 7. Metric contracts.
Outcome metric_contracts() {
  PatternsParams p;
  p.train_size = 4;
  p.test_size = 1000;
  auto test = make_patterns(p, 701).test;
  HashClassifier h(p.num_classes);
  auto grid = evaluate_grid(h, test, all_corruptions(), 702);
  const double self = mce(grid, grid).value;
  double consistency = 0.0;
  auto ec = per_corruption(grid);
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0.0;
    for (double e : grid.errors[i]) s += e;
    consistency = std::max(consistency, std::abs(ec[i] - s / kNumSeverities));
    total += s;
  }
  consistency = std::max(consistency,
                         std::abs(average_error(grid) - total / (kNumSeverities * grid.size())));
  const double chance = 1.0 - 1.0 / static_cast<double>(p.num_classes);
  const double sigma = std::sqrt(chance * (1.0 - chance) / static_cast<double>(test.size()));
  double worst_z = 0.0;
  for (const auto& row : grid.errors)
    for (double e : row) worst_z = std::max(worst_z, std::abs(e - chance) / sigma);
  const bool ok = self == 100.0 && consistency <= 1e-12 && worst_z <= 3.0;
  return {ok, fmt::format("mce(g,g) = {}; E_c/avg consistency {:.2e}; random classifier: "
                          "worst cell {:.2f} sigma from {:.2f} over {} cells (n={})",
                          self, consistency, worst_z, chance, grid.size() * kNumSeverities,
                          test.size())};
}

// 8. Jump-start schedule against a hand-computed trace: 10 steps per epoch,
// 100 -> 10 over 2 epochs, final anneal over 1 epoch. The batch accuracy is
// 0 up to step 29 and 1 from step 30, so the 10-step running mean first
// exceeds 0.2 at step 32 (0.3) and the final anneal runs over steps 33..43.
Outcome schedule_contract() {
  RhoSchedule s(RhoScheduleConfig::jump_start(2.0, 20, 10));
  struct Point {
    std::size_t step;
    double rho;
    RhoPhase phase;
  };
  const std::vector<Point> trace = {
      {0, 100.0, RhoPhase::JumpStart},      {1, 95.5, RhoPhase::JumpStart},
      {10, 55.0, RhoPhase::JumpStart},      {19, 14.5, RhoPhase::JumpStart},
      {20, 10.0, RhoPhase::JumpStart},      {25, 10.0, RhoPhase::JumpStart},
      {32, 10.0, RhoPhase::JumpStart},      {33, 10.0, RhoPhase::AnnealToTarget},
      {34, 9.2, RhoPhase::AnnealToTarget},  {38, 6.0, RhoPhase::AnnealToTarget},
      {42, 2.8, RhoPhase::AnnealToTarget},  {43, 2.0, RhoPhase::Constant},
      {60, 2.0, RhoPhase::Constant},
  };
  double worst = 0.0;
  std::size_t phase_errors = 0;
  std::size_t next = 0;
  for (std::size_t step = 0; step <= 60; ++step) {
    // rho for this step is read before its batch accuracy is observed.
    if (next < trace.size() && trace[next].step == step) {
      worst = std::max(worst, std::abs(s.rho(step) - trace[next].rho));
      if (s.phase(step) != trace[next].phase) ++phase_errors;
      ++next;
    }
    s.observe_accuracy(step, step < 30 ? 0.0 : 1.0);
  }
  const bool trig = s.trigger_step() && *s.trigger_step() == 32;
  return {worst < 1e-12 && phase_errors == 0 && trig,
          fmt::format("{} waypoints, max |rho - trace| {:.2e}, phase mismatches {}, trigger step {}",
                      trace.size(), worst, phase_errors,
                      s.trigger_step() ? std::to_string(*s.trigger_step()) : "none")};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// 9. Two sweeps from one config into different directories.
Outcome determinism() {
  ExperimentConfig c;
  c.name = "determinism";
  c.dataset.source = DatasetConfig::Source::Patterns;
  c.dataset.patterns.train_size = 200;
  c.dataset.patterns.test_size = 100;
  c.hidden = {16};
  c.latent_dim = 4;
  c.rhos = {0.0, 5.0, 100.0};
  c.optimizer.epochs = 4;
  c.optimizer.batch_size = 25;
  c.schedule.anneal_start_step = 8;
  c.schedule.anneal_end_step = 16;
  c.attacks.push_back({Norm::Linf, AttackMode::Untargeted, {0.0, 0.05}, 5, std::nullopt, true});
  c.attacks.push_back({Norm::L2, AttackMode::RandomTarget, {0.5}, 5, std::nullopt, false});
  c.corruptions.kinds = {CorruptionKind::GaussianNoise, CorruptionKind::Pixelate};
  c.seed = 901;
  c.threads = 3;
  const fs::path root = fs::temp_directory_path() / fmt::format("ceb_acceptance_{}", ::getpid());
  fs::remove_all(root);
  std::vector<fs::path> dirs = {root / "a", root / "b"};
  for (const auto& d : dirs) {
    c.output_dir = d.string();
    run_sweep(c);
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dirs[0]);
    if (rel == "config.json") continue;  // records its own output_dir
    ++compared;
    if (slurp(e.path()) != slurp(dirs[1] / rel)) differing.push_back(rel.string());
  }
  const bool has_ckpt = fs::exists(dirs[0] / rho_dir_name(5.0) / "checkpoint.bin");
  fs::remove_all(root);
  std::string detail = fmt::format("{} files compared byte for byte, {} differ", compared,
                                   differing.size());
  for (const auto& d : differing) detail += " " + d;
  return {differing.empty() && compared >= 8 && has_ckpt, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "loss-algebra equivalence", 1.0, loss_algebra},
      {2, "Monte-Carlo KL", 10.0, monte_carlo_kl},
      {3, "gradient correctness", 30.0, gradients},
      {4, "information identities", 10.0, information_identities},
      {5, "rho-robustness trend", 600.0, rho_trend},
      {6, "attack contracts", 5.0, attack_contracts},
      {7, "metric contracts", 60.0, metric_contracts},
      {8, "schedule contract", 1.0, schedule_contract},
      {9, "determinism", 0.0, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.time_limit_s == 0.0 || secs < c.time_limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    std::string limit = c.time_limit_s > 0.0 ? fmt::format(", limit {} s", c.time_limit_s) : "";
    fmt::print("{} {}. {}: {} [{:.2f} s{}{}]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail,
               secs, limit, in_time ? "" : ", TOO SLOW");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
