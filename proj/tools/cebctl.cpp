// cebctl: train, attack, corrupt, evaluate and sweep CEB models from a JSON
// experiment config. Run `cebctl <subcommand> --help` for flags.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <thread>

#include "ceb/binary_io.hpp"
#include "ceb/experiment.hpp"
#include "ceb/infoprobe.hpp"

namespace fs = std::filesystem;
using namespace ceb;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::vector<double> rhos;
  unsigned threads = 0;

  std::string checkpoint;
  std::string baseline;

  std::string norm = "linf";
  std::string mode = "untargeted";
  double epsilon = 0.0;
  std::size_t steps = 20;
  std::optional<double> step_size;
  std::uint64_t seed = 0;
  bool random_start = false;

  std::string data;
  std::string kind;
  int severity = 1;
  std::string severity_table;

  std::string report;
  std::string plots;

  std::size_t nx = 3, ny = 3, nz = 3;
  std::size_t trials = 1000;
};

ExperimentConfig load_with_overrides(const Options& o) {
  ExperimentConfig c = load_config(o.config);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.threads) c.threads = o.threads;
  return c;
}

unsigned thread_count(const ExperimentConfig& c) {
  return c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
}

void check_hash(const ExperimentConfig& c, const Checkpoint& ck, const std::string& path) {
  if (ck.config_hash != config_hash(c)) {
    std::cerr << fmt::format(
        "warning: checkpoint '{}' was produced by config {}, not {}; results may not match "
        "the config's dataset\n",
        path, io::hex64(ck.config_hash), io::hex64(config_hash(c)));
  }
}

int cmd_config() {
  ExperimentConfig c;
  c.attacks.push_back({Norm::Linf, AttackMode::Untargeted, {0.0, 0.25, 0.5, 1.0}, 20, {}, false});
  std::cout << to_json(c).dump(2) << '\n';
  return 0;
}

int cmd_dataset(const Options& o) {
  const auto c = load_config(o.config);
  const auto data = load_dataset(c);
  write_bundle(o.out, data, config_hash(c));
  std::cout << fmt::format("wrote {} ({} train, {} test, dim {}, {} classes)\n", o.out,
                           data.train.size(), data.test.size(), data.train.dim,
                           data.train.num_classes);
  return 0;
}

int cmd_train(const Options& o) {
  const auto c = load_with_overrides(o);
  const auto dir = resolve_output_dir(c);
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  const auto data = load_dataset(c);
  const auto rhos = o.rhos.empty() ? c.rhos : o.rhos;
  for (double rho : rhos) {
    auto run = train_run(c, data, rho);
    const auto sub = dir / rho_dir_name(rho);
    fs::create_directories(sub);
    save_checkpoint(sub / "checkpoint.bin", run.checkpoint);
    std::cout << fmt::format("rho {}: {} steps, train accuracy {:.4f}, test accuracy {:.4f} -> {}\n",
                             rho, run.checkpoint.step,
                             run.log.empty() ? 0.0 : run.log.back().train_accuracy,
                             accuracy(run.checkpoint.model.frozen(), data.test),
                             (sub / "checkpoint.bin").string());
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto c = load_with_overrides(o);
  const auto data = load_dataset(c);
  TrainedRun run{load_checkpoint(o.checkpoint), {}};
  check_hash(c, run.checkpoint, o.checkpoint);
  const unsigned threads = thread_count(c);
  std::optional<Baseline> baseline;
  if (!o.baseline.empty()) {
    if (c.corruptions.kinds.empty()) {
      throw std::invalid_argument("--baseline needs 'corruptions.kinds' in the config");
    }
    auto b = load_checkpoint(o.baseline);
    check_hash(c, b, o.baseline);
    auto be = evaluate_run(c, b.model, data.test, threads);
    baseline = Baseline{model_id(c, b.rho), *be.grid};
  }
  auto eval = evaluate_run(c, run.checkpoint.model, data.test, threads);
  auto report = run_report(c, run, eval, baseline);
  const fs::path out = o.out.empty() ? fs::path(o.checkpoint).parent_path() / "report.json"
                                     : fs::path(o.out);
  write_text(out, report.dump(2) + "\n");
  std::cout << render_run_report(report) << "\nwrote " << out.string() << '\n';
  return 0;
}

int cmd_attack(const Options& o) {
  const auto c = load_config(o.config);
  const auto data = load_dataset(c);
  const auto ck = load_checkpoint(o.checkpoint);
  check_hash(c, ck, o.checkpoint);
  AttackConfig a;
  a.norm = parse_norm(o.norm);
  a.mode = parse_attack_mode(o.mode);
  a.epsilon = o.epsilon;
  a.steps = o.steps;
  a.step_size = o.step_size;
  a.seed = o.seed;
  a.random_start = o.random_start;
  const auto model = ck.model.frozen();
  const auto r = pgd_attack(model, data.test.inputs(), data.test.labels, a, data.test.range);
  std::size_t ok = 0, hits = 0;
  double mean_norm = 0.0;
  for (std::size_t i = 0; i < r.success.size(); ++i) {
    ok += r.clean_pred[i] == data.test.labels[i];
    hits += r.success[i];
    mean_norm += r.norms[i];
  }
  const double n = static_cast<double>(r.success.size());
  std::cout << fmt::format(
      "{} {} eps {} steps {} step size {}\nclean accuracy {:.4f}\nadversarial accuracy {:.4f}\n"
      "attack success rate {:.4f}\nmean perturbation norm {:.4f}\n",
      to_string(a.norm), to_string(a.mode), a.epsilon, a.steps, a.effective_step_size(),
      static_cast<double>(ok) / n, r.accuracy(data.test.labels), static_cast<double>(hits) / n,
      mean_norm / n);
  if (!o.out.empty()) {
    DataBundle adv{data.train, data.test};
    const auto x = r.adversarial.data();
    adv.test.features.assign(x.begin(), x.end());
    write_bundle(o.out, adv, config_hash(c));
    std::cout << "wrote adversarial test split to " << o.out << '\n';
  }
  return 0;
}

int cmd_corrupt(const Options& o) {
  DataBundle data;
  std::uint64_t hash = 0;
  if (!o.data.empty()) {
    data = read_bundle(o.data, &hash);
  } else {
    const auto c = load_config(o.config);
    data = load_dataset(c);
    hash = config_hash(c);
  }
  const SeverityTable table =
      o.severity_table.empty() ? SeverityTable::builtin() : SeverityTable::load(o.severity_table);
  CorruptionSpec spec{parse_corruption(o.kind), o.severity, o.seed};
  data.test = corrupt_dataset(data.test, spec, table);
  write_bundle(o.out, data, hash);
  std::cout << fmt::format("wrote {} with test split corrupted by {} severity {} ({} = {}, table {})\n",
                           o.out, o.kind, o.severity, o.kind,
                           table.parameter(spec.kind, spec.severity), table.version);
  return 0;
}

int cmd_report(const Options& o) {
  const auto r = read_json(o.report);
  if (!r.contains("format_version") || r["format_version"] != kReportFormatVersion) {
    throw std::invalid_argument("'" + o.report + "' is not a report of format version " +
                                std::to_string(kReportFormatVersion));
  }
  const std::string kind = r.at("kind").get<std::string>();
  std::cout << (kind == "sweep" ? render_sweep_report(r) : render_run_report(r));
  const fs::path plots = o.plots.empty() ? fs::path(o.report).parent_path() / "plots"
                                         : fs::path(o.plots);
  for (const auto& p : write_plots(r, plots)) std::cout << "plot data: " << p.string() << '\n';
  return 0;
}

int cmd_probe(const Options& o) {
  Rng rng(o.seed);
  const auto j = random_joint(o.nx, o.ny, o.nz, rng);
  const double izx = mutual_information(j, MiPair::ZX);
  const double izy = mutual_information(j, MiPair::ZY);
  const double res = conditional_mutual_information(j);
  const auto tight = variational_bound_gap(j, j.p_z_given_y(), j.p_z());
  std::cout << fmt::format(
      "random joint |X|={} |Y|={} |Z|={} (seed {})\n"
      "I(Z;X)   = {:.12f} nats\nI(Z;Y)   = {:.12f} nats\nI(Z;X|Y) = {:.12f} nats\n"
      "chain rule residual I(Z;X) - I(Z;Y) - I(Z;X|Y) = {:.3e}\n"
      "true q: ceb bound {:.12f}, vib bound {:.12f}\n",
      o.nx, o.ny, o.nz, o.seed, izx, izy, res, izx - izy - res, tight.ceb_bound,
      tight.vib_bound);
  std::size_t violations = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < o.trials; ++t) {
    auto g = variational_bound_gap(j, random_conditional(o.ny, o.nz, rng),
                                   random_conditional(1, o.nz, rng));
    violations += g.ceb_bound < g.true_residual;
    min_gap = std::min(min_gap, g.ceb_bound - g.true_residual);
  }
  std::cout << fmt::format("{} random q(z|y): min ceb bound - I(Z;X|Y) = {:.6f}, violations {}\n",
                           o.trials, min_gap, violations);
  return violations == 0 ? 0 : 1;
}

int cmd_sweep(const Options& o) {
  auto c = load_with_overrides(o);
  if (!o.rhos.empty()) c.rhos = o.rhos;
  auto out = run_sweep(c, &std::cerr);
  std::cout << render_sweep_report(out.report) << "\noutputs in " << out.dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cebctl: Conditional Entropy Bottleneck experiments"};
  app.require_subcommand(1);
  Options o;

  auto* config = app.add_subcommand("config", "Print a default experiment config as JSON");

  auto* dataset = app.add_subcommand("dataset", "Write the configured dataset to a data file");
  dataset->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  dataset->add_option("--out", o.out, "Output data file")->required();

  auto* train = app.add_subcommand("train", "Train one model per rho");
  train->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--rho", o.rhos, "Train only these rho values (default: config rhos)");
  train->add_option("--out", o.out, "Output directory (default: config output_dir)");

  auto* evaluate = app.add_subcommand("evaluate", "Clean, attack and corruption evaluation of a checkpoint");
  evaluate->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--baseline", o.baseline, "Baseline checkpoint for mCE")->check(CLI::ExistingFile);
  evaluate->add_option("--out", o.out, "Report path (default: report.json next to the checkpoint)");
  evaluate->add_option("--threads", o.threads, "Worker threads (default: config, 0 = all cores)");

  auto* attack = app.add_subcommand("attack", "PGD attack on the test split");
  attack->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  attack->add_option("--checkpoint", o.checkpoint, "Checkpoint to attack")->required()->check(CLI::ExistingFile);
  attack->add_option("--norm", o.norm, "l2 or linf")->capture_default_str();
  attack->add_option("--mode", o.mode, "untargeted or random_target")->capture_default_str();
  attack->add_option("--epsilon", o.epsilon, "Ball radius")->required();
  attack->add_option("--steps", o.steps, "PGD steps")->capture_default_str();
  attack->add_option("--step-size", o.step_size, "Per-step size (default 4 eps / (3 steps))");
  attack->add_option("--seed", o.seed, "Seed for target draws and random start")->capture_default_str();
  attack->add_flag("--random-start", o.random_start, "Start from a uniform point in the ball");
  attack->add_option("--out", o.out, "Write the adversarial test split to this data file");

  auto* corrupt = app.add_subcommand("corrupt", "Write a data file whose test split is corrupted");
  auto* src = corrupt->add_option_group("source");
  src->add_option("--config", o.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  src->add_option("--data", o.data, "Existing data file")->check(CLI::ExistingFile);
  src->require_option(1);
  corrupt->add_option("--kind", o.kind, "Corruption kind, e.g. gaussian_noise")->required();
  corrupt->add_option("--severity", o.severity, "Severity 1-5")->required()->check(CLI::Range(1, 5));
  corrupt->add_option("--seed", o.seed, "Noise seed")->capture_default_str();
  corrupt->add_option("--severity-table", o.severity_table, "Severity table JSON (default: built-in)")->check(CLI::ExistingFile);
  corrupt->add_option("--out", o.out, "Output data file")->required();

  auto* report = app.add_subcommand("report", "Render a run or sweep report and write plot data");
  report->add_option("--report", o.report, "report.json or sweep_report.json")->required()->check(CLI::ExistingFile);
  report->add_option("--plots", o.plots, "Plot directory (default: plots/ next to the report)");

  auto* probe = app.add_subcommand("probe", "Exact information quantities on a random discrete joint");
  probe->add_option("--nx", o.nx, "|X|")->capture_default_str()->check(CLI::Range(1, 64));
  probe->add_option("--ny", o.ny, "|Y|")->capture_default_str()->check(CLI::Range(1, 64));
  probe->add_option("--nz", o.nz, "|Z|")->capture_default_str()->check(CLI::Range(1, 64));
  probe->add_option("--seed", o.seed, "Seed")->capture_default_str();
  probe->add_option("--trials", o.trials, "Random q tables to test the CEB bound with")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate every rho, then select rho*");
  sweep->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--rho", o.rhos, "Override the config rho list");
  sweep->add_option("--out", o.out, "Output directory (default: config output_dir)");
  sweep->add_option("--threads", o.threads, "Parallel runs (default: config, 0 = all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (config->parsed()) return cmd_config();
    if (dataset->parsed()) return cmd_dataset(o);
    if (train->parsed()) return cmd_train(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (attack->parsed()) return cmd_attack(o);
    if (corrupt->parsed()) return cmd_corrupt(o);
    if (report->parsed()) return cmd_report(o);
    if (probe->parsed()) return cmd_probe(o);
    if (sweep->parsed()) return cmd_sweep(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
