#include "ceb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "ceb/binary_io.hpp"

namespace ceb {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCorruptionNote =
    "severity tables are project-local; errors and mCE are not comparable to published "
    "benchmark numbers";

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json attack_json(const AttackCurve& a) {
  json pts = json::array();
  for (const auto& p : a.points) pts.push_back({{"epsilon", p.epsilon}, {"accuracy", p.accuracy}});
  return {{"norm", to_string(a.settings.norm)},
          {"mode", to_string(a.settings.mode)},
          {"steps", a.settings.steps},
          {"step_size", optional_json(a.settings.step_size)},
          {"random_start", a.settings.random_start},
          {"points", pts}};
}

json log_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"end_step", e.end_step},
          {"rho", e.rho},
          {"phase", to_string(e.phase)},
          {"learning_rate", e.learning_rate},
          {"hzx", e.mean_terms.hzx},
          {"hzy", e.mean_terms.hzy},
          {"hyz", e.mean_terms.hyz},
          {"rex", e.mean_terms.rex},
          {"total", e.mean_terms.total},
          {"train_accuracy", e.train_accuracy}};
}

std::string attack_label(const json& a) {
  std::string step = a.at("step_size").is_null()
                         ? std::string("4eps/3n")
                         : fmt::format("{}", a.at("step_size").get<double>());
  return fmt::format("{} {} (steps {}, step size {}{})", a.at("norm").get<std::string>(),
                     a.at("mode").get<std::string>(), a.at("steps").get<std::size_t>(), step,
                     a.at("random_start").get<bool>() ? ", random start" : "");
}

std::string attack_file(std::size_t i, const json& a) {
  return fmt::format("attack_{}_{}_{}.tsv", i, a.at("norm").get<std::string>(),
                     a.at("mode").get<std::string>());
}

std::string num_or_dash(const json& v, const char* fmtstr = "{:.4f}") {
  return v.is_null() ? std::string("-") : fmt::format(fmt::runtime(fmtstr), v.get<double>());
}

}  // namespace

DataBundle load_dataset(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  switch (d.source) {
    case DatasetConfig::Source::Blobs: return make_blobs(d.blobs, data_seed(c));
    case DatasetConfig::Source::TwoMoons: return make_two_moons(d.moons, data_seed(c));
    case DatasetConfig::Source::Patterns: return make_patterns(d.patterns, data_seed(c));
    case DatasetConfig::Source::File: return read_bundle(d.path);
    case DatasetConfig::Source::Csv: return import_csv(d.path, d.test_fraction, data_seed(c));
  }
  throw std::logic_error("unreachable dataset source");
}

EncoderSpec encoder_spec(const ExperimentConfig& c, const Dataset& train) {
  EncoderSpec s;
  s.input_dim = train.dim;
  s.image = train.image;
  s.hidden = c.hidden;
  s.latent_dim = c.latent_dim;
  s.validate();
  return s;
}

TrainedRun train_run(const ExperimentConfig& c, const DataBundle& data, double rho) {
  CebModel model(encoder_spec(c, data.train), data.train.num_classes, c.classifier,
                 model_seed(c));
  RhoSchedule schedule(c.schedule.for_rho(rho));
  TrainConfig tc{c.objective, c.optimizer, train_seed(c)};
  TrainResult r = train(std::move(model), data.train, std::move(schedule), tc);

  TrainedRun run;
  run.checkpoint.model = std::move(r.model);
  run.checkpoint.objective = c.objective;
  run.checkpoint.rho = rho;
  run.checkpoint.schedule = r.schedule.config();
  run.checkpoint.schedule_state = r.schedule.state();
  run.checkpoint.seed = c.seed;
  run.checkpoint.step = r.steps;
  run.checkpoint.config_hash = config_hash(c);
  run.log = std::move(r.log);
  return run;
}

const SeverityTable& configured_severity_table(const ExperimentConfig& c) {
  if (c.corruptions.severity_table.empty()) return SeverityTable::builtin();
  // Loaded once per path; configs in one process rarely differ here.
  static std::mutex mu;
  static std::map<std::string, SeverityTable> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(c.corruptions.severity_table);
  if (it == cache.end()) {
    it = cache.emplace(c.corruptions.severity_table,
                       SeverityTable::load(c.corruptions.severity_table))
             .first;
  }
  return it->second;
}

Evaluation evaluate_run(const ExperimentConfig& c, const CebModel& model, const Dataset& test,
                        unsigned threads) {
  const CebModel frozen = model.frozen();
  Evaluation e;
  e.clean_accuracy = accuracy(frozen, test);
  for (const auto& a : c.attacks) {
    AttackConfig base;
    base.norm = a.norm;
    base.mode = a.mode;
    base.steps = a.steps;
    base.step_size = a.step_size;
    base.random_start = a.random_start;
    base.seed = attack_seed(c);
    base.epsilon = 1.0;  // replaced per point
    e.attacks.push_back({a, attack_sweep(frozen, test, base, a.epsilons)});
  }
  if (!c.corruptions.kinds.empty()) {
    if (!test.image) {
      throw std::invalid_argument(
          "corruptions are configured but the dataset has no image shape; use the patterns "
          "source or clear 'corruptions.kinds'");
    }
    const auto& table = configured_severity_table(c);
    e.severity_table = table.version;
    e.grid = evaluate_grid(frozen, test, c.corruptions.kinds, corruption_seed(c), table, threads);
  }
  return e;
}

std::string rho_dir_name(double rho) { return fmt::format("rho_{}", rho); }

std::string model_id(const ExperimentConfig& c, double rho) {
  return c.name + "/" + rho_dir_name(rho);
}

json run_report(const ExperimentConfig& c, const TrainedRun& run, const Evaluation& eval,
                const std::optional<Baseline>& baseline) {
  const auto& ck = run.checkpoint;
  json j;
  j["format_version"] = kReportFormatVersion;
  j["kind"] = "run";
  j["config_hash"] = io::hex64(config_hash(c));
  j["name"] = c.name;
  j["model_id"] = model_id(c, ck.rho);
  j["objective"] = to_string(ck.objective);
  j["classifier"] = to_string(ck.model.classifier_kind);
  j["rho"] = ck.rho;
  j["seed"] = ck.seed;
  j["steps"] = ck.step;
  j["schedule"] = {{"kind", to_string(ck.schedule.kind)},
                   {"trigger_step", ck.schedule_state.trigger_step
                                        ? json(*ck.schedule_state.trigger_step)
                                        : json(nullptr)}};
  j["clean_accuracy"] = eval.clean_accuracy;
  j["clean_error"] = 1.0 - eval.clean_accuracy;
  j["final_train_accuracy"] = run.log.empty() ? json(nullptr) : json(run.log.back().train_accuracy);
  j["attacks"] = json::array();
  for (const auto& a : eval.attacks) j["attacks"].push_back(attack_json(a));
  j["corruptions"] = nullptr;
  if (eval.grid) {
    auto r = make_robustness_report(j["model_id"], ck.seed, eval.severity_table,
                                    1.0 - eval.clean_accuracy, *eval.grid, baseline);
    std::vector<std::string> kinds;
    for (auto k : r.grid.kinds) kinds.push_back(to_string(k));
    j["corruptions"] = {{"severity_table", r.severity_table},
                        {"comparable_to_published", false},
                        {"note", kCorruptionNote},
                        {"kinds", kinds},
                        {"errors", r.grid.errors},
                        {"per_corruption", r.per_corruption},
                        {"average", r.average},
                        {"mce", optional_json(r.mce)},
                        {"baseline_id", r.baseline_id},
                        {"warnings", r.warnings}};
  }
  j["training_log"] = json::array();
  for (const auto& e : run.log) j["training_log"].push_back(log_json(e));
  return j;
}

double select_rho(const std::vector<std::pair<double, double>>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("select_rho: no candidates");
  auto best = candidates.front();
  for (const auto& c : candidates) {
    if (c.second > best.second || (c.second == best.second && c.first < best.first)) best = c;
  }
  return best.first;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("error while writing '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

SweepOutcome run_sweep(const ExperimentConfig& c, std::ostream* progress) {
  c.validate();
  SweepOutcome out;
  out.dir = resolve_output_dir(c);
  fs::create_directories(out.dir);
  write_text(out.dir / "config.json", to_json(c).dump(2) + "\n");

  const DataBundle data = load_dataset(c);
  struct Slot {
    std::optional<TrainedRun> run;
    std::optional<Evaluation> eval;
    std::string error;
  };
  std::vector<Slot> slots(c.rhos.size());
  std::mutex log_mu;
  auto say = [&](const std::string& m) {
    if (!progress) return;
    std::lock_guard<std::mutex> lock(log_mu);
    *progress << m << '\n' << std::flush;
  };

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < slots.size(); i = next++) {
      const double rho = c.rhos[i];
      try {
        auto run = train_run(c, data, rho);
        fs::create_directories(out.dir / rho_dir_name(rho));
        save_checkpoint(out.dir / rho_dir_name(rho) / "checkpoint.bin", run.checkpoint);
        slots[i].eval = evaluate_run(c, run.checkpoint.model, data.test, 1);
        say(fmt::format("rho {}: clean accuracy {:.4f}", rho, slots[i].eval->clean_accuracy));
        slots[i].run = std::move(run);
      } catch (const TrainingDiverged& e) {
        slots[i].error = fmt::format("training diverged at step {}: {}", e.step(), e.what());
        say(fmt::format("rho {}: {}", rho, slots[i].error));
      }
    }
  };
  unsigned threads = c.threads ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(slots.size()));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex fail_mu;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        try {
          work();
        } catch (...) {
          std::lock_guard<std::mutex> lock(fail_mu);
          if (!failure) failure = std::current_exception();
          next = slots.size();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::optional<Baseline> baseline;
  if (!c.corruptions.kinds.empty()) {
    const double brho = c.corruptions.baseline_rho
                            ? *c.corruptions.baseline_rho
                            : *std::max_element(c.rhos.begin(), c.rhos.end());
    const auto idx = static_cast<std::size_t>(
        std::find(c.rhos.begin(), c.rhos.end(), brho) - c.rhos.begin());
    if (slots[idx].eval) baseline = Baseline{model_id(c, brho), *slots[idx].eval->grid};
  }

  json sweep;
  sweep["format_version"] = kReportFormatVersion;
  sweep["kind"] = "sweep";
  sweep["name"] = c.name;
  sweep["config_hash"] = io::hex64(config_hash(c));
  sweep["objective"] = to_string(c.objective);
  sweep["classifier"] = to_string(c.classifier);
  sweep["baseline_id"] = baseline ? baseline->id : std::string();
  sweep["runs"] = json::array();
  std::vector<std::pair<double, double>> candidates;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double rho = c.rhos[i];
    json r = {{"rho", rho}, {"model_id", model_id(c, rho)}};
    if (!slots[i].run) {
      r["status"] = "diverged";
      r["error"] = slots[i].error;
      sweep["runs"].push_back(r);
      continue;
    }
    json report = run_report(c, *slots[i].run, *slots[i].eval, baseline);
    const fs::path rel = rho_dir_name(rho);
    write_text(out.dir / rel / "report.json", report.dump(2) + "\n");
    r["status"] = "ok";
    r["checkpoint"] = (rel / "checkpoint.bin").generic_string();
    r["report"] = (rel / "report.json").generic_string();
    r["clean_accuracy"] = report["clean_accuracy"];
    r["clean_error"] = report["clean_error"];
    r["attacks"] = report["attacks"];
    r["corruption_average"] =
        report["corruptions"].is_null() ? json(nullptr) : report["corruptions"]["average"];
    r["mce"] = report["corruptions"].is_null() ? json(nullptr) : report["corruptions"]["mce"];
    sweep["runs"].push_back(r);
    candidates.emplace_back(rho, slots[i].eval->clean_accuracy);
  }
  if (!candidates.empty()) out.rho_star = select_rho(candidates);
  sweep["selection"] = {{"rule", "best clean test accuracy, ties to the lower rho"},
                        {"rho_star", optional_json(out.rho_star)}};
  sweep["corruption_note"] = c.corruptions.kinds.empty() ? json(nullptr) : json(kCorruptionNote);

  write_text(out.dir / "sweep_report.json", sweep.dump(2) + "\n");
  write_text(out.dir / "sweep_report.txt", render_sweep_report(sweep));
  write_plots(sweep, out.dir / "plots");
  out.report = std::move(sweep);
  return out;
}

std::string render_run_report(const json& r) {
  std::string s;
  s += fmt::format("run {}  (config {}, report format v{})\n", r.at("model_id").get<std::string>(),
                   r.at("config_hash").get<std::string>(), r.at("format_version").get<int>());
  s += fmt::format("objective {}  classifier {}  rho {}  seed {}  steps {}\n",
                   r.at("objective").get<std::string>(), r.at("classifier").get<std::string>(),
                   r.at("rho").get<double>(), r.at("seed").get<std::uint64_t>(),
                   r.at("steps").get<std::size_t>());
  s += fmt::format("clean error {:.4f}\n", r.at("clean_error").get<double>());
  for (const auto& a : r.at("attacks")) {
    s += fmt::format("\nattack {}\n  {:>10}  {:>8}\n", attack_label(a), "epsilon", "accuracy");
    for (const auto& p : a.at("points")) {
      s += fmt::format("  {:>10.4f}  {:>8.4f}\n", p.at("epsilon").get<double>(),
                       p.at("accuracy").get<double>());
    }
  }
  const json& cr = r.at("corruptions");
  if (!cr.is_null()) {
    s += fmt::format("\ncorruption error (table {}; {})\n",
                     cr.at("severity_table").get<std::string>(), kCorruptionNote);
    s += fmt::format("  {:<15}", "kind");
    for (int sev = 1; sev <= kNumSeverities; ++sev) s += fmt::format(" {:>7}", fmt::format("s{}", sev));
    s += fmt::format(" {:>7}\n", "E_c");
    for (std::size_t i = 0; i < cr.at("kinds").size(); ++i) {
      s += fmt::format("  {:<15}", cr["kinds"][i].get<std::string>());
      for (const auto& e : cr["errors"][i]) s += fmt::format(" {:>7.4f}", e.get<double>());
      s += fmt::format(" {:>7.4f}\n", cr["per_corruption"][i].get<double>());
    }
    s += fmt::format("  average {:.4f}", cr.at("average").get<double>());
    if (!cr.at("mce").is_null()) {
      s += fmt::format("  mCE {:.2f} (baseline {})", cr["mce"].get<double>(),
                       cr.at("baseline_id").get<std::string>());
    }
    s += "\n";
    for (const auto& w : cr.at("warnings")) s += "  warning: " + w.get<std::string>() + "\n";
  }
  return s;
}

std::string render_sweep_report(const json& r) {
  std::string s;
  s += fmt::format("sweep {}  (config {}, report format v{})\n", r.at("name").get<std::string>(),
                   r.at("config_hash").get<std::string>(), r.at("format_version").get<int>());
  s += fmt::format("objective {}  classifier {}\n", r.at("objective").get<std::string>(),
                   r.at("classifier").get<std::string>());
  s += fmt::format("\n  {:>8}  {:>11}  {:>10}  {:>8}\n", "rho", "clean error", "corr. avg", "mCE");
  for (const auto& run : r.at("runs")) {
    if (run.at("status") != "ok") {
      s += fmt::format("  {:>8}  {}\n", run.at("rho").get<double>(), run.at("error").get<std::string>());
      continue;
    }
    s += fmt::format("  {:>8}  {:>11.4f}  {:>10}  {:>8}\n", run.at("rho").get<double>(),
                     run.at("clean_error").get<double>(), num_or_dash(run.at("corruption_average")),
                     num_or_dash(run.at("mce"), "{:.2f}"));
  }
  // Attack tables: one column per rho, one row per epsilon.
  const json* first = nullptr;
  for (const auto& run : r.at("runs"))
    if (run.at("status") == "ok") {
      first = &run;
      break;
    }
  if (first) {
    for (std::size_t a = 0; a < first->at("attacks").size(); ++a) {
      s += fmt::format("\nattack {} accuracy\n  {:>10}", attack_label(first->at("attacks")[a]),
                       "epsilon");
      for (const auto& run : r.at("runs"))
        if (run.at("status") == "ok") s += fmt::format("  {:>8}", fmt::format("rho={}", run["rho"].get<double>()));
      s += "\n";
      const auto& pts = first->at("attacks")[a].at("points");
      for (std::size_t p = 0; p < pts.size(); ++p) {
        s += fmt::format("  {:>10.4f}", pts[p].at("epsilon").get<double>());
        for (const auto& run : r.at("runs"))
          if (run.at("status") == "ok") {
            s += fmt::format("  {:>8.4f}", run["attacks"][a]["points"][p]["accuracy"].get<double>());
          }
        s += "\n";
      }
    }
  }
  const json& rs = r.at("selection").at("rho_star");
  s += fmt::format("\nselected rho* = {} ({})\n", rs.is_null() ? std::string("none") : fmt::format("{}", rs.get<double>()),
                   r.at("selection").at("rule").get<std::string>());
  if (!r.at("baseline_id").get<std::string>().empty()) {
    s += fmt::format("mCE baseline: {}\n", r["baseline_id"].get<std::string>());
  }
  if (!r.at("corruption_note").is_null()) {
    s += "note: " + r["corruption_note"].get<std::string>() + "\n";
  }
  return s;
}

std::vector<fs::path> write_plots(const json& r, const fs::path& dir) {
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    written.push_back(dir / name);
  };
  const std::string kind = r.at("kind").get<std::string>();
  if (kind == "run") {
    for (std::size_t i = 0; i < r.at("attacks").size(); ++i) {
      const auto& a = r["attacks"][i];
      std::string t = fmt::format("# {} attack {}\nepsilon\taccuracy\n",
                                  r.at("model_id").get<std::string>(), attack_label(a));
      for (const auto& p : a.at("points")) {
        t += fmt::format("{}\t{}\n", p.at("epsilon").get<double>(), p.at("accuracy").get<double>());
      }
      emit(attack_file(i, a), t);
    }
    const json& cr = r.at("corruptions");
    if (!cr.is_null()) {
      std::string t = fmt::format("# {} corruption error by severity\nseverity",
                                  r.at("model_id").get<std::string>());
      for (const auto& k : cr.at("kinds")) t += "\t" + k.get<std::string>();
      t += "\n";
      for (int sev = 0; sev < kNumSeverities; ++sev) {
        t += fmt::format("{}", sev + 1);
        for (const auto& row : cr.at("errors")) t += fmt::format("\t{}", row[sev].get<double>());
        t += "\n";
      }
      emit("corruption_errors.tsv", t);
    }
    return written;
  }
  if (kind != "sweep") throw std::invalid_argument("unknown report kind '" + kind + "'");

  std::vector<const json*> ok;
  for (const auto& run : r.at("runs"))
    if (run.at("status") == "ok") ok.push_back(&run);
  if (ok.empty()) return written;
  for (std::size_t a = 0; a < ok.front()->at("attacks").size(); ++a) {
    const auto& first = ok.front()->at("attacks")[a];
    std::string t = fmt::format("# {} attack {}: accuracy vs epsilon per rho\nepsilon",
                                r.at("name").get<std::string>(), attack_label(first));
    for (const json* run : ok) t += fmt::format("\trho={}", run->at("rho").get<double>());
    t += "\n";
    for (std::size_t p = 0; p < first.at("points").size(); ++p) {
      t += fmt::format("{}", first["points"][p].at("epsilon").get<double>());
      for (const json* run : ok) {
        t += fmt::format("\t{}", run->at("attacks")[a]["points"][p]["accuracy"].get<double>());
      }
      t += "\n";
    }
    emit(attack_file(a, first), t);
  }
  std::string t = fmt::format("# {} error vs rho\nrho\tclean_error\tcorruption_average\tmce\n",
                              r.at("name").get<std::string>());
  for (const json* run : ok) {
    auto cell = [](const json& v) { return v.is_null() ? std::string("nan") : fmt::format("{}", v.get<double>()); };
    t += fmt::format("{}\t{}\t{}\t{}\n", run->at("rho").get<double>(),
                     run->at("clean_error").get<double>(), cell(run->at("corruption_average")),
                     cell(run->at("mce")));
  }
  emit("rho_vs_error.tsv", t);
  return written;
}

}  // namespace ceb
