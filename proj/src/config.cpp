#include "ceb/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "ceb/binary_io.hpp"
#include "ceb/random.hpp"

namespace ceb {

using nlohmann::json;

std::string to_string(DatasetConfig::Source s) {
  switch (s) {
    case DatasetConfig::Source::Blobs: return "blobs";
    case DatasetConfig::Source::TwoMoons: return "two_moons";
    case DatasetConfig::Source::Patterns: return "patterns";
    case DatasetConfig::Source::File: return "file";
    case DatasetConfig::Source::Csv: return "csv";
  }
  return "?";
}

namespace {

DatasetConfig::Source parse_source(const std::string& s) {
  for (auto src : {DatasetConfig::Source::Blobs, DatasetConfig::Source::TwoMoons,
                   DatasetConfig::Source::Patterns, DatasetConfig::Source::File,
                   DatasetConfig::Source::Csv})
    if (to_string(src) == s) return src;
  throw std::invalid_argument("unknown dataset source '" + s +
                              "' (expected blobs, two_moons, patterns, file or csv)");
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type (" + it->type_name() + ")");
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    get(key, v);
    out = v;
  }

  // Parses a string field through `parse`, turning its errors into
  // ConfigErrors that name the key.
  template <class T, class F>
  void get_enum(const char* key, T& out, F parse) {
    std::string s;
    seen_.insert(key);
    if (j_.find(key) == j_.end()) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  std::optional<Reader> child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Reader(*it, path(key));
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + where(k.c_str()));
  }

  std::string path(const char* key = nullptr) const {
    std::string p = path_.empty() ? "config" : path_;
    if (key) p += std::string(".") + key;
    return p;
  }
  std::string where(const char* key = nullptr) const { return "'" + path(key) + "'"; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json blobs_json(const BlobsParams& p) {
  return {{"num_classes", p.num_classes}, {"base_dims", p.base_dims},
          {"separation", p.separation},   {"sigma", p.sigma},
          {"nuisance_dims", p.nuisance_dims}, {"train_size", p.train_size},
          {"test_size", p.test_size}};
}

json moons_json(const MoonsParams& p) {
  return {{"noise", p.noise},
          {"scale", p.scale},
          {"nuisance_dims", p.nuisance_dims},
          {"train_size", p.train_size},
          {"test_size", p.test_size}};
}

json patterns_json(const PatternsParams& p) {
  return {{"num_classes", p.num_classes}, {"height", p.height},
          {"width", p.width},             {"noise", p.noise},
          {"amplitude", p.amplitude},     {"phase_jitter", p.phase_jitter},
          {"train_size", p.train_size},   {"test_size", p.test_size}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

RhoScheduleConfig ScheduleSettings::for_rho(double target) const {
  if (kind == RhoScheduleConfig::Kind::Constant || target >= start_rho) {
    return RhoScheduleConfig::constant(target);
  }
  RhoScheduleConfig c;
  c.kind = kind;
  c.target_rho = target;
  c.start_rho = start_rho;
  if (kind == RhoScheduleConfig::Kind::JumpStart) c.intermediate_rho = intermediate_rho;
  c.anneal_start_step = anneal_start_step;
  c.anneal_end_step = anneal_end_step;
  c.accuracy_trigger = accuracy_trigger;
  c.accuracy_window = accuracy_window;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (name.empty() || name.find('/') != std::string::npos) {
    fail("'config.name' must be a non-empty name without '/'");
  }
  if ((dataset.source == DatasetConfig::Source::File ||
       dataset.source == DatasetConfig::Source::Csv) &&
      dataset.path.empty()) {
    fail("'config.dataset.path' is required for source " + to_string(dataset.source));
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    fail("'config.dataset.test_fraction' must be in (0, 1)");
  }
  if (latent_dim == 0) fail("'config.latent_dim' must be >= 1");
  for (auto h : hidden)
    if (h == 0) fail("'config.hidden' entries must be >= 1");
  if (rhos.empty()) fail("'config.rhos' must list at least one rho");
  std::set<double> unique(rhos.begin(), rhos.end());
  if (unique.size() != rhos.size()) fail("'config.rhos' contains duplicates");
  for (double r : rhos)
    if (!std::isfinite(r)) fail("'config.rhos' entries must be finite");
  try {
    optimizer.validate();
    for (double r : rhos) schedule.for_rho(r);
  } catch (const std::invalid_argument& e) {
    fail(std::string("invalid config: ") + e.what());
  }
  for (const auto& a : attacks) {
    if (a.epsilons.empty()) fail("'config.attacks[].epsilons' must not be empty");
    for (double e : a.epsilons)
      if (!(e >= 0.0)) fail("'config.attacks[].epsilons' must be >= 0");
    if (a.steps == 0) fail("'config.attacks[].steps' must be >= 1");
    if (a.step_size && !(*a.step_size > 0.0)) fail("'config.attacks[].step_size' must be > 0");
  }
  if (corruptions.baseline_rho && !unique.count(*corruptions.baseline_rho)) {
    fail("'config.corruptions.baseline_rho' must be one of 'config.rhos'");
  }
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  json d;
  d["source"] = to_string(c.dataset.source);
  d["blobs"] = blobs_json(c.dataset.blobs);
  d["two_moons"] = moons_json(c.dataset.moons);
  d["patterns"] = patterns_json(c.dataset.patterns);
  d["path"] = c.dataset.path;
  d["test_fraction"] = c.dataset.test_fraction;
  j["dataset"] = d;
  j["hidden"] = c.hidden;
  j["latent_dim"] = c.latent_dim;
  j["objective"] = to_string(c.objective);
  j["classifier"] = to_string(c.classifier);
  j["rhos"] = c.rhos;
  j["schedule"] = {{"kind", to_string(c.schedule.kind)},
                   {"start_rho", c.schedule.start_rho},
                   {"intermediate_rho", c.schedule.intermediate_rho},
                   {"anneal_start_step", c.schedule.anneal_start_step},
                   {"anneal_end_step", c.schedule.anneal_end_step},
                   {"accuracy_trigger", optional_json(c.schedule.accuracy_trigger)},
                   {"accuracy_window", c.schedule.accuracy_window}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"learning_rate", o.learning_rate}, {"beta1", o.beta1},
                    {"beta2", o.beta2},                 {"epsilon", o.epsilon},
                    {"decay_factor", o.decay_factor},   {"decay_epochs", o.decay_epochs},
                    {"batch_size", o.batch_size},       {"epochs", o.epochs}};
  j["attacks"] = json::array();
  for (const auto& a : c.attacks) {
    j["attacks"].push_back({{"norm", to_string(a.norm)},
                            {"mode", to_string(a.mode)},
                            {"epsilons", a.epsilons},
                            {"steps", a.steps},
                            {"step_size", optional_json(a.step_size)},
                            {"random_start", a.random_start}});
  }
  std::vector<std::string> kinds;
  for (auto k : c.corruptions.kinds) kinds.push_back(to_string(k));
  j["corruptions"] = {{"kinds", kinds},
                      {"severity_table", c.corruptions.severity_table},
                      {"baseline_rho", optional_json(c.corruptions.baseline_rho)}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  r.get("name", c.name);
  if (auto d = r.child("dataset")) {
    d->get_enum("source", c.dataset.source, parse_source);
    if (auto b = d->child("blobs")) {
      auto& p = c.dataset.blobs;
      b->get("num_classes", p.num_classes);
      b->get("base_dims", p.base_dims);
      b->get("separation", p.separation);
      b->get("sigma", p.sigma);
      b->get("nuisance_dims", p.nuisance_dims);
      b->get("train_size", p.train_size);
      b->get("test_size", p.test_size);
      b->finish();
    }
    if (auto m = d->child("two_moons")) {
      auto& p = c.dataset.moons;
      m->get("noise", p.noise);
      m->get("scale", p.scale);
      m->get("nuisance_dims", p.nuisance_dims);
      m->get("train_size", p.train_size);
      m->get("test_size", p.test_size);
      m->finish();
    }
    if (auto pt = d->child("patterns")) {
      auto& p = c.dataset.patterns;
      pt->get("num_classes", p.num_classes);
      pt->get("height", p.height);
      pt->get("width", p.width);
      pt->get("noise", p.noise);
      pt->get("amplitude", p.amplitude);
      pt->get("phase_jitter", p.phase_jitter);
      pt->get("train_size", p.train_size);
      pt->get("test_size", p.test_size);
      pt->finish();
    }
    d->get("path", c.dataset.path);
    d->get("test_fraction", c.dataset.test_fraction);
    d->finish();
  }
  r.get("hidden", c.hidden);
  r.get("latent_dim", c.latent_dim);
  r.get_enum("objective", c.objective, parse_objective);
  r.get_enum("classifier", c.classifier, parse_classifier);
  r.get("rhos", c.rhos);
  if (auto s = r.child("schedule")) {
    s->get_enum("kind", c.schedule.kind, parse_schedule_kind);
    s->get("start_rho", c.schedule.start_rho);
    s->get("intermediate_rho", c.schedule.intermediate_rho);
    s->get("anneal_start_step", c.schedule.anneal_start_step);
    s->get("anneal_end_step", c.schedule.anneal_end_step);
    s->get_optional("accuracy_trigger", c.schedule.accuracy_trigger);
    s->get("accuracy_window", c.schedule.accuracy_window);
    s->finish();
  }
  if (auto o = r.child("optimizer")) {
    auto& p = c.optimizer;
    o->get("learning_rate", p.learning_rate);
    o->get("beta1", p.beta1);
    o->get("beta2", p.beta2);
    o->get("epsilon", p.epsilon);
    o->get("decay_factor", p.decay_factor);
    o->get("decay_epochs", p.decay_epochs);
    o->get("batch_size", p.batch_size);
    o->get("epochs", p.epochs);
    o->finish();
  }
  if (const json* a = r.raw("attacks")) {
    if (!a->is_array()) throw ConfigError("'config.attacks' must be an array");
    for (std::size_t i = 0; i < a->size(); ++i) {
      Reader ar((*a)[i], "config.attacks[" + std::to_string(i) + "]");
      AttackSettings s;
      ar.get_enum("norm", s.norm, parse_norm);
      ar.get_enum("mode", s.mode, parse_attack_mode);
      ar.get("epsilons", s.epsilons);
      ar.get("steps", s.steps);
      ar.get_optional("step_size", s.step_size);
      ar.get("random_start", s.random_start);
      ar.finish();
      c.attacks.push_back(std::move(s));
    }
  }
  if (auto cr = r.child("corruptions")) {
    std::vector<std::string> kinds;
    cr->get("kinds", kinds);
    for (const auto& k : kinds) {
      try {
        c.corruptions.kinds.push_back(parse_corruption(k));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("'config.corruptions.kinds': " + std::string(e.what()));
      }
    }
    cr->get("severity_table", c.corruptions.severity_table);
    cr->get_optional("baseline_rho", c.corruptions.baseline_rho);
    cr->finish();
  }
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.get("threads", c.threads);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  ExperimentConfig c;
  try {
    c = config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const auto base = std::filesystem::absolute(path).parent_path();
  for (std::string* p : {&c.dataset.path, &c.corruptions.severity_table})
    if (!p->empty() && std::filesystem::path(*p).is_relative())
      *p = (base / *p).lexically_normal().string();
  return c;
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << to_json(c).dump(2) << '\n';
}

std::string canonical_json(const ExperimentConfig& c) {
  // Where outputs go and how many threads run them do not change results.
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("threads");
  return j.dump();
}

std::uint64_t config_hash(const ExperimentConfig& c) { return io::fnv1a(canonical_json(c)); }

std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  if (!c.output_dir.empty()) return c.output_dir;
  const char* root = std::getenv(kOutputRootEnv);
  return std::filesystem::path(root && *root ? root : "runs") / c.name;
}

std::uint64_t data_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 1); }
std::uint64_t model_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 2); }
std::uint64_t train_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 3); }
std::uint64_t attack_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 4); }
std::uint64_t corruption_seed(const ExperimentConfig& c) { return derive_seed(c.seed, 5); }

}  // namespace ceb
