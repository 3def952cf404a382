#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "ceb/binary_io.hpp"
#include "ceb/checkpoint.hpp"
#include "ceb/config.hpp"
#include "ceb/experiment.hpp"

using namespace ceb;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("ceb_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.name = "small";
  c.dataset.blobs.train_size = 200;
  c.dataset.blobs.test_size = 200;
  c.hidden = {8};
  c.latent_dim = 2;
  c.optimizer.epochs = 3;
  c.optimizer.batch_size = 50;
  c.rhos = {2.0};
  c.schedule.kind = RhoScheduleConfig::Kind::Constant;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = small_config();
  c.objective = Objective::Vib;
  c.classifier = ClassifierKind::Consistent;
  c.dataset.source = DatasetConfig::Source::Patterns;
  c.dataset.patterns.amplitude = 0.1;
  c.rhos = {0.0, 1.5, 100.0};
  c.attacks.push_back({Norm::L2, AttackMode::RandomTarget, {0.0, 0.5}, 7, 0.1, true});
  c.corruptions.kinds = {CorruptionKind::Contrast, CorruptionKind::Pixelate};
  c.corruptions.baseline_rho = 100.0;
  c.optimizer.decay_epochs = {2};
  auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  TempDir dir("cfg");
  save_config(dir.path() / "c.json", c);
  EXPECT_EQ(to_json(load_config(dir.path() / "c.json")), to_json(c));
}

TEST(Config, UnknownKeyIsNamed) {
  auto j = to_json(small_config());
  j["dataset"]["blobz"] = 1;
  try {
    config_from_json(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dataset.blobz"), std::string::npos) << e.what();
  }
  auto t = to_json(small_config());
  t["latent_dim"] = "four";
  EXPECT_THROW(config_from_json(t), ConfigError);
  auto v = to_json(small_config());
  v["rhos"] = nlohmann::json::array();
  EXPECT_THROW(config_from_json(v), ConfigError);
}

TEST(Config, HashIgnoresOutputLocationAndThreads) {
  auto a = small_config();
  auto b = a;
  b.output_dir = "/elsewhere";
  b.threads = 7;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 6;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, SeedStreamsAreDistinct) {
  auto c = small_config();
  std::vector<std::uint64_t> s = {data_seed(c), model_seed(c), train_seed(c), attack_seed(c),
                                  corruption_seed(c)};
  std::sort(s.begin(), s.end());
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
}

TEST(Dataset, BundleRoundTripIsExact) {
  PatternsParams p;
  p.train_size = 10;
  p.test_size = 5;
  auto b = make_patterns(p, 4);
  TempDir dir("data");
  write_bundle(dir.path() / "d.bin", b, 0xabcdef);
  std::uint64_t h = 0;
  auto r = read_bundle(dir.path() / "d.bin", &h);
  EXPECT_EQ(h, 0xabcdefu);
  EXPECT_EQ(r.train.features, b.train.features);
  EXPECT_EQ(r.test.labels, b.test.labels);
  EXPECT_EQ(r.train.image, b.train.image);
  EXPECT_EQ(r.train.range, b.train.range);
  write_bundle(dir.path() / "e.bin", make_patterns(p, 4), 0xabcdef);
  EXPECT_EQ(slurp(dir.path() / "d.bin"), slurp(dir.path() / "e.bin"));
}

TEST(Dataset, NuisanceDimensionsExtendInputs) {
  BlobsParams p;
  p.nuisance_dims = 30;
  p.train_size = 20;
  auto b = make_blobs(p, 1);
  EXPECT_EQ(b.train.dim, 32u);
  EXPECT_EQ(b.train.features.size(), 20u * 32u);
}

TEST(Dataset, CsvImport) {
  TempDir dir("csv");
  {
    std::ofstream os(dir.path() / "d.csv");
    os << "label,a,b\n";
    for (int i = 0; i < 10; ++i) os << i % 2 << "," << i << "," << -i << "\n";
  }
  auto b = import_csv(dir.path() / "d.csv", 0.3, 2);
  EXPECT_EQ(b.train.size(), 7u);
  EXPECT_EQ(b.test.size(), 3u);
  EXPECT_EQ(b.train.dim, 2u);
  EXPECT_EQ(b.train.num_classes, 2u);
  {
    std::ofstream os(dir.path() / "bad.csv");
    os << "0,1,2\n1,1\n";
  }
  EXPECT_THROW(import_csv(dir.path() / "bad.csv", 0.3, 2), std::exception);
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
  auto c = small_config();
  c.classifier = ClassifierKind::Consistent;
  auto data = load_dataset(c);
  auto run = train_run(c, data, 2.0);
  TempDir dir("ckpt");
  save_checkpoint(dir.path() / "a.bin", run.checkpoint);
  auto back = load_checkpoint(dir.path() / "a.bin");
  EXPECT_EQ(back.rho, 2.0);
  EXPECT_EQ(back.config_hash, config_hash(c));
  EXPECT_EQ(back.model.class_prior, run.checkpoint.model.class_prior);
  auto x = data.test.inputs();
  auto la = run.checkpoint.model.logits(x), lb = back.model.logits(x);
  for (std::size_t i = 0; i < la.numel(); ++i) ASSERT_EQ(la[i], lb[i]);
  save_checkpoint(dir.path() / "b.bin", back);
  EXPECT_EQ(slurp(dir.path() / "a.bin"), slurp(dir.path() / "b.bin"));
  // Retraining from the same config gives the same bytes.
  save_checkpoint(dir.path() / "c.bin", train_run(c, data, 2.0).checkpoint);
  EXPECT_EQ(slurp(dir.path() / "a.bin"), slurp(dir.path() / "c.bin"));
}

TEST(Checkpoint, RejectsForeignAndFutureFiles) {
  auto c = small_config();
  auto run = train_run(c, load_dataset(c), 2.0);
  TempDir dir("bad");
  auto path = dir.path() / "x.bin";
  save_checkpoint(path, run.checkpoint);
  auto bytes = slurp(path);

  auto write = [&](const std::string& b) {
    std::ofstream(path, std::ios::binary) << b;
  };
  auto message = [&] {
    try {
      load_checkpoint(path);
    } catch (const io::FormatError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  auto bad = bytes;
  bad[0] = 'X';
  write(bad);
  EXPECT_NE(message().find("bad magic"), std::string::npos) << message();

  auto future = bytes;
  future[8] = 2;
  write(future);
  auto m = message();
  EXPECT_NE(m.find("version 2"), std::string::npos) << m;
  EXPECT_NE(m.find("x.bin"), std::string::npos) << m;

  write(bytes.substr(0, bytes.size() - 5));
  EXPECT_NE(message().find("truncated"), std::string::npos) << message();
}

TEST(Sweep, SelectRhoPrefersAccuracyThenLowerRho) {
  EXPECT_EQ(select_rho({{1.0, 0.8}, {2.0, 0.9}, {3.0, 0.85}}), 2.0);
  EXPECT_EQ(select_rho({{5.0, 0.9}, {2.0, 0.9}, {3.0, 0.9}}), 2.0);
  EXPECT_THROW(select_rho({}), std::invalid_argument);
}

TEST(Sweep, WritesOneCheckpointPerRhoAndAReport) {
  auto c = small_config();
  c.rhos = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  c.attacks.push_back({Norm::Linf, AttackMode::Untargeted, {0.0, 0.5}, 3, std::nullopt, false});
  TempDir dir("sweep");
  c.output_dir = (dir.path() / "out").string();
  c.threads = 2;
  auto out = run_sweep(c);
  ASSERT_TRUE(out.rho_star);
  for (double r : c.rhos) {
    EXPECT_TRUE(fs::exists(out.dir / rho_dir_name(r) / "checkpoint.bin")) << r;
    auto rep = read_json(out.dir / rho_dir_name(r) / "report.json");
    EXPECT_EQ(rep.at("rho").get<double>(), r);
    EXPECT_EQ(rep.at("attacks").at(0).at("points").size(), 2u);
  }
  auto sweep = read_json(out.dir / "sweep_report.json");
  EXPECT_EQ(sweep.at("runs").size(), 10u);
  EXPECT_EQ(sweep.at("selection").at("rho_star").get<double>(), *out.rho_star);
  auto text = slurp(out.dir / "sweep_report.txt");
  EXPECT_NE(text.find("selected rho*"), std::string::npos);
  EXPECT_EQ(text, render_sweep_report(sweep));
  EXPECT_TRUE(fs::exists(out.dir / "plots" / "rho_vs_error.tsv"));
  EXPECT_EQ(load_config(out.dir / "config.json").rhos, c.rhos);
}

TEST(Report, RunReportRendersTables) {
  auto c = small_config();
  c.dataset.source = DatasetConfig::Source::Patterns;
  c.dataset.patterns.train_size = 40;
  c.dataset.patterns.test_size = 20;
  c.optimizer.epochs = 1;
  c.corruptions.kinds = {CorruptionKind::Brightness, CorruptionKind::GaussianNoise};
  c.attacks.push_back({Norm::L2, AttackMode::Untargeted, {0.0, 1.0}, 2, std::nullopt, false});
  auto data = load_dataset(c);
  auto run = train_run(c, data, 2.0);
  auto eval = evaluate_run(c, run.checkpoint.model.frozen(), data.test);
  ASSERT_TRUE(eval.grid);
  auto rep = run_report(c, run, eval, Baseline{"self", *eval.grid});
  EXPECT_EQ(rep.at("kind"), "run");
  EXPECT_FALSE(rep.at("corruptions").at("comparable_to_published").get<bool>());
  EXPECT_NEAR(rep.at("corruptions").at("mce").get<double>(), 100.0, 1e-9);
  auto text = render_run_report(rep);
  for (const char* needle : {"brightness", "gaussian_noise", "epsilon", "mCE"})
    EXPECT_NE(text.find(needle), std::string::npos) << needle << "\n" << text;
  TempDir dir("plots");
  auto files = write_plots(rep, dir.path());
  EXPECT_EQ(files.size(), 2u);
}

TEST(Report, CorruptionsNeedImages) {
  auto c = small_config();
  c.corruptions.kinds = {CorruptionKind::Brightness};
  auto data = load_dataset(c);
  auto run = train_run(c, data, 2.0);
  EXPECT_THROW(evaluate_run(c, run.checkpoint.model.frozen(), data.test), std::invalid_argument);
}

TEST(EndToEnd, SeparatedBlobsAreLearnedByLinearEncoder) {
  auto c = small_config();
  c.hidden = {};
  c.dataset.blobs.separation = 6.0;
  c.dataset.blobs.test_size = 1000;
  c.optimizer.epochs = 30;
  c.optimizer.learning_rate = 1e-2;
  auto data = load_dataset(c);
  auto run = train_run(c, data, 2.0);
  EXPECT_GE(accuracy(run.checkpoint.model, data.test), 0.99);
}
