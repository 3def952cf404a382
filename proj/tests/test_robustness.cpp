#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>

#include "ceb/random.hpp"
#include "ceb/robustness.hpp"

using namespace ceb;

namespace {

ErrorGrid grid_of(std::vector<CorruptionKind> kinds, double base) {
  ErrorGrid g;
  g.kinds = std::move(kinds);
  for (std::size_t i = 0; i < g.kinds.size(); ++i)
    g.errors.push_back({base, base + 0.01 * i, base + 0.02, base + 0.03 * i, base + 0.04});
  return g;
}

// Predictions are a hash of the input bits, so they carry no information
// about the label.
class HashModel : public LogitModel {
 public:
  explicit HashModel(std::size_t k) : k_(k) {}
  Tensor logits(const Tensor& x) const override {
    const std::size_t b = x.dim(0), d = x.dim(1);
    std::vector<double> out(b * k_, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      std::uint64_t h = 1469598103934665603ULL;
      for (std::size_t j = 0; j < d; ++j) {
        h ^= std::bit_cast<std::uint64_t>(x.at(i, j));
        h *= 1099511628211ULL;
      }
      out[i * k_ + derive_seed(h, 0) % k_] = 1.0;
    }
    return Tensor::from({b, k_}, out);
  }
  std::size_t num_classes() const override { return k_; }

 private:
  std::size_t k_;
};

class ConstantModel : public LogitModel {
 public:
  Tensor logits(const Tensor& x) const override {
    std::vector<double> v;
    for (std::size_t i = 0; i < x.dim(0); ++i) v.insert(v.end(), {1.0, 0.0});
    return Tensor::from({x.dim(0), 2}, v);
  }
  std::size_t num_classes() const override { return 2; }
};

Dataset patterns_test(std::size_t n) {
  PatternsParams p;
  p.train_size = 4;
  p.test_size = n;
  return make_patterns(p, 3).test;
}

}  // namespace

TEST(Mce, SelfBaselineIsHundred) {
  auto g = grid_of(all_corruptions(), 0.2);
  auto r = mce(g, g);
  EXPECT_NEAR(r.value, 100.0, 1e-12);
  EXPECT_EQ(r.included.size(), 8u);
  EXPECT_TRUE(r.warnings.empty());
}

TEST(Mce, HalfTheErrorsGiveFifty) {
  auto b = grid_of(all_corruptions(), 0.4);
  auto g = b;
  for (auto& row : g.errors)
    for (auto& e : row) e *= 0.5;
  EXPECT_NEAR(mce(g, b).value, 50.0, 1e-12);
}

TEST(Mce, IndependentOfKindOrder) {
  auto g = grid_of(all_corruptions(), 0.3);
  auto b = grid_of(all_corruptions(), 0.35);
  b.errors[2][4] = 0.9;
  auto gr = g, br = b;
  std::reverse(gr.kinds.begin(), gr.kinds.end());
  std::reverse(gr.errors.begin(), gr.errors.end());
  std::rotate(br.kinds.begin(), br.kinds.begin() + 3, br.kinds.end());
  std::rotate(br.errors.begin(), br.errors.begin() + 3, br.errors.end());
  EXPECT_EQ(mce(g, b).value, mce(gr, br).value);
}

TEST(Mce, ZeroDenominatorIsExcludedWithWarning) {
  auto g = grid_of({CorruptionKind::Brightness, CorruptionKind::Contrast}, 0.2);
  auto b = g;
  b.errors[0].fill(0.0);
  auto r = mce(g, b);
  ASSERT_EQ(r.included, (std::vector<CorruptionKind>{CorruptionKind::Contrast}));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("brightness"), std::string::npos) << r.warnings[0];
  EXPECT_NEAR(r.value, 100.0, 1e-12);
  b.errors[1].fill(0.0);
  EXPECT_THROW(mce(g, b), std::invalid_argument);
}

TEST(Mce, MismatchedSetsThrow) {
  auto g = grid_of({CorruptionKind::Brightness, CorruptionKind::Contrast}, 0.2);
  auto b = grid_of({CorruptionKind::Brightness, CorruptionKind::Pixelate}, 0.2);
  EXPECT_THROW(mce(g, b), std::invalid_argument);
}

TEST(ErrorGrid, AveragesAreConsistent) {
  auto g = grid_of(all_corruptions(), 0.1);
  auto ec = per_corruption(g);
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (double e : g.errors[i]) s += e;
    EXPECT_NEAR(ec[i], s / 5.0, 1e-12);
    total += s;
  }
  EXPECT_NEAR(average_error(g), total / 40.0, 1e-12);
  auto one = grid_of({CorruptionKind::Contrast}, 0.1);
  EXPECT_THROW(one.row(CorruptionKind::Brightness), std::out_of_range);
  auto dup = g;
  dup.kinds[1] = dup.kinds[0];
  EXPECT_THROW(dup.validate(), std::invalid_argument);
}

TEST(EvaluateGrid, RandomClassifierMatchesChance) {
  auto test = patterns_test(400);
  HashModel m(4);
  auto g = evaluate_grid(m, test, all_corruptions(), 5);
  g.validate();
  const double n = 5.0 * static_cast<double>(test.size());
  const double sd = std::sqrt(0.75 * 0.25 / n);
  auto ec = per_corruption(g);
  for (std::size_t i = 0; i < ec.size(); ++i)
    EXPECT_LT(std::abs(ec[i] - 0.75), 3.0 * sd) << to_string(g.kinds[i]) << " " << ec[i];
}

TEST(EvaluateGrid, PerfectModelHasZeroError) {
  auto test = patterns_test(20);
  test.num_classes = 2;
  std::fill(test.labels.begin(), test.labels.end(), 0);
  ConstantModel m;
  auto g = evaluate_grid(m, test, all_corruptions(), 1);
  EXPECT_EQ(average_error(g), 0.0);
  EXPECT_EQ(error_rate(m, test), 0.0);
}

TEST(EvaluateGrid, ThreadCountDoesNotChangeResults) {
  auto test = patterns_test(30);
  HashModel m(4);
  auto a = evaluate_grid(m, test, all_corruptions(), 9, SeverityTable::builtin(), 1);
  auto b = evaluate_grid(m, test, all_corruptions(), 9, SeverityTable::builtin(), 4);
  EXPECT_EQ(a.kinds, b.kinds);
  EXPECT_EQ(a.errors, b.errors);
}

TEST(EvaluateGrid, EmptyDatasetThrows) {
  auto test = patterns_test(4);
  test.features.clear();
  test.labels.clear();
  HashModel m(4);
  EXPECT_THROW(evaluate_grid(m, test, all_corruptions(), 1), std::invalid_argument);
  EXPECT_THROW(error_rate(m, test), std::invalid_argument);
}

TEST(RobustnessReport, IncludesMceOnlyWithBaseline) {
  auto g = grid_of(all_corruptions(), 0.2);
  auto r = make_robustness_report("m", 1, "v1", 0.1, g);
  EXPECT_FALSE(r.mce);
  EXPECT_NEAR(r.average, average_error(g), 1e-15);
  auto rb = make_robustness_report("m", 1, "v1", 0.1, g, Baseline{"base", g});
  ASSERT_TRUE(rb.mce);
  EXPECT_NEAR(*rb.mce, 100.0, 1e-12);
  EXPECT_EQ(rb.baseline_id, "base");
}
