#include <gtest/gtest.h>

#include <cmath>

#include "ceb/corruptions.hpp"
#include "ceb/dataset.hpp"
#include "ceb/random.hpp"

using namespace ceb;

namespace {

Tensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(h * w * c);
  for (auto& x : v) x = rng.uniform();
  return Tensor::from({h, w, c}, v);
}

Tensor row_image(const Dataset& d, std::size_t i) {
  auto r = d.row(i);
  return Tensor::from({d.image->height, d.image->width, d.image->channels},
                      std::vector<double>(r.begin(), r.end()));
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.numel());
}

}  // namespace

TEST(Corruptions, NamesRoundTrip) {
  ASSERT_EQ(all_corruptions().size(), 8u);
  for (auto k : all_corruptions()) EXPECT_EQ(parse_corruption(to_string(k)), k);
  EXPECT_THROW(parse_corruption("fog"), std::invalid_argument);
}

TEST(Corruptions, BrightnessShiftsConstantImage) {
  auto img = Tensor::full({4, 4, 1}, 0.5);
  auto out = corrupt(img, {CorruptionKind::Brightness, 1, 0});
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], 0.6, 1e-15);
  auto top = corrupt(Tensor::full({2, 2, 1}, 0.9), {CorruptionKind::Brightness, 5, 0});
  EXPECT_EQ(top[0], 1.0);
}

TEST(Corruptions, GaussianNoiseHasConfiguredStddev) {
  auto img = Tensor::full({64, 64, 1}, 0.5);
  const double p = SeverityTable::builtin().parameter(CorruptionKind::GaussianNoise, 2);
  auto out = corrupt(img, {CorruptionKind::GaussianNoise, 2, 123});
  double m = 0.0, s = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) m += out[i];
  m /= static_cast<double>(out.numel());
  for (std::size_t i = 0; i < out.numel(); ++i) s += (out[i] - m) * (out[i] - m);
  const double sd = std::sqrt(s / static_cast<double>(out.numel() - 1));
  EXPECT_LT(std::abs(sd - p) / p, 0.02) << sd;
}

TEST(Corruptions, PixelateIsIdempotent) {
  auto img = random_image(12, 12, 3, 5);
  for (int sev = 1; sev <= kNumSeverities; ++sev) {
    CorruptionSpec spec{CorruptionKind::Pixelate, sev, 0};
    auto once = corrupt(img, spec);
    auto twice = corrupt(once, spec);
    for (std::size_t i = 0; i < once.numel(); ++i) ASSERT_EQ(once[i], twice[i]) << sev;
  }
}

TEST(Corruptions, OutputsStayInRangeAndShape) {
  auto img = random_image(9, 7, 2, 6);
  for (auto k : all_corruptions())
    for (int sev = 1; sev <= kNumSeverities; ++sev) {
      auto out = corrupt(img, {k, sev, 7});
      ASSERT_EQ(out.shape(), img.shape());
      for (std::size_t i = 0; i < out.numel(); ++i)
        ASSERT_TRUE(out[i] >= 0.0 && out[i] <= 1.0) << to_string(k) << " " << sev;
    }
}

TEST(Corruptions, ReplayableFromSeed) {
  auto img = random_image(8, 8, 1, 8);
  for (auto k : {CorruptionKind::GaussianNoise, CorruptionKind::ShotNoise,
                 CorruptionKind::ImpulseNoise}) {
    auto a = corrupt(img, {k, 3, 42});
    auto b = corrupt(img, {k, 3, 42});
    auto c = corrupt(img, {k, 3, 43});
    bool differs = false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      ASSERT_EQ(a[i], b[i]);
      differs = differs || a[i] != c[i];
    }
    EXPECT_TRUE(differs) << to_string(k);
  }
}

TEST(Corruptions, DistortionGrowsWithSeverity) {
  PatternsParams p;
  p.train_size = 4;
  p.test_size = 40;
  auto data = make_patterns(p, 9);
  for (auto k : all_corruptions()) {
    double prev = 0.0;
    for (int sev = 1; sev <= kNumSeverities; ++sev) {
      double d = 0.0;
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        auto img = row_image(data.test, i);
        d += mean_abs_diff(img, corrupt(img, {k, sev, derive_seed(10, i)}));
      }
      EXPECT_GT(d, prev) << to_string(k) << " severity " << sev;
      prev = d;
    }
  }
}

TEST(Corruptions, DatasetRowsUseDerivedSeeds) {
  PatternsParams p;
  p.train_size = 4;
  p.test_size = 6;
  auto data = make_patterns(p, 1);
  CorruptionSpec spec{CorruptionKind::ShotNoise, 4, 77};
  auto out = corrupt_dataset(data.test, spec);
  ASSERT_EQ(out.size(), 6u);
  EXPECT_EQ(out.labels, data.test.labels);
  auto row3 = corrupt(row_image(data.test, 3), {spec.kind, spec.severity, derive_seed(77, 3)});
  for (std::size_t j = 0; j < data.test.dim; ++j) EXPECT_EQ(out.row(3)[j], row3[j]);
  EXPECT_THROW(corrupt_dataset(make_blobs({}, 1).test, spec), std::invalid_argument);
}

TEST(Corruptions, RejectsBadInputs) {
  auto img = random_image(4, 4, 1, 2);
  EXPECT_THROW(corrupt(img, {CorruptionKind::Contrast, 0, 0}), std::invalid_argument);
  EXPECT_THROW(corrupt(img, {CorruptionKind::Contrast, 6, 0}), std::invalid_argument);
  EXPECT_THROW(corrupt(Tensor::full({4, 4, 1}, 1.5), {CorruptionKind::Contrast, 1, 0}),
               std::invalid_argument);
  EXPECT_THROW(corrupt(Tensor::zeros({16}), {CorruptionKind::Contrast, 1, 0}), ShapeError);
}

TEST(SeverityTable, ShippedJsonMatchesBuiltin) {
  auto t = SeverityTable::load(CEB_DATA_DIR "/severity_tables_v1.json");
  const auto& b = SeverityTable::builtin();
  EXPECT_EQ(t.version, b.version);
  EXPECT_EQ(t.params, b.params);
  EXPECT_THROW(SeverityTable::load(CEB_DATA_DIR "/missing.json"), std::runtime_error);
}

TEST(SeverityTable, ValidationRejectsNonMonotoneRows) {
  auto t = SeverityTable::builtin();
  t.validate();
  t.params[CorruptionKind::DefocusBlur][2] = 0.5;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  auto c = SeverityTable::builtin();
  c.params[CorruptionKind::Contrast] = {0.1, 0.2, 0.3, 0.4, 0.5};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  auto m = SeverityTable::builtin();
  m.params.erase(CorruptionKind::Pixelate);
  EXPECT_THROW(m.validate(), std::invalid_argument);
}
