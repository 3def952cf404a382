#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ceb/models.hpp"
#include "ceb/tensor.hpp"

namespace ceb {

/// Valid input box used for attack clipping.
struct InputRange {
  double lo = -1e300;
  double hi = 1e300;
  bool operator==(const InputRange&) const = default;
};

/// One split: row-major float64 features and integer labels.
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // size() * dim
  std::vector<std::size_t> labels;
  std::optional<ImageShape> image;  // when rows are flattened [H, W, C] images
  InputRange range;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  /// All rows as a [size, dim] tensor.
  Tensor inputs() const;
  /// Selected rows as a [indices.size(), dim] tensor.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> batch_labels(std::span<const std::size_t> indices) const;

  void validate() const;
};

struct DataBundle {
  Dataset train;
  Dataset test;
};

/// Gaussian blobs. Class means sit on a circle in the first two base
/// dimensions so adjacent means are `separation` apart (in units of the
/// per-coordinate stddev `sigma`). Nuisance dimensions are independent
/// N(0, 1) noise with no label information.
struct BlobsParams {
  std::size_t num_classes = 2;
  std::size_t base_dims = 2;
  double separation = 6.0;
  double sigma = 1.0;
  std::size_t nuisance_dims = 0;
  std::size_t train_size = 500;
  std::size_t test_size = 500;
};

/// Two interleaved half circles (radius 1, noise stddev `noise`) scaled by
/// `scale`, plus nuisance dimensions. Always two classes.
struct MoonsParams {
  double noise = 0.1;
  double scale = 1.0;
  std::size_t nuisance_dims = 0;
  std::size_t train_size = 500;
  std::size_t test_size = 500;
};

/// Small grayscale images in [0,1] with a class-specific oriented stripe
/// pattern, random phase and pixel noise. Used for corruption benchmarks.
struct PatternsParams {
  std::size_t num_classes = 4;
  std::size_t height = 12;
  std::size_t width = 12;
  double noise = 0.05;
  double amplitude = 0.035;      // stripe amplitude drawn from [a, 1.5 a]
  double phase_jitter = 0.7854;  // phase drawn from [-j, j] radians
  std::size_t train_size = 800;
  std::size_t test_size = 400;
};

DataBundle make_blobs(const BlobsParams& params, std::uint64_t seed);
DataBundle make_two_moons(const MoonsParams& params, std::uint64_t seed);
DataBundle make_patterns(const PatternsParams& params, std::uint64_t seed);

// Binary container (little-endian):
//   "CEBDATA\0" | u32 version | u64 config_hash | u64 dim | u64 num_classes
//   | u64 H | u64 W | u64 C (all 0 when not an image) | f64 lo | f64 hi
//   | u64 n_train | u64 n_test
//   | f64[n_train*dim] | u64[n_train] | f64[n_test*dim] | u64[n_test]
inline constexpr std::uint32_t kDatasetFormatVersion = 1;

void write_bundle(const std::filesystem::path& path, const DataBundle& bundle,
                  std::uint64_t config_hash);
DataBundle read_bundle(const std::filesystem::path& path, std::uint64_t* config_hash = nullptr);

/// CSV rows "label,f1,f2,...", optional header line. Rows are shuffled with
/// `seed` and the first round(test_fraction * n) go to the test split.
DataBundle import_csv(const std::filesystem::path& path, double test_fraction, std::uint64_t seed);

}  // namespace ceb
