#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ceb/dataset.hpp"
#include "ceb/tensor.hpp"

namespace ceb {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  DefocusBlur,
  MotionBlur,
  Brightness,
  Contrast,
  Pixelate,
};

std::string to_string(CorruptionKind k);
CorruptionKind parse_corruption(const std::string& s);
const std::vector<CorruptionKind>& all_corruptions();

inline constexpr int kNumSeverities = 5;

/// Per-kind severity parameters, index 0 = severity 1.
///
///   gaussian_noise  noise stddev
///   shot_noise      photon count per unit intensity (lower is noisier)
///   impulse_noise   fraction of values replaced by 0 or 1
///   defocus_blur    disk kernel radius in pixels
///   motion_blur     45-degree line kernel length in pixels
///   brightness      additive shift
///   contrast        factor applied around the image mean (lower is stronger)
///   pixelate        block size in pixels
///
/// These tables are local to this project and are not calibrated against
/// any published benchmark.
struct SeverityTable {
  std::string version;
  std::map<CorruptionKind, std::array<double, kNumSeverities>> params;

  double parameter(CorruptionKind kind, int severity) const;
  /// Checks every kind is present and strictly monotone in strength.
  void validate() const;

  static const SeverityTable& builtin();
  static SeverityTable load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 1;
  std::uint64_t seed = 0;
};

/// image: [H, W, C] with values in [0, 1]. Output has the same shape, is
/// clipped to [0, 1], and is deterministic given spec.seed.
Tensor corrupt(const Tensor& image, const CorruptionSpec& spec,
               const SeverityTable& table = SeverityTable::builtin());

/// Applies the corruption to every row of an image dataset; row i uses
/// seed derive_seed(spec.seed, i).
Dataset corrupt_dataset(const Dataset& data, const CorruptionSpec& spec,
                        const SeverityTable& table = SeverityTable::builtin());

}  // namespace ceb
