#include "ceb/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ceb/random.hpp"

namespace ceb {

namespace {

struct KindName {
  CorruptionKind kind;
  const char* name;
};

constexpr KindName kNames[] = {
    {CorruptionKind::GaussianNoise, "gaussian_noise"},
    {CorruptionKind::ShotNoise, "shot_noise"},
    {CorruptionKind::ImpulseNoise, "impulse_noise"},
    {CorruptionKind::DefocusBlur, "defocus_blur"},
    {CorruptionKind::MotionBlur, "motion_blur"},
    {CorruptionKind::Brightness, "brightness"},
    {CorruptionKind::Contrast, "contrast"},
    {CorruptionKind::Pixelate, "pixelate"},
};

// Kinds whose parameter shrinks as the distortion grows.
bool decreasing_parameter(CorruptionKind k) {
  return k == CorruptionKind::ShotNoise || k == CorruptionKind::Contrast;
}

}  // namespace

std::string to_string(CorruptionKind k) {
  for (const auto& n : kNames)
    if (n.kind == k) return n.name;
  return "?";
}

CorruptionKind parse_corruption(const std::string& s) {
  for (const auto& n : kNames)
    if (s == n.name) return n.kind;
  throw std::invalid_argument("unknown corruption kind '" + s + "'");
}

const std::vector<CorruptionKind>& all_corruptions() {
  static const std::vector<CorruptionKind> kinds = [] {
    std::vector<CorruptionKind> v;
    for (const auto& n : kNames) v.push_back(n.kind);
    return v;
  }();
  return kinds;
}

double SeverityTable::parameter(CorruptionKind kind, int severity) const {
  if (severity < 1 || severity > kNumSeverities) {
    throw std::invalid_argument("severity " + std::to_string(severity) + " outside 1..5");
  }
  auto it = params.find(kind);
  if (it == params.end()) {
    throw std::invalid_argument("severity table '" + version + "' has no entry for " +
                                to_string(kind));
  }
  return it->second[static_cast<std::size_t>(severity - 1)];
}

void SeverityTable::validate() const {
  for (CorruptionKind k : all_corruptions()) {
    auto it = params.find(k);
    if (it == params.end()) {
      throw std::invalid_argument("severity table '" + version + "' is missing " + to_string(k));
    }
    const auto& p = it->second;
    for (int s = 1; s < kNumSeverities; ++s) {
      const bool ok = decreasing_parameter(k) ? p[s] < p[s - 1] : p[s] > p[s - 1];
      if (!ok) {
        throw std::invalid_argument("severity table '" + version + "': " + to_string(k) +
                                    " is not strictly monotone in strength");
      }
    }
  }
}

const SeverityTable& SeverityTable::builtin() {
  static const SeverityTable table = [] {
    SeverityTable t;
    t.version = "ceb-corruptions-v1";
    t.params = {
        {CorruptionKind::GaussianNoise, {0.04, 0.08, 0.12, 0.18, 0.26}},
        {CorruptionKind::ShotNoise, {60.0, 25.0, 12.0, 5.0, 3.0}},
        {CorruptionKind::ImpulseNoise, {0.03, 0.06, 0.09, 0.17, 0.27}},
        {CorruptionKind::DefocusBlur, {1.0, 1.5, 2.0, 2.5, 3.0}},
        {CorruptionKind::MotionBlur, {2.0, 3.0, 4.0, 5.0, 6.0}},
        {CorruptionKind::Brightness, {0.1, 0.2, 0.3, 0.4, 0.5}},
        {CorruptionKind::Contrast, {0.4, 0.3, 0.2, 0.1, 0.05}},
        {CorruptionKind::Pixelate, {2.0, 3.0, 4.0, 6.0, 12.0}},
    };
    t.validate();
    return t;
  }();
  return table;
}

SeverityTable SeverityTable::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open severity table '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
    SeverityTable t;
    t.version = j.at("version").get<std::string>();
    for (const auto& [name, values] : j.at("tables").items()) {
      auto v = values.get<std::vector<double>>();
      if (v.size() != kNumSeverities) {
        throw std::invalid_argument("table for " + name + " needs 5 entries");
      }
      std::array<double, kNumSeverities> a{};
      std::copy(v.begin(), v.end(), a.begin());
      t.params[parse_corruption(name)] = a;
    }
    t.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed severity table '" + path.string() + "': " + e.what());
  }
}

std::string SeverityTable::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  for (const auto& [k, v] : params) j["tables"][to_string(k)] = v;
  return j.dump(2);
}

namespace {

struct ImageView {
  std::size_t h, w, c;
  std::vector<double> px;
  double& at(std::size_t r, std::size_t col, std::size_t ch) { return px[(r * w + col) * c + ch]; }
  double at_clamped(long r, long col, std::size_t ch) const {
    r = std::clamp(r, 0L, static_cast<long>(h) - 1);
    col = std::clamp(col, 0L, static_cast<long>(w) - 1);
    return px[(static_cast<std::size_t>(r) * w + static_cast<std::size_t>(col)) * c + ch];
  }
};

struct Offset {
  long dy, dx;
};

std::vector<double> convolve(const ImageView& img, const std::vector<Offset>& kernel) {
  std::vector<double> out(img.px.size());
  const double weight = 1.0 / static_cast<double>(kernel.size());
  for (std::size_t r = 0; r < img.h; ++r)
    for (std::size_t col = 0; col < img.w; ++col)
      for (std::size_t ch = 0; ch < img.c; ++ch) {
        double s = 0.0;
        for (const auto& o : kernel)
          s += img.at_clamped(static_cast<long>(r) + o.dy, static_cast<long>(col) + o.dx, ch);
        out[(r * img.w + col) * img.c + ch] = s * weight;
      }
  return out;
}

std::vector<Offset> disk_kernel(double radius) {
  std::vector<Offset> k;
  const long r = static_cast<long>(std::ceil(radius));
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx)
      if (static_cast<double>(dy * dy + dx * dx) <= radius * radius) k.push_back({dy, dx});
  return k;
}

// Line of `length` taps along the 45-degree diagonal, centred on the pixel.
std::vector<Offset> motion_kernel(std::size_t length) {
  std::vector<Offset> k;
  const long half = static_cast<long>(length - 1) / 2;
  for (long i = 0; i < static_cast<long>(length); ++i) k.push_back({i - half, i - half});
  return k;
}

void pixelate(ImageView& img, std::size_t block) {
  for (std::size_t r0 = 0; r0 < img.h; r0 += block)
    for (std::size_t c0 = 0; c0 < img.w; c0 += block)
      for (std::size_t ch = 0; ch < img.c; ++ch) {
        const std::size_t r1 = std::min(img.h, r0 + block), c1 = std::min(img.w, c0 + block);
        // Mean as an offset from the first value, so constant blocks are
        // reproduced bit-exactly and the operation is idempotent.
        const double first = img.at(r0, c0, ch);
        double s = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) s += img.at(r, c, ch) - first;
        const double mean = first + s / static_cast<double>((r1 - r0) * (c1 - c0));
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) img.at(r, c, ch) = mean;
      }
}

}  // namespace

Tensor corrupt(const Tensor& image, const CorruptionSpec& spec, const SeverityTable& table) {
  if (image.rank() != 3) {
    throw ShapeError("corrupt: expected [H, W, C] image, got " + shape_string(image.shape()));
  }
  const double p = table.parameter(spec.kind, spec.severity);
  ImageView img{image.dim(0), image.dim(1), image.dim(2),
                std::vector<double>(image.data().begin(), image.data().end())};
  for (double v : img.px) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("corrupt: input outside [0, 1]");
  }
  Rng rng(spec.seed);

  switch (spec.kind) {
    case CorruptionKind::GaussianNoise:
      for (auto& v : img.px) v += p * rng.normal();
      break;
    case CorruptionKind::ShotNoise:
      for (auto& v : img.px) v = v > 0.0 ? static_cast<double>(rng.poisson(v * p)) / p : 0.0;
      break;
    case CorruptionKind::ImpulseNoise:
      // Both draws happen for every value so that, for a fixed seed, the
      // corrupted set grows monotonically with the amount.
      for (auto& v : img.px) {
        const double hit = rng.uniform();
        const double salt = rng.uniform();
        if (hit < p) v = salt < 0.5 ? 0.0 : 1.0;
      }
      break;
    case CorruptionKind::DefocusBlur:
      img.px = convolve(img, disk_kernel(p));
      break;
    case CorruptionKind::MotionBlur:
      img.px = convolve(img, motion_kernel(static_cast<std::size_t>(p)));
      break;
    case CorruptionKind::Brightness:
      for (auto& v : img.px) v += p;
      break;
    case CorruptionKind::Contrast: {
      double mean = 0.0;
      for (double v : img.px) mean += v;
      mean /= static_cast<double>(img.px.size());
      for (auto& v : img.px) v = (v - mean) * p + mean;
      break;
    }
    case CorruptionKind::Pixelate:
      pixelate(img, static_cast<std::size_t>(p));
      break;
  }
  for (auto& v : img.px) v = std::clamp(v, 0.0, 1.0);
  return Tensor::from(image.shape(), std::move(img.px));
}

Dataset corrupt_dataset(const Dataset& data, const CorruptionSpec& spec,
                        const SeverityTable& table) {
  if (!data.image) throw std::invalid_argument("corrupt_dataset: dataset is not an image dataset");
  const ImageShape& s = *data.image;
  Dataset out = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto row = data.row(i);
    Tensor img = Tensor::from({s.height, s.width, s.channels},
                              std::vector<double>(row.begin(), row.end()));
    CorruptionSpec per_image = spec;
    per_image.seed = derive_seed(spec.seed, i);
    Tensor c = corrupt(img, per_image, table);
    std::copy(c.data().begin(), c.data().end(),
              out.features.begin() + static_cast<std::ptrdiff_t>(i * data.dim));
  }
  return out;
}

}  // namespace ceb
