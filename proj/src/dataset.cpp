#include "ceb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ceb/binary_io.hpp"
#include "ceb/random.hpp"

namespace ceb {

namespace io {

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace io

Tensor Dataset::inputs() const {
  return Tensor::from({size(), dim}, features);
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * dim);
  for (std::size_t i : indices) {
    if (i >= size()) throw std::out_of_range("Dataset::batch: index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor::from({indices.size(), dim}, std::move(out));
}

std::vector<std::size_t> Dataset::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

void Dataset::validate() const {
  if (features.size() != labels.size() * dim) {
    throw std::invalid_argument("dataset: feature buffer does not match size * dim");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) throw std::invalid_argument("dataset: label out of range");
  }
  if (image && image->numel() != dim) {
    throw std::invalid_argument("dataset: image shape does not match dim");
  }
}

namespace {

// Labels cycle through the classes, then the order is shuffled.
std::vector<std::size_t> balanced_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % k;
  std::shuffle(labels.begin(), labels.end(), rng.engine());
  return labels;
}

void check_counts(const char* gen, std::size_t k, std::size_t train, std::size_t test) {
  if (k < 2) throw std::invalid_argument(std::string(gen) + ": need at least 2 classes");
  if (train < k || test < k) {
    throw std::invalid_argument(std::string(gen) +
                                ": train and test sizes must each cover every class");
  }
}

template <typename RowFn>
Dataset generate_split(std::size_t n, std::size_t k, std::size_t dim, Rng& rng, RowFn row_fn) {
  Dataset d;
  d.dim = dim;
  d.num_classes = k;
  d.labels = balanced_labels(n, k, rng);
  d.features.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i) row_fn(d.labels[i], std::span<double>(d.features.data() + i * dim, dim));
  return d;
}

}  // namespace

DataBundle make_blobs(const BlobsParams& p, std::uint64_t seed) {
  check_counts("blobs", p.num_classes, p.train_size, p.test_size);
  if (p.base_dims == 0) throw std::invalid_argument("blobs: base_dims must be positive");
  if (p.base_dims == 1 && p.num_classes != 2) {
    throw std::invalid_argument("blobs: one base dimension supports exactly 2 classes");
  }
  if (!(p.sigma > 0.0)) throw std::invalid_argument("blobs: sigma must be positive");

  const std::size_t k = p.num_classes;
  const std::size_t dim = p.base_dims + p.nuisance_dims;
  std::vector<std::vector<double>> means(k, std::vector<double>(p.base_dims, 0.0));
  const double gap = p.separation * p.sigma;
  if (p.base_dims == 1) {
    means[0][0] = -gap / 2.0;
    means[1][0] = gap / 2.0;
  } else {
    const double radius = gap / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
    for (std::size_t c = 0; c < k; ++c) {
      const double angle =
          2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k) +
          std::numbers::pi / 4.0;
      means[c][0] = radius * std::cos(angle);
      means[c][1] = radius * std::sin(angle);
    }
  }

  Rng rng(seed);
  auto fill = [&](std::size_t y, std::span<double> row) {
    for (std::size_t j = 0; j < p.base_dims; ++j) row[j] = means[y][j] + p.sigma * rng.normal();
    for (std::size_t j = p.base_dims; j < dim; ++j) row[j] = rng.normal();
  };
  DataBundle b;
  b.train = generate_split(p.train_size, k, dim, rng, fill);
  b.test = generate_split(p.test_size, k, dim, rng, fill);
  return b;
}

DataBundle make_two_moons(const MoonsParams& p, std::uint64_t seed) {
  check_counts("two_moons", 2, p.train_size, p.test_size);
  const std::size_t dim = 2 + p.nuisance_dims;
  Rng rng(seed);
  auto fill = [&](std::size_t y, std::span<double> row) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    double a = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
    double b = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
    row[0] = p.scale * (a + p.noise * rng.normal());
    row[1] = p.scale * (b + p.noise * rng.normal());
    for (std::size_t j = 2; j < dim; ++j) row[j] = rng.normal();
  };
  DataBundle bundle;
  bundle.train = generate_split(p.train_size, 2, dim, rng, fill);
  bundle.test = generate_split(p.test_size, 2, dim, rng, fill);
  return bundle;
}

DataBundle make_patterns(const PatternsParams& p, std::uint64_t seed) {
  check_counts("patterns", p.num_classes, p.train_size, p.test_size);
  if (p.height < 4 || p.width < 4) throw std::invalid_argument("patterns: image too small");
  const std::size_t k = p.num_classes;
  const std::size_t dim = p.height * p.width;
  Rng rng(seed);
  auto fill = [&](std::size_t y, std::span<double> row) {
    const double theta = std::numbers::pi * static_cast<double>(y) / static_cast<double>(k);
    const double phase = rng.uniform(-p.phase_jitter, p.phase_jitter);
    const double amp = rng.uniform(p.amplitude, 1.5 * p.amplitude);
    const double freq = 2.0 * std::numbers::pi * 2.0 / static_cast<double>(p.width);
    for (std::size_t r = 0; r < p.height; ++r) {
      for (std::size_t c = 0; c < p.width; ++c) {
        const double u = static_cast<double>(c) * std::cos(theta) +
                         static_cast<double>(r) * std::sin(theta);
        double v = 0.5 + amp * std::cos(freq * u + phase) + p.noise * rng.normal();
        row[r * p.width + c] = std::clamp(v, 0.0, 1.0);
      }
    }
  };
  DataBundle b;
  b.train = generate_split(p.train_size, k, dim, rng, fill);
  b.test = generate_split(p.test_size, k, dim, rng, fill);
  for (Dataset* d : {&b.train, &b.test}) {
    d->image = ImageShape{p.height, p.width, 1};
    d->range = {0.0, 1.0};
  }
  return b;
}

namespace {

constexpr char kMagic[8] = {'C', 'E', 'B', 'D', 'A', 'T', 'A', '\0'};

void write_split(std::ostream& os, const Dataset& d) {
  for (double v : d.features) io::put_f64(os, v);
  for (std::size_t y : d.labels) io::put_u64(os, y);
}

void read_split(std::istream& is, Dataset& d, std::size_t n) {
  d.features.resize(n * d.dim);
  for (auto& v : d.features) v = io::get_f64(is, "dataset features");
  d.labels.resize(n);
  for (auto& y : d.labels) y = io::get_u64(is, "dataset labels");
  d.validate();
}

}  // namespace

void write_bundle(const std::filesystem::path& path, const DataBundle& bundle,
                  std::uint64_t config_hash) {
  const Dataset& ref = bundle.train.empty() ? bundle.test : bundle.train;
  for (const Dataset* d : {&bundle.train, &bundle.test}) {
    if (d->empty()) continue;
    d->validate();
    if (d->dim != ref.dim || d->num_classes != ref.num_classes || d->image != ref.image) {
      throw std::invalid_argument("write_bundle: train and test splits disagree on layout");
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 8);
  io::put_u32(os, kDatasetFormatVersion);
  io::put_u64(os, config_hash);
  io::put_u64(os, ref.dim);
  io::put_u64(os, ref.num_classes);
  io::put_u64(os, ref.image ? ref.image->height : 0);
  io::put_u64(os, ref.image ? ref.image->width : 0);
  io::put_u64(os, ref.image ? ref.image->channels : 0);
  io::put_f64(os, ref.range.lo);
  io::put_f64(os, ref.range.hi);
  io::put_u64(os, bundle.train.size());
  io::put_u64(os, bundle.test.size());
  write_split(os, bundle.train);
  write_split(os, bundle.test);
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

DataBundle read_bundle(const std::filesystem::path& path, std::uint64_t* config_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file '" + path.string() + "'");
  char magic[8];
  io::read_exact(is, magic, 8, "dataset magic");
  if (!std::equal(magic, magic + 8, kMagic)) {
    throw io::FormatError("'" + path.string() + "' is not a dataset file");
  }
  const auto version = io::get_u32(is, "dataset version");
  if (version != kDatasetFormatVersion) {
    throw io::FormatError("dataset '" + path.string() + "' has format version " +
                          std::to_string(version) + "; this build reads version " +
                          std::to_string(kDatasetFormatVersion));
  }
  const auto hash = io::get_u64(is, "config hash");
  if (config_hash) *config_hash = hash;
  Dataset proto;
  proto.dim = io::get_u64(is, "dim");
  proto.num_classes = io::get_u64(is, "num_classes");
  ImageShape img{io::get_u64(is, "height"), io::get_u64(is, "width"),
                 io::get_u64(is, "channels")};
  if (img.numel() != 0) proto.image = img;
  proto.range.lo = io::get_f64(is, "range lo");
  proto.range.hi = io::get_f64(is, "range hi");
  const auto n_train = io::get_u64(is, "train size");
  const auto n_test = io::get_u64(is, "test size");
  if (proto.dim == 0 || proto.dim > (1u << 24) || n_train + n_test > (1u << 28)) {
    throw io::FormatError("dataset '" + path.string() + "' has implausible dimensions");
  }
  DataBundle b{proto, proto};
  read_split(is, b.train, n_train);
  read_split(is, b.test, n_test);
  return b;
}

DataBundle import_csv(const std::filesystem::path& path, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("import_csv: test_fraction must be in (0, 1)");
  }
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open CSV file '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    try {
      std::size_t pos = 0;
      long y = std::stol(cells.at(0), &pos);
      if (y < 0) throw std::invalid_argument("negative label");
      std::vector<double> r;
      for (std::size_t j = 1; j < cells.size(); ++j) r.push_back(std::stod(cells[j]));
      labels.push_back(static_cast<std::size_t>(y));
      rows.push_back(std::move(r));
    } catch (const std::exception&) {
      if (rows.empty() && labels.empty()) continue;  // header line
      throw std::invalid_argument("import_csv: cannot parse line " + std::to_string(line_no) +
                                  " of '" + path.string() + "'");
    }
  }
  if (rows.size() < 2) throw std::invalid_argument("import_csv: need at least two rows");
  const std::size_t dim = rows[0].size();
  for (const auto& r : rows) {
    if (r.size() != dim || dim == 0) {
      throw std::invalid_argument("import_csv: rows have inconsistent feature counts");
    }
  }
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_test = static_cast<std::size_t>(
      std::max(1.0, std::round(test_fraction * static_cast<double>(rows.size()))));
  DataBundle b;
  for (Dataset* d : {&b.train, &b.test}) {
    d->dim = dim;
    d->num_classes = k;
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& d = i < n_test ? b.test : b.train;
    d.features.insert(d.features.end(), rows[order[i]].begin(), rows[order[i]].end());
    d.labels.push_back(labels[order[i]]);
  }
  return b;
}

}  // namespace ceb
