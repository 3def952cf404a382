#include "ceb/infoprobe.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ceb {

namespace {

void check_table(const std::vector<double>& t, std::size_t rows, std::size_t cols,
                 bool per_row, const char* what) {
  if (t.size() != rows * cols) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows * cols) +
                                " entries, got " + std::to_string(t.size()));
  }
  for (double v : t)
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(what) + ": entries must be finite and >= 0");
    }
  auto check_sum = [&](double s) {
    if (std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument(std::string(what) + ": probabilities sum to " +
                                  std::to_string(s) + ", expected 1");
    }
  };
  if (per_row) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += t[r * cols + c];
      check_sum(s);
    }
  } else {
    double s = 0.0;
    for (double v : t) s += v;
    check_sum(s);
  }
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// sum_{x,y,z} p(x,y,z) [log p(z|x) - log q(z|y)] with the outer loop over y.
// Shared by the residual and the CEB bound so that q = p(z|y) reproduces
// the residual bit for bit.
double expected_log_ratio(const DiscreteJoint& j, const std::vector<double>& q_z_given_y) {
  double total = 0.0;
  for (std::size_t y = 0; y < j.ny(); ++y)
    for (std::size_t x = 0; x < j.nx(); ++x)
      for (std::size_t z = 0; z < j.nz(); ++z) {
        const double p = j.p_xyz(x, y, z);
        if (p == 0.0) continue;
        const double q = q_z_given_y[y * j.nz() + z];
        if (q == 0.0) return kInf;
        total += p * (std::log(j.p_z_given_x(x, z)) - std::log(q));
      }
  return total;
}

}  // namespace

DiscreteJoint::DiscreteJoint(std::vector<double> p_xy, std::size_t nx, std::size_t ny,
                             std::vector<double> channel, std::size_t nz)
    : nx_(nx), ny_(ny), nz_(nz), p_xy_(std::move(p_xy)), channel_(std::move(channel)) {
  if (nx == 0 || ny == 0 || nz == 0) throw std::invalid_argument("DiscreteJoint: empty alphabet");
  if (nx > kMaxAlphabet || ny > kMaxAlphabet || nz > kMaxAlphabet) {
    throw std::invalid_argument("DiscreteJoint: alphabets are limited to " +
                                std::to_string(kMaxAlphabet) +
                                " symbols; coarsen the variables before probing");
  }
  check_table(p_xy_, nx, ny, false, "p(x,y)");
  check_table(channel_, nx, nz, true, "p(z|x)");
}

std::vector<double> DiscreteJoint::p_x() const {
  std::vector<double> out(nx_, 0.0);
  for (std::size_t x = 0; x < nx_; ++x)
    for (std::size_t y = 0; y < ny_; ++y) out[x] += p_xy(x, y);
  return out;
}

std::vector<double> DiscreteJoint::p_y() const {
  std::vector<double> out(ny_, 0.0);
  for (std::size_t x = 0; x < nx_; ++x)
    for (std::size_t y = 0; y < ny_; ++y) out[y] += p_xy(x, y);
  return out;
}

std::vector<double> DiscreteJoint::p_z() const {
  const auto px = p_x();
  std::vector<double> out(nz_, 0.0);
  for (std::size_t x = 0; x < nx_; ++x)
    for (std::size_t z = 0; z < nz_; ++z) out[z] += px[x] * p_z_given_x(x, z);
  return out;
}

std::vector<double> DiscreteJoint::p_z_given_y() const {
  const auto py = p_y();
  std::vector<double> out(ny_ * nz_, 0.0);
  for (std::size_t y = 0; y < ny_; ++y) {
    if (py[y] == 0.0) {
      for (std::size_t z = 0; z < nz_; ++z) out[y * nz_ + z] = 1.0 / static_cast<double>(nz_);
      continue;
    }
    for (std::size_t x = 0; x < nx_; ++x)
      for (std::size_t z = 0; z < nz_; ++z) out[y * nz_ + z] += p_xyz(x, y, z);
    for (std::size_t z = 0; z < nz_; ++z) out[y * nz_ + z] /= py[y];
  }
  return out;
}

double mutual_information(const DiscreteJoint& j, MiPair pair) {
  const auto pz = j.p_z();
  double total = 0.0;
  if (pair == MiPair::ZX) {
    const auto px = j.p_x();
    for (std::size_t x = 0; x < j.nx(); ++x)
      for (std::size_t z = 0; z < j.nz(); ++z) {
        const double c = j.p_z_given_x(x, z);
        const double p = px[x] * c;
        if (p > 0.0) total += p * std::log(c / pz[z]);
      }
    return total;
  }
  const auto py = j.p_y();
  const auto qzy = j.p_z_given_y();
  for (std::size_t y = 0; y < j.ny(); ++y)
    for (std::size_t z = 0; z < j.nz(); ++z) {
      const double p = py[y] * qzy[y * j.nz() + z];
      if (p > 0.0) total += p * std::log(qzy[y * j.nz() + z] / pz[z]);
    }
  return total;
}

double conditional_mutual_information(const DiscreteJoint& j) {
  // Given Y, Z still depends on X only through p(z|x), so the per-slice
  // log ratio is log p(z|x) - log p(z|y).
  return expected_log_ratio(j, j.p_z_given_y());
}

BoundGap variational_bound_gap(const DiscreteJoint& j, const std::vector<double>& q_z_given_y,
                               const std::vector<double>& q_z) {
  check_table(q_z_given_y, j.ny(), j.nz(), true, "q(z|y)");
  check_table(q_z, 1, j.nz(), true, "q(z)");
  BoundGap g;
  g.true_residual = conditional_mutual_information(j);
  g.ceb_bound = expected_log_ratio(j, q_z_given_y);

  const auto px = j.p_x();
  double vib = 0.0;
  for (std::size_t x = 0; x < j.nx() && vib != kInf; ++x)
    for (std::size_t z = 0; z < j.nz(); ++z) {
      const double c = j.p_z_given_x(x, z);
      const double p = px[x] * c;
      if (p == 0.0) continue;
      if (q_z[z] == 0.0) {
        vib = kInf;
        break;
      }
      vib += p * (std::log(c) - std::log(q_z[z]));
    }
  g.vib_bound = vib;
  return g;
}

std::vector<double> random_conditional(std::size_t rows, std::size_t n, Rng& rng) {
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // Exponential draws normalized to a flat Dirichlet; 1 - u avoids log 0.
      out[r * n + i] = -std::log(1.0 - rng.uniform());
      s += out[r * n + i];
    }
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] /= s;
  }
  return out;
}

DiscreteJoint random_joint(std::size_t nx, std::size_t ny, std::size_t nz, Rng& rng) {
  auto pxy = random_conditional(1, nx * ny, rng);
  auto channel = random_conditional(nx, nz, rng);
  return DiscreteJoint(std::move(pxy), nx, ny, std::move(channel), nz);
}

}  // namespace ceb
