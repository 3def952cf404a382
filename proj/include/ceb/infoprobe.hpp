#pragma once

// Exact information quantities on small discrete joints with the Markov
// structure Z <- X <-> Y: p(x, y, z) = p(x, y) p(z | x). All values in nats.

#include <cstddef>
#include <vector>

#include "ceb/random.hpp"

namespace ceb {

inline constexpr std::size_t kMaxAlphabet = 64;

class DiscreteJoint {
 public:
  /// p_xy is [nx, ny] row-major, channel is p(z|x) as [nx, nz]. Throws
  /// std::invalid_argument for negative or non-finite entries, tables that
  /// do not sum to 1 within 1e-9, or alphabets larger than kMaxAlphabet.
  DiscreteJoint(std::vector<double> p_xy, std::size_t nx, std::size_t ny,
                std::vector<double> channel, std::size_t nz);

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t nz() const { return nz_; }

  double p_xy(std::size_t x, std::size_t y) const { return p_xy_[x * ny_ + y]; }
  double p_z_given_x(std::size_t x, std::size_t z) const { return channel_[x * nz_ + z]; }
  double p_xyz(std::size_t x, std::size_t y, std::size_t z) const {
    return p_xy(x, y) * p_z_given_x(x, z);
  }

  std::vector<double> p_x() const;
  std::vector<double> p_y() const;
  std::vector<double> p_z() const;
  /// [ny, nz]; rows for zero-probability y are uniform.
  std::vector<double> p_z_given_y() const;

 private:
  std::size_t nx_, ny_, nz_;
  std::vector<double> p_xy_;
  std::vector<double> channel_;
};

enum class MiPair { ZX, ZY };

double mutual_information(const DiscreteJoint& j, MiPair pair);

/// I(Z;X|Y) = sum_y p(y) I(Z;X | Y=y).
double conditional_mutual_information(const DiscreteJoint& j);

struct BoundGap {
  double ceb_bound = 0.0;      // E[log p(z|x) - log q(z|y)]
  double vib_bound = 0.0;      // E[log p(z|x) - log q(z)]
  double true_residual = 0.0;  // I(Z;X|Y)
};

/// q_z_given_y is [ny, nz], q_z is [nz]. A bound is +inf when q puts zero
/// mass where p has mass.
BoundGap variational_bound_gap(const DiscreteJoint& j, const std::vector<double>& q_z_given_y,
                               const std::vector<double>& q_z);

/// Joint and channel with independent Dirichlet(1) rows.
DiscreteJoint random_joint(std::size_t nx, std::size_t ny, std::size_t nz, Rng& rng);
/// `rows` independent Dirichlet(1) distributions over n outcomes.
std::vector<double> random_conditional(std::size_t rows, std::size_t n, Rng& rng);

}  // namespace ceb
