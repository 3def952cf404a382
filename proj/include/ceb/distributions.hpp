#pragma once

#include <cstdint>
#include <span>

#include "ceb/random.hpp"
#include "ceb/tensor.hpp"

namespace ceb {

/// Diagonal Gaussian with identity covariance. Only the mean is stored;
/// there is deliberately no variance parameter.
struct GaussianDiagUnit {
  Tensor mean;  // [batch, d]
};

/// Categorical over K classes parameterized by unnormalized logits.
struct Categorical {
  Tensor logits;  // [batch, K]
};

/// log N(z; mean, I) per row: -(d/2) log(2 pi) - 0.5 ||z - mean||^2.
Tensor gaussian_log_prob(const GaussianDiagUnit& g, const Tensor& z);

struct GaussianSample {
  Tensor z;      // mean + noise; differentiable through mean
  Tensor noise;  // the standard-normal draw, constant
};

/// Reparameterized draw z = mean + eps, eps ~ N(0, I).
GaussianSample gaussian_sample(const GaussianDiagUnit& g, std::uint64_t seed);
GaussianSample gaussian_sample(const GaussianDiagUnit& g, Rng& rng);

/// Standard normal tensor of the given shape.
Tensor standard_normal(const Shape& shape, Rng& rng);

/// logits[y] - logsumexp(logits) per row. Throws std::out_of_range for y >= K.
Tensor categorical_log_prob(const Categorical& c, std::span<const std::size_t> labels);

/// Row-wise log-softmax, [batch, K].
Tensor log_softmax(const Tensor& logits);

/// Analytic KL(N(a, I) || N(b, I)) = 0.5 ||a - b||^2 for single vectors.
double gaussian_kl(std::span<const double> a, std::span<const double> b);

}  // namespace ceb
