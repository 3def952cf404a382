#include "ceb/distributions.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ceb {

Tensor gaussian_log_prob(const GaussianDiagUnit& g, const Tensor& z) {
  if (g.mean.rank() != 2 || z.shape() != g.mean.shape()) {
    throw ShapeError("gaussian_log_prob: mean " + shape_string(g.mean.shape()) +
                     " does not match z " + shape_string(z.shape()));
  }
  const double d = static_cast<double>(z.dim(1));
  Tensor diff = sub(z, g.mean);
  Tensor sq = sum_rows(mul(diff, diff));
  return add_scalar(scale(sq, -0.5), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

Tensor standard_normal(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(shape, std::move(v));
}

GaussianSample gaussian_sample(const GaussianDiagUnit& g, Rng& rng) {
  Tensor noise = standard_normal(g.mean.shape(), rng);
  return {add(g.mean, noise), noise};
}

GaussianSample gaussian_sample(const GaussianDiagUnit& g, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_sample(g, rng);
}

Tensor log_softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError("log_softmax: expected [batch, K], got " + shape_string(logits.shape()));
  }
  return sub(logits, expand_cols(log_sum_exp(logits), logits.dim(1)));
}

Tensor categorical_log_prob(const Categorical& c, std::span<const std::size_t> labels) {
  if (c.logits.rank() != 2 || c.logits.dim(0) != labels.size()) {
    throw ShapeError("categorical_log_prob: logits " + shape_string(c.logits.shape()) +
                     " vs labels [" + std::to_string(labels.size()) + "]");
  }
  const std::size_t k = c.logits.dim(1);
  for (std::size_t y : labels) {
    if (y >= k) {
      throw std::out_of_range("categorical_log_prob: label " + std::to_string(y) +
                              " out of range for " + std::to_string(k) + " classes");
    }
  }
  return sub(pick(c.logits, labels), log_sum_exp(c.logits));
}

double gaussian_kl(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("gaussian_kl: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return 0.5 * s;
}

}  // namespace ceb
