#include "ceb/models.hpp"

#include <cmath>
#include <stdexcept>

#include "ceb/random.hpp"

namespace ceb {

void EncoderSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("encoder spec: input_dim must be positive");
  if (latent_dim == 0) throw std::invalid_argument("encoder spec: latent_dim must be positive");
  for (std::size_t h : hidden) {
    if (h == 0) throw std::invalid_argument("encoder spec: hidden layer sizes must be positive");
  }
  if (image && image->numel() != input_dim) {
    throw std::invalid_argument("encoder spec: image shape has " +
                                std::to_string(image->numel()) + " values but input_dim is " +
                                std::to_string(input_dim));
  }
}

Tensor Linear::forward(const Tensor& x) const {
  return add(matmul(x, weight), expand_rows(bias, x.dim(0)));
}

Linear make_linear(std::size_t in, std::size_t out, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(in * out);
  for (auto& v : w) v = stddev * rng.normal();
  return {Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Encoder::Encoder(EncoderSpec spec, std::vector<Linear> layers)
    : spec_(std::move(spec)), layers_(std::move(layers)) {}

Tensor Encoder::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != spec_.input_dim) {
    throw ShapeError("encoder: expected [batch, " + std::to_string(spec_.input_dim) + "], got " +
                     shape_string(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = relu(h);
  }
  return h;
}

std::vector<NamedTensor> Encoder::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto base = prefix + "." + std::to_string(i);
    out.push_back({base + ".weight", layers_[i].weight});
    out.push_back({base + ".bias", layers_[i].bias});
  }
  return out;
}

Encoder build_encoder(const EncoderSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<Linear> layers;
  std::size_t fan_in = spec.input_dim;
  std::uint64_t stream = 0;
  auto push = [&](std::size_t out) {
    layers.push_back(make_linear(fan_in, out, 1.0 / std::sqrt(static_cast<double>(fan_in)),
                                 derive_seed(seed, stream++)));
    fan_in = out;
  };
  for (std::size_t h : spec.hidden) push(h);
  push(spec.latent_dim);
  return Encoder(spec, std::move(layers));
}

std::vector<std::size_t> LogitModel::predict(const Tensor& x) const {
  Tensor l = logits(x);
  const std::size_t b = l.dim(0), k = l.dim(1);
  std::vector<std::size_t> out(b, 0);
  auto v = l.data();
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 1; j < k; ++j)
      if (v[i * k + j] > v[i * k + out[i]]) out[i] = j;
  }
  return out;
}

}  // namespace ceb
