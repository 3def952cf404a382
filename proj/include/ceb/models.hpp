#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ceb/tensor.hpp"

namespace ceb {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t numel() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

/// Encoder architecture: ReLU MLP whose last layer is linear with
/// latent_dim outputs (the Gaussian mean f(x)). Image inputs are consumed
/// flattened in [H, W, C] order.
struct EncoderSpec {
  std::size_t input_dim = 0;
  std::optional<ImageShape> image;
  std::vector<std::size_t> hidden;
  std::size_t latent_dim = 0;

  void validate() const;
  bool operator==(const EncoderSpec&) const = default;
};

/// Dense layer y = x W + b, W: [in, out], b: [out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Tensor forward(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

/// Normal(0, stddev) weights, zero bias; both leaves track gradients.
Linear make_linear(std::size_t in, std::size_t out, double stddev, std::uint64_t seed);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(EncoderSpec spec, std::vector<Linear> layers);

  /// x: [batch, input_dim] -> f(x): [batch, latent_dim].
  Tensor forward(const Tensor& x) const;

  const EncoderSpec& spec() const { return spec_; }
  const std::vector<Linear>& layers() const { return layers_; }
  std::vector<NamedTensor> parameters(const std::string& prefix = "encoder") const;

 private:
  EncoderSpec spec_;
  std::vector<Linear> layers_;
};

/// Deterministic given seed. Hidden and output layers use fan-in scaled
/// normal weights (stddev 1/sqrt(fan_in)); biases start at zero.
Encoder build_encoder(const EncoderSpec& spec, std::uint64_t seed);

/// Anything that maps inputs [batch, in] to class logits [batch, K]
/// deterministically. Attacks and evaluation only see this surface.
class LogitModel {
 public:
  virtual ~LogitModel() = default;
  virtual Tensor logits(const Tensor& x) const = 0;
  virtual std::size_t num_classes() const = 0;

  std::vector<std::size_t> predict(const Tensor& x) const;
};

}  // namespace ceb
