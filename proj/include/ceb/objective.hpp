#pragma once

// Conditional Entropy Bottleneck and VIB objectives.
//
// Sign convention: every quantity here is minimized. The per-example loss is
//
//   gamma * rex + hyz,   rex = -log b(z|y) + log e(z|x),  hyz = -log c(y|z)
//
// with z = f(x) + eps, eps ~ N(0, I), and gamma = exp(-rho) for CEB. The
// maximization form (log-likelihood minus weighted penalty) is its negation.
// For VIB the class-conditional b(z|y) is replaced by one learned marginal
// q(z) and gamma = 1 / (1 + exp(rho)).

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ceb/models.hpp"
#include "ceb/tensor.hpp"

namespace ceb {

enum class Objective { Ceb, Vib };
enum class ClassifierKind { Linear, Consistent };

std::string to_string(Objective o);
std::string to_string(ClassifierKind k);
Objective parse_objective(const std::string& s);
ClassifierKind parse_classifier(const std::string& s);

/// gamma = exp(-rho).
double rho_to_gamma(double rho);

/// sigma(-rho) = 1 / (1 + exp(rho)), stable for large |rho|.
double sigma_neg_rho(double rho);

/// Clamped linear interpolation: start_val before start_step, end_val
/// after end_step. Throws std::invalid_argument unless start_step < end_step.
double lerp(double step, double start_step, double end_step, double start_val, double end_val);

/// Encoder, class-conditional means (rows of backward_means are the
/// means of b(z|y)), linear classifier head and the unconditional VIB
/// marginal mean. All parameters are leaves that track gradients.
class CebModel : public LogitModel {
 public:
  CebModel() = default;
  CebModel(const EncoderSpec& spec, std::size_t num_classes, ClassifierKind classifier,
           std::uint64_t seed);

  Encoder encoder;
  Tensor backward_means;   // [K, d], zeros at init
  Linear classifier;       // [d, K] + [K], weights ~ N(0, 0.01^2)
  Tensor marginal_mean;    // [1, d], zeros at init; VIB q(z)
  ClassifierKind classifier_kind = ClassifierKind::Linear;
  std::vector<double> class_prior;  // p(y) for the consistent classifier

  std::size_t latent_dim() const { return encoder.spec().latent_dim; }
  std::size_t num_classes() const override { return backward_means.dim(0); }

  /// Mean encoding f(x).
  Tensor encode(const Tensor& x) const { return encoder.forward(x); }
  /// Classifier logits for given latents, using the configured head.
  Tensor logits_from_latent(const Tensor& z) const;
  /// Evaluation mode: z = f(x), no noise. Deterministic.
  Tensor logits(const Tensor& x) const override;

  std::vector<NamedTensor> parameters() const;
  CebModel clone() const;
  /// Copy whose parameters do not track gradients; safe to share across
  /// threads for evaluation and attacks.
  CebModel frozen() const;
};

/// Per-batch means of the loss terms, in nats. rex == hzy - hzx and
/// total == gamma * rex + hyz hold exactly. For VIB, hzy holds -log q(z).
struct LossBreakdown {
  double hzx = 0.0;
  double hzy = 0.0;
  double hyz = 0.0;
  double rex = 0.0;
  double gamma = 0.0;
  double total = 0.0;
};

struct LossResult {
  Tensor total;   // scalar, differentiable
  Tensor logits;  // classifier logits on the sampled z
  Tensor hzx;     // per-example terms, [batch]
  Tensor hzy;
  Tensor hyz;
  LossBreakdown terms;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// CEB objective with noise drawn from seed (one eps per example).
LossResult ceb_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, std::uint64_t seed);
/// CEB objective with caller-supplied noise [batch, d].
LossResult ceb_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, const Tensor& noise);

LossResult vib_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, std::uint64_t seed);
LossResult vib_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, const Tensor& noise);

LossResult objective_loss(Objective objective, const CebModel& model, const Tensor& x,
                          std::span<const std::size_t> y, double rho, std::uint64_t seed);

/// Bayes inversion of the class-conditional marginal:
/// logits[k] = -0.5 ||z - mu_k||^2 + log prior[k]. The shared Gaussian
/// normalizer is dropped since it cancels in the softmax. A zero prior
/// entry yields a -inf logit for that class.
Tensor consistent_logits(const Tensor& z, const Tensor& means, std::span<const double> prior);
Tensor consistent_logits(const CebModel& model, const Tensor& z, std::span<const double> prior);

/// Empirical label distribution over num_classes.
std::vector<double> label_prior(std::span<const std::size_t> labels, std::size_t num_classes);

}  // namespace ceb
