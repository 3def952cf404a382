#include "ceb/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ceb/distributions.hpp"
#include "ceb/random.hpp"

namespace ceb {

std::string to_string(Objective o) { return o == Objective::Ceb ? "ceb" : "vib"; }

std::string to_string(ClassifierKind k) {
  return k == ClassifierKind::Linear ? "linear" : "consistent";
}

Objective parse_objective(const std::string& s) {
  if (s == "ceb") return Objective::Ceb;
  if (s == "vib") return Objective::Vib;
  throw std::invalid_argument("unknown objective '" + s + "' (expected ceb or vib)");
}

ClassifierKind parse_classifier(const std::string& s) {
  if (s == "linear") return ClassifierKind::Linear;
  if (s == "consistent") return ClassifierKind::Consistent;
  throw std::invalid_argument("unknown classifier '" + s + "' (expected linear or consistent)");
}

double rho_to_gamma(double rho) { return std::exp(-rho); }

double sigma_neg_rho(double rho) {
  if (rho >= 0.0) {
    const double e = std::exp(-rho);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(rho));
}

double lerp(double step, double start_step, double end_step, double start_val, double end_val) {
  if (!(start_step < end_step)) {
    throw std::invalid_argument("lerp: start_step must be < end_step");
  }
  double t = (step - start_step) / (end_step - start_step);
  t = std::clamp(t, 0.0, 1.0);
  return start_val * (1.0 - t) + end_val * t;
}

CebModel::CebModel(const EncoderSpec& spec, std::size_t num_classes, ClassifierKind classifier,
                   std::uint64_t seed)
    : encoder(build_encoder(spec, derive_seed(seed, 0))),
      backward_means(Tensor::zeros({num_classes, spec.latent_dim}, true)),
      classifier(make_linear(spec.latent_dim, num_classes, 0.01, derive_seed(seed, 1))),
      marginal_mean(Tensor::zeros({1, spec.latent_dim}, true)),
      classifier_kind(classifier),
      class_prior(num_classes, 1.0 / static_cast<double>(num_classes)) {
  if (num_classes < 2) throw std::invalid_argument("CebModel: need at least 2 classes");
}

Tensor CebModel::logits_from_latent(const Tensor& z) const {
  if (classifier_kind == ClassifierKind::Consistent) {
    return consistent_logits(z, backward_means, class_prior);
  }
  return classifier.forward(z);
}

Tensor CebModel::logits(const Tensor& x) const { return logits_from_latent(encode(x)); }

std::vector<NamedTensor> CebModel::parameters() const {
  auto out = encoder.parameters();
  out.push_back({"backward_means", backward_means});
  out.push_back({"classifier.weight", classifier.weight});
  out.push_back({"classifier.bias", classifier.bias});
  out.push_back({"marginal_mean", marginal_mean});
  return out;
}

namespace {

CebModel copy_model(const CebModel& src, bool trainable) {
  auto fresh = [trainable](const Tensor& t) {
    Tensor c = t.detach();
    c.set_requires_grad(trainable);
    return c;
  };
  std::vector<Linear> layers;
  for (const auto& l : src.encoder.layers()) layers.push_back({fresh(l.weight), fresh(l.bias)});
  CebModel m;
  m.encoder = Encoder(src.encoder.spec(), std::move(layers));
  m.backward_means = fresh(src.backward_means);
  m.classifier = {fresh(src.classifier.weight), fresh(src.classifier.bias)};
  m.marginal_mean = fresh(src.marginal_mean);
  m.classifier_kind = src.classifier_kind;
  m.class_prior = src.class_prior;
  return m;
}

}  // namespace

CebModel CebModel::clone() const { return copy_model(*this, true); }

CebModel CebModel::frozen() const { return copy_model(*this, false); }

NonFiniteLoss::NonFiniteLoss(const std::string& term, double value)
    : std::runtime_error("non-finite loss term '" + term + "' = " + std::to_string(value)),
      term_(term) {}

namespace {

void check_finite(const char* term, double v) {
  if (!std::isfinite(v)) throw NonFiniteLoss(term, v);
}

// Shared body of both objectives; they differ only in which table of
// unit-variance Gaussian means plays the variational marginal, and in gamma.
LossResult rate_distortion_loss(const CebModel& model, const Tensor& x,
                                std::span<const std::size_t> y, double gamma,
                                const Tensor& noise, const Tensor& marginal_table,
                                std::span<const std::size_t> marginal_rows) {
  const std::size_t k = model.num_classes();
  for (std::size_t label : y) {
    if (label >= k) {
      throw std::out_of_range("loss: label " + std::to_string(label) + " out of range for " +
                              std::to_string(k) + " classes");
    }
  }
  Tensor f = model.encode(x);
  if (noise.shape() != f.shape()) {
    throw ShapeError("loss: noise " + shape_string(noise.shape()) + " does not match f(x) " +
                     shape_string(f.shape()));
  }
  Tensor z = add(f, noise);

  Tensor hzx = scale(gaussian_log_prob({f}, z), -1.0);
  Tensor mu = gather_rows(marginal_table, marginal_rows);
  Tensor hzy = scale(gaussian_log_prob({mu}, z), -1.0);
  Tensor logits = model.logits_from_latent(z);
  Tensor hyz = scale(categorical_log_prob({logits}, y), -1.0);

  Tensor hzx_mean = reduce_mean(hzx);
  Tensor hzy_mean = reduce_mean(hzy);
  Tensor hyz_mean = reduce_mean(hyz);
  Tensor rex = sub(hzy_mean, hzx_mean);
  Tensor total = add(scale(rex, gamma), hyz_mean);

  LossBreakdown t;
  t.hzx = hzx_mean.item();
  t.hzy = hzy_mean.item();
  t.hyz = hyz_mean.item();
  t.rex = rex.item();
  t.gamma = gamma;
  t.total = total.item();
  check_finite("hzx", t.hzx);
  check_finite("hzy", t.hzy);
  check_finite("hyz", t.hyz);
  check_finite("total", t.total);
  return {total, logits, hzx, hzy, hyz, t};
}

Tensor noise_for(const CebModel& model, const Tensor& x, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal({x.dim(0), model.latent_dim()}, rng);
}

}  // namespace

LossResult ceb_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, const Tensor& noise) {
  return rate_distortion_loss(model, x, y, rho_to_gamma(rho), noise, model.backward_means, y);
}

LossResult ceb_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, std::uint64_t seed) {
  return ceb_loss(model, x, y, rho, noise_for(model, x, seed));
}

LossResult vib_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, const Tensor& noise) {
  std::vector<std::size_t> zeros(y.size(), 0);
  return rate_distortion_loss(model, x, y, sigma_neg_rho(rho), noise, model.marginal_mean, zeros);
}

LossResult vib_loss(const CebModel& model, const Tensor& x, std::span<const std::size_t> y,
                    double rho, std::uint64_t seed) {
  return vib_loss(model, x, y, rho, noise_for(model, x, seed));
}

LossResult objective_loss(Objective objective, const CebModel& model, const Tensor& x,
                          std::span<const std::size_t> y, double rho, std::uint64_t seed) {
  return objective == Objective::Ceb ? ceb_loss(model, x, y, rho, seed)
                                     : vib_loss(model, x, y, rho, seed);
}

Tensor consistent_logits(const Tensor& z, const Tensor& means, std::span<const double> prior) {
  if (z.rank() != 2 || means.rank() != 2 || z.dim(1) != means.dim(1)) {
    throw ShapeError("consistent_logits: z " + shape_string(z.shape()) + " vs means " +
                     shape_string(means.shape()));
  }
  const std::size_t b = z.dim(0), k = means.dim(0);
  if (prior.size() != k) {
    throw ShapeError("consistent_logits: prior has " + std::to_string(prior.size()) +
                     " entries for " + std::to_string(k) + " classes");
  }
  double total = 0.0;
  std::vector<double> log_prior(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (prior[i] < 0.0) throw std::invalid_argument("consistent_logits: negative prior entry");
    total += prior[i];
    log_prior[i] = prior[i] > 0.0 ? std::log(prior[i]) : -std::numeric_limits<double>::infinity();
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("consistent_logits: prior must sum to 1");
  }
  // ||z - mu||^2 = ||z||^2 - 2 z.mu + ||mu||^2
  Tensor zz = expand_cols(sum_rows(mul(z, z)), k);
  Tensor mm = expand_rows(sum_rows(mul(means, means)), b);
  Tensor cross = matmul(z, transpose(means));
  Tensor sq = sub(add(zz, mm), scale(cross, 2.0));
  return add(scale(sq, -0.5), expand_rows(Tensor::from({k}, std::move(log_prior)), b));
}

Tensor consistent_logits(const CebModel& model, const Tensor& z, std::span<const double> prior) {
  return consistent_logits(z, model.backward_means, prior);
}

std::vector<double> label_prior(std::span<const std::size_t> labels, std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("label_prior: no labels");
  std::vector<double> p(num_classes, 0.0);
  for (std::size_t y : labels) {
    if (y >= num_classes) throw std::out_of_range("label_prior: label out of range");
    p[y] += 1.0;
  }
  for (auto& v : p) v /= static_cast<double>(labels.size());
  return p;
}

}  // namespace ceb
