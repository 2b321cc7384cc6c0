#pragma once

#include "diffgan/diffusion.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffgan {

// --- networks --------------------------------------------------------------------

/// LSTM generator: stacked LSTM layers over [B, w, D] and a dense head back to D channels.
struct GeneratorConfig {
  Index window = 64;
  Index channels = 5;
  Index hidden = 32;
  Index layers = 1;
  /// Output x + head(lstm(x)) instead of head(lstm(x)).
  bool residual = false;

  void validate() const;
};

/// MLP discriminator on the flattened window, producing one logit per sample.
struct DiscriminatorConfig {
  Index window = 64;
  Index channels = 5;
  std::vector<Index> hidden{64, 32};
  Activation activation = Activation::relu;
  double logit_bound = 16.0;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscriminatorConfig& c);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

ParameterSet<float> init_generator(const GeneratorConfig& cfg, RngStream& rng);
ParameterSet<float> init_discriminator(const DiscriminatorConfig& cfg, RngStream& rng);

template <class S>
Var<S> generator_forward(const GeneratorConfig& cfg, const BoundParams<S>& p, Var<S> x) {
  const Tensor<S>& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != cfg.window || xv.dim(2) != cfg.channels) {
    throw ShapeError("generator: expected [B, " + std::to_string(cfg.window) + ", " + std::to_string(cfg.channels) +
                     "] input, got " + to_string(xv.shape()));
  }
  Var<S> h = x;
  for (Index i = 0; i < cfg.layers; ++i) h = lstm(p, "lstm" + std::to_string(i), h);
  const Var<S> out = dense(p, "head", h);
  return cfg.residual ? add(x, out) : out;
}

/// Clamped logit, shape [B, 1].
template <class S>
Var<S> discriminator_logit(const DiscriminatorConfig& cfg, const BoundParams<S>& p, Var<S> x) {
  const Tensor<S>& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != cfg.window || xv.dim(2) != cfg.channels) {
    throw ShapeError("discriminator: expected [B, " + std::to_string(cfg.window) + ", " +
                     std::to_string(cfg.channels) + "] input, got " + to_string(xv.shape()));
  }
  Var<S> h = reshape(x, Shape{xv.dim(0), cfg.window * cfg.channels});
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) h = activate(dense(p, "fc" + std::to_string(i), h), cfg.activation);
  const S bound = static_cast<S>(cfg.logit_bound);
  return clamp(dense(p, "out", h), -bound, bound);
}

// --- step mapping ------------------------------------------------------------------

enum class StepMapKind { linear, schedule };

std::string to_string(StepMapKind k);
StepMapKind parse_step_map_kind(const std::string& text);

/// f: probability -> step in {0..N}.
struct StepMapper {
  StepMapKind kind = StepMapKind::schedule;
  int steps = 0;
  /// 1 - alpha_bar_n for n = 1..N (schedule kind).
  std::vector<double> noise_level;

  static StepMapper linear(int steps);
  static StepMapper from_schedule(const NoiseSchedule& s);
};

/// Linear: round-half-up of N p. Schedule: largest n with 1 - alpha_bar_n <= p, else 0.
int map_step(double p, const StepMapper& mapper);

nlohmann::json to_json(const StepMapper& m);

// --- losses --------------------------------------------------------------------------

namespace detail {

template <class S>
Var<S> mean_log_clamped(Var<S> prob) {
  return mean(log(clamp(prob, S(1e-7), S(1))));
}

}  // namespace detail

template <class S>
struct AdversarialTerms {
  Var<S> discriminator;  ///< lambda * mean(log D(G(W)) + log(1 - D(z)))
  Var<S> generator;      ///< lambda * mean(log D(z) + log(1 - D(G(W))))
};

/// Both players' adversarial objectives (to be minimized) from discriminator logits
/// on generated windows and on pure noise. Log arguments are clamped at 1e-7.
template <class S>
AdversarialTerms<S> adversarial_losses(Var<S> logit_fake, Var<S> logit_noise, S lambda) {
  const Var<S> d_fake = sigmoid(logit_fake);
  const Var<S> d_noise = sigmoid(logit_noise);
  const Var<S> log_d_fake = detail::mean_log_clamped(d_fake);
  const Var<S> log_1m_d_fake = detail::mean_log_clamped(one_minus(d_fake));
  const Var<S> log_d_noise = detail::mean_log_clamped(d_noise);
  const Var<S> log_1m_d_noise = detail::mean_log_clamped(one_minus(d_noise));
  return {scale(add(log_d_fake, log_1m_d_noise), lambda), scale(add(log_d_noise, log_1m_d_fake), lambda)};
}

/// Per-sample sigmoid of a [B, 1] logit tensor.
template <class S>
std::vector<double> probabilities(const Tensor<S>& logits) {
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  for (Index i = 0; i < logits.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(logits[i])));
  return p;
}

template <class S>
std::vector<int> map_steps(const Tensor<S>& logits, const StepMapper& mapper) {
  std::vector<int> steps;
  for (double p : probabilities(logits)) steps.push_back(map_step(p, mapper));
  return steps;
}

/// mean((W - M(G(W), f(D(G(W)))))^2). f blocks gradients; they flow through G and
/// the frozen denoiser's input path.
template <class S>
Var<S> reconstruction_loss(Var<S> windows, Var<S> generated, const std::vector<int>& steps,
                           const DenoiserConfig& denoiser_cfg, const BoundParams<S>& denoiser, const NoiseSchedule& schedule,
                           DenoiseVariant variant, RngStream& rng, const SamplerOptions& opts = {}) {
  const Var<S> recon = denoise_module_graph(denoiser_cfg, denoiser, schedule, generated, steps, variant, rng, opts);
  return mse(recon, windows);
}

// --- controller ------------------------------------------------------------------------

/// Trained generator + discriminator + step mapper. Immutable; inference is thread-safe.
struct Controller {
  GeneratorConfig generator_config;
  ParameterSet<float> generator;
  DiscriminatorConfig discriminator_config;
  ParameterSet<float> discriminator;
  StepMapper mapper;

  Tensor<float> generate(const Tensor<float>& x) const;
  /// D(G(x)) per sample.
  std::vector<double> noise_probability(const Tensor<float>& x) const;
  /// f(D(G(x))) per sample.
  std::vector<int> steps(const Tensor<float>& x) const;
};

/// M(G(x), f(D(G(x)))) for a batch of windows.
Tensor<float> diffgan_reconstruct(const Controller& controller, const TrainedDenoiser& denoiser, const Tensor<float>& x,
                                  DenoiseVariant variant, RngStream& sampler_rng, const SamplerOptions& opts = {});

// --- training ------------------------------------------------------------------------------

struct GanTrainOptions {
  AdamWOptions adam_generator{1e-4, 0.9, 0.999, 1e-8, 0.01};
  AdamWOptions adam_discriminator{1e-4, 0.9, 0.999, 1e-8, 0.01};
  Index batch_size = 32;
  int epochs = 10;
  /// Cap on iterations per epoch (0 = full pass).
  Index max_batches_per_epoch = 0;
  double lambda = 0.7;
  double clip_norm = 1.0;
  DenoiseVariant variant = DenoiseVariant::ddpm;
  /// Surrogate gradient through f. Not supported; must stay false.
  bool straight_through = false;
  /// Warn when Var(D(G(W))) over a batch stays below this for `collapse_patience` iterations.
  double collapse_variance = 1e-6;
  int collapse_patience = 100;
  std::ostream* log = nullptr;
};

struct GanHistory {
  // Per iteration.
  std::vector<double> discriminator_adversarial;
  std::vector<double> generator_adversarial;
  std::vector<double> reconstruction;
  std::vector<double> mean_step;
  // Per epoch (means of the above).
  std::vector<double> epoch_discriminator_adversarial;
  std::vector<double> epoch_generator_adversarial;
  std::vector<double> epoch_reconstruction;
  std::vector<double> epoch_mean_step;
};

struct GanTrainResult {
  Controller controller;
  GanHistory history;
  AdamWState<float> optimizer_generator;
  AdamWState<float> optimizer_discriminator;
  bool mode_collapse_warning = false;
};

/// Alternating training: per batch draw z, one discriminator step, then one generator step.
GanTrainResult train_gan(const WindowSet& windows, const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                         const TrainedDenoiser& denoiser, const StepMapper& mapper, const GanTrainOptions& opts,
                         std::uint64_t seed);

}  // namespace diffgan
