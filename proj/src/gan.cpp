#include "diffgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace diffgan {

void GeneratorConfig::validate() const {
  if (window < 1 || channels < 1 || hidden < 1 || layers < 1) {
    throw std::invalid_argument("generator config: window, channels, hidden and layers must be positive");
  }
}

void DiscriminatorConfig::validate() const {
  if (window < 1 || channels < 1) throw std::invalid_argument("discriminator config: window and channels must be positive");
  for (Index h : hidden)
    if (h < 1) throw std::invalid_argument("discriminator config: hidden widths must be positive");
  if (!(logit_bound > 0.0)) throw std::invalid_argument("discriminator config: logit bound must be positive");
}

nlohmann::json to_json(const GeneratorConfig& c) {
  return {{"window", c.window}, {"channels", c.channels}, {"hidden", c.hidden}, {"layers", c.layers}, {"residual", c.residual}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.window = j.at("window").get<Index>();
  c.channels = j.at("channels").get<Index>();
  c.hidden = j.at("hidden").get<Index>();
  c.layers = j.at("layers").get<Index>();
  c.residual = j.at("residual").get<bool>();
  c.validate();
  return c;
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
  return {{"window", c.window},
          {"channels", c.channels},
          {"hidden", c.hidden},
          {"activation", c.activation == Activation::silu ? "silu" : "relu"},
          {"logit_bound", c.logit_bound}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.window = j.at("window").get<Index>();
  c.channels = j.at("channels").get<Index>();
  c.hidden = j.at("hidden").get<std::vector<Index>>();
  c.activation = j.at("activation").get<std::string>() == "silu" ? Activation::silu : Activation::relu;
  c.logit_bound = j.at("logit_bound").get<double>();
  c.validate();
  return c;
}

ParameterSet<float> init_generator(const GeneratorConfig& cfg, RngStream& rng) {
  cfg.validate();
  ParameterSet<float> ps;
  for (Index i = 0; i < cfg.layers; ++i)
    init_lstm(ps, "lstm" + std::to_string(i), i == 0 ? cfg.channels : cfg.hidden, cfg.hidden, rng);
  init_dense(ps, "head", cfg.hidden, cfg.channels, rng);
  return ps;
}

ParameterSet<float> init_discriminator(const DiscriminatorConfig& cfg, RngStream& rng) {
  cfg.validate();
  ParameterSet<float> ps;
  Index in = cfg.window * cfg.channels;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    init_dense(ps, "fc" + std::to_string(i), in, cfg.hidden[i], rng);
    in = cfg.hidden[i];
  }
  init_dense(ps, "out", in, 1, rng);
  return ps;
}

// --- step mapping ------------------------------------------------------------------------

std::string to_string(StepMapKind k) { return k == StepMapKind::linear ? "linear" : "schedule"; }

StepMapKind parse_step_map_kind(const std::string& text) {
  if (text == "linear") return StepMapKind::linear;
  if (text == "schedule") return StepMapKind::schedule;
  throw std::invalid_argument("unknown step mapper '" + text + "' (expected linear or schedule)");
}

StepMapper StepMapper::linear(int steps) {
  if (steps < 1) throw std::invalid_argument("step mapper: steps must be >= 1");
  StepMapper m;
  m.kind = StepMapKind::linear;
  m.steps = steps;
  return m;
}

StepMapper StepMapper::from_schedule(const NoiseSchedule& s) {
  StepMapper m;
  m.kind = StepMapKind::schedule;
  m.steps = s.steps;
  for (double ab : s.alpha_bar) m.noise_level.push_back(1.0 - ab);
  return m;
}

int map_step(double p, const StepMapper& mapper) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("map_step: probability " + std::to_string(p) + " outside [0, 1]");
  if (mapper.kind == StepMapKind::linear) {
    return std::min(mapper.steps, static_cast<int>(std::floor(mapper.steps * p + 0.5)));
  }
  // noise_level is increasing, so the qualifying steps form a prefix.
  const auto it = std::upper_bound(mapper.noise_level.begin(), mapper.noise_level.end(), p);
  return static_cast<int>(it - mapper.noise_level.begin());
}

nlohmann::json to_json(const StepMapper& m) { return {{"kind", to_string(m.kind)}, {"steps", m.steps}}; }

// --- controller ------------------------------------------------------------------------

Tensor<float> Controller::generate(const Tensor<float>& x) const {
  Graph<float> g;
  BoundParams<float> p(g, generator, false);
  return generator_forward(generator_config, p, g.constant(x)).value();
}

std::vector<double> Controller::noise_probability(const Tensor<float>& x) const {
  Graph<float> g;
  BoundParams<float> p(g, discriminator, false);
  return probabilities(discriminator_logit(discriminator_config, p, g.constant(generate(x))).value());
}

std::vector<int> Controller::steps(const Tensor<float>& x) const {
  std::vector<int> out;
  for (double p : noise_probability(x)) out.push_back(map_step(p, mapper));
  return out;
}

Tensor<float> diffgan_reconstruct(const Controller& controller, const TrainedDenoiser& denoiser, const Tensor<float>& x,
                                  DenoiseVariant variant, RngStream& sampler_rng, const SamplerOptions& opts) {
  const Tensor<float> generated = controller.generate(x);
  Graph<float> g;
  BoundParams<float> p(g, controller.discriminator, false);
  const auto steps =
      map_steps(discriminator_logit(controller.discriminator_config, p, g.constant(generated)).value(), controller.mapper);
  return denoise_module(generated, steps, predictor_of(denoiser), denoiser.schedule, sampler_rng, variant, opts);
}

// --- training ----------------------------------------------------------------------------

namespace {

double variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double mean_of(const std::vector<double>& v, std::size_t from) {
  if (from >= v.size()) return 0.0;
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(from), v.end(), 0.0) / static_cast<double>(v.size() - from);
}

void check_finite(double v, const char* what, std::int64_t iteration) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string("train_gan: non-finite ") + what + " loss at iteration " + std::to_string(iteration));
  }
}

}  // namespace

GanTrainResult train_gan(const WindowSet& windows, const GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                         const TrainedDenoiser& denoiser, const StepMapper& mapper, const GanTrainOptions& opts,
                         std::uint64_t seed) {
  gcfg.validate();
  dcfg.validate();
  if (opts.straight_through) throw std::invalid_argument("train_gan: straight-through gradient through f is not supported");
  if (!(opts.lambda > 0.0)) throw std::invalid_argument("train_gan: lambda must be positive");
  if (mapper.steps != denoiser.schedule.steps) throw std::invalid_argument("train_gan: mapper and schedule disagree on N");
  const Index k = windows.count();
  if (k == 0) throw std::invalid_argument("train_gan: empty window set");
  if (opts.batch_size < 1 || opts.batch_size > k) {
    throw std::invalid_argument("train_gan: batch size " + std::to_string(opts.batch_size) + " not in [1, " +
                                std::to_string(k) + "]");
  }
  const Shape& ws = windows.windows.shape();
  if (ws[1] != gcfg.window || ws[2] != gcfg.channels || ws[1] != dcfg.window || ws[2] != dcfg.channels ||
      ws[1] != denoiser.config.window || ws[2] != denoiser.config.channels) {
    throw ShapeError("train_gan: windows " + to_string(ws) + " do not match the network configs");
  }

  const RngStream root(seed);
  RngStream init_g = root.substream("init.generator");
  RngStream init_d = root.substream("init.discriminator");
  RngStream batch_rng = root.substream("batch");
  RngStream latent_rng = root.substream("latent");
  RngStream sampler_rng = root.substream("sampler");

  GanTrainResult result;
  Controller& ctl = result.controller;
  ctl.generator_config = gcfg;
  ctl.discriminator_config = dcfg;
  ctl.mapper = mapper;
  ctl.generator = init_generator(gcfg, init_g);
  ctl.discriminator = init_discriminator(dcfg, init_d);
  result.optimizer_generator = AdamWState<float>(opts.adam_generator);
  result.optimizer_discriminator = AdamWState<float>(opts.adam_discriminator);
  GanHistory& h = result.history;
  const float lambda = static_cast<float>(opts.lambda);

  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  Index batches = k / opts.batch_size;
  if (opts.max_batches_per_epoch > 0) batches = std::min(batches, opts.max_batches_per_epoch);

  int collapsed_for = 0;
  std::int64_t iteration = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng.engine());
    const std::size_t first = h.reconstruction.size();
    for (Index bi = 0; bi < batches; ++bi) {
      const std::vector<Index> idx(order.begin() + bi * opts.batch_size, order.begin() + (bi + 1) * opts.batch_size);
      const Tensor<float> batch = gather_windows(windows.windows, idx);
      const Tensor<float> z = sample_gaussian<float>(latent_rng, batch.shape());

      // Discriminator step. f blocks gradients, so the reconstruction term adds nothing here.
      {
        Graph<float> g;
        BoundParams<float> gp(g, ctl.generator, false);
        BoundParams<float> dp(g, ctl.discriminator);
        const Var<float> fake = generator_forward(gcfg, gp, g.constant(batch));
        const auto adv = adversarial_losses(discriminator_logit(dcfg, dp, fake),
                                            discriminator_logit(dcfg, dp, g.constant(z)), lambda);
        const double lv = adv.discriminator.value().item();
        check_finite(lv, "discriminator", iteration);
        g.backward(adv.discriminator);
        GradientMap<float> grads = collect_gradients(g, dp, ctl.discriminator);
        if (opts.clip_norm > 0.0) clip_global_norm(grads, opts.clip_norm);
        adamw_step(ctl.discriminator, grads, result.optimizer_discriminator);
        h.discriminator_adversarial.push_back(lv);
      }

      // Generator step against the updated discriminator.
      {
        Graph<float> g;
        BoundParams<float> gp(g, ctl.generator);
        BoundParams<float> dp(g, ctl.discriminator, false);
        BoundParams<float> ep(g, denoiser.params, false);
        const Var<float> x = g.constant(batch);
        const Var<float> fake = generator_forward(gcfg, gp, x);
        const Var<float> logit_fake = discriminator_logit(dcfg, dp, fake);
        const auto adv = adversarial_losses(logit_fake, discriminator_logit(dcfg, dp, g.constant(z)), lambda);
        const std::vector<double> probs = probabilities(logit_fake.value());
        std::vector<int> steps;
        for (double p : probs) steps.push_back(map_step(p, mapper));
        const Var<float> recon = reconstruction_loss(x, fake, steps, denoiser.config, ep, denoiser.schedule,
                                                     opts.variant, sampler_rng);
        const Var<float> total = add(adv.generator, recon);
        const double adv_v = adv.generator.value().item();
        const double rec_v = recon.value().item();
        check_finite(adv_v + rec_v, "generator", iteration);
        g.backward(total);
        GradientMap<float> grads = collect_gradients(g, gp, ctl.generator);
        if (opts.clip_norm > 0.0) clip_global_norm(grads, opts.clip_norm);
        adamw_step(ctl.generator, grads, result.optimizer_generator);

        h.generator_adversarial.push_back(adv_v);
        h.reconstruction.push_back(rec_v);
        h.mean_step.push_back(std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size()));

        collapsed_for = variance(probs) < opts.collapse_variance ? collapsed_for + 1 : 0;
        if (collapsed_for >= opts.collapse_patience && !result.mode_collapse_warning) {
          result.mode_collapse_warning = true;
          if (opts.log) {
            *opts.log << "warning: possible mode collapse, D(G(W)) variance below " << opts.collapse_variance
                      << " for " << opts.collapse_patience << " iterations\n";
          }
        }
      }
      ++iteration;
    }
    h.epoch_discriminator_adversarial.push_back(mean_of(h.discriminator_adversarial, first));
    h.epoch_generator_adversarial.push_back(mean_of(h.generator_adversarial, first));
    h.epoch_reconstruction.push_back(mean_of(h.reconstruction, first));
    h.epoch_mean_step.push_back(mean_of(h.mean_step, first));
    if (opts.log) {
      *opts.log << "gan epoch " << epoch + 1 << " d_adv " << h.epoch_discriminator_adversarial.back() << " g_adv "
                << h.epoch_generator_adversarial.back() << " recon " << h.epoch_reconstruction.back() << " mean_step "
                << h.epoch_mean_step.back() << '\n';
    }
  }
  return result;
}

}  // namespace diffgan
