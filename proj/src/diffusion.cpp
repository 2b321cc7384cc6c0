#include "diffgan/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace diffgan {

std::string to_string(ScheduleShape shape) { return shape == ScheduleShape::linear ? "linear" : "cosine"; }

ScheduleShape parse_schedule_shape(const std::string& text) {
  if (text == "linear") return ScheduleShape::linear;
  if (text == "cosine") return ScheduleShape::cosine;
  throw std::invalid_argument("unknown schedule shape '" + text + "' (expected linear or cosine)");
}

NoiseSchedule schedule_from_betas(std::vector<double> betas, const ScheduleOptions& opts) {
  if (betas.empty()) throw std::invalid_argument("schedule: need at least one step");
  NoiseSchedule s;
  s.steps = static_cast<int>(betas.size());
  s.beta = std::move(betas);
  double prod = 1.0;
  for (int i = 0; i < s.steps; ++i) {
    const double b = s.beta[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("schedule: beta_" + std::to_string(i + 1) + " = " + std::to_string(b) +
                                  " outside (0, 1)");
    }
    const double prev = prod;
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(i == 0 ? 0.0 : std::sqrt(b * (1.0 - prev) / (1.0 - prod)));
  }
  if (prod > opts.max_terminal_alpha_bar) {
    std::ostringstream os;
    os << "schedule too weak: alpha_bar_N = " << prod << " exceeds " << opts.max_terminal_alpha_bar
       << "; increase beta_end or the number of steps";
    throw std::invalid_argument(os.str());
  }
  return s;
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end, ScheduleShape shape,
                             const ScheduleOptions& opts) {
  if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (shape == ScheduleShape::linear) {
    for (int i = 0; i < steps; ++i) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
      betas[i] = beta_start + frac * (beta_end - beta_start);
    }
  } else {
    constexpr double s = 0.008;
    const auto f = [&](double t) {
      const double c = std::cos((t / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int i = 0; i < steps; ++i) betas[i] = std::clamp(1.0 - f(i + 1) / f(i), beta_start, 0.999);
  }
  return schedule_from_betas(std::move(betas), opts);
}

nlohmann::json to_json(const NoiseSchedule& s) { return {{"steps", s.steps}, {"beta", s.beta}}; }

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
  NoiseSchedule s = schedule_from_betas(j.at("beta").get<std::vector<double>>(), ScheduleOptions{1.0});
  if (s.steps != j.at("steps").get<int>()) throw std::invalid_argument("schedule: step count does not match betas");
  return s;
}

// --- denoiser ------------------------------------------------------------------------

void DenoiserConfig::validate() const {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("denoiser config: " + m); };
  if (window < 1 || channels < 1) fail("window and channels must be positive");
  if (depth < 1) fail("depth must be >= 1");
  if (window % (Index{1} << depth) != 0) {
    fail("window " + std::to_string(window) + " not divisible by 2^depth = " + std::to_string(Index{1} << depth));
  }
  if (base_width < 1 || time_embedding < 2 || time_embedding % 2 != 0) fail("invalid widths");
  if (groups < 1 || base_width % groups != 0) {
    fail("base width " + std::to_string(base_width) + " not divisible into " + std::to_string(groups) + " groups");
  }
}

nlohmann::json to_json(const DenoiserConfig& c) {
  return {{"window", c.window},
          {"channels", c.channels},
          {"depth", c.depth},
          {"base_width", c.base_width},
          {"time_embedding", c.time_embedding},
          {"groups", c.groups},
          {"activation", c.activation == Activation::silu ? "silu" : "relu"}};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j) {
  DenoiserConfig c;
  c.window = j.at("window").get<Index>();
  c.channels = j.at("channels").get<Index>();
  c.depth = j.at("depth").get<Index>();
  c.base_width = j.at("base_width").get<Index>();
  c.time_embedding = j.at("time_embedding").get<Index>();
  c.groups = j.at("groups").get<Index>();
  c.activation = j.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::silu;
  c.validate();
  return c;
}

namespace {

void init_res_block(ParameterSet<float>& ps, const std::string& name, Index cin, Index cout, Index temb,
                    RngStream& rng) {
  init_norm(ps, name + ".norm1", cin);
  init_conv(ps, name + ".conv1", 3, cin, cout, rng);
  init_dense(ps, name + ".temb", temb, cout, rng);
  init_norm(ps, name + ".norm2", cout);
  init_conv(ps, name + ".conv2", 3, cout, cout, rng);
  if (cin != cout) init_conv(ps, name + ".skip", 1, cin, cout, rng);
}

}  // namespace

ParameterSet<float> init_denoiser(const DenoiserConfig& cfg, RngStream& rng) {
  cfg.validate();
  ParameterSet<float> ps;
  const Index E = cfg.time_embedding;
  init_dense(ps, "temb.l1", E, E, rng);
  init_dense(ps, "temb.l2", E, E, rng);
  init_conv(ps, "in", 3, cfg.channels, cfg.width(0), rng);
  for (Index i = 0; i < cfg.depth; ++i) {
    const std::string n = "down" + std::to_string(i);
    init_res_block(ps, n + ".res", cfg.width(i), cfg.width(i + 1), E, rng);
    init_conv(ps, n + ".pool", 3, cfg.width(i + 1), cfg.width(i + 1), rng);
  }
  init_res_block(ps, "mid", cfg.width(cfg.depth), cfg.width(cfg.depth), E, rng);
  for (Index i = cfg.depth; i-- > 0;) {
    const std::string n = "up" + std::to_string(i);
    init_conv(ps, n + ".conv", 3, cfg.width(i + 1), cfg.width(i), rng);
    init_res_block(ps, n + ".res", cfg.width(i) + cfg.width(i + 1), cfg.width(i), E, rng);
  }
  init_norm(ps, "out.norm", cfg.width(0));
  // Zero output layer: the untrained network predicts eps_hat = 0.
  ps.add("out.conv.w", Tensor<float>::zeros({3, cfg.width(0), cfg.channels}));
  ps.add("out.conv.b", Tensor<float>::zeros({cfg.channels}));
  return ps;
}

Tensor<float> TrainedDenoiser::predict(const Tensor<float>& x, const std::vector<int>& steps) const {
  for (int n : steps) schedule.check(n, 1);
  Graph<float> g;
  BoundParams<float> p(g, params, false);
  return denoiser_forward(config, p, g.constant(x), steps).value();
}

NoisePredictor predictor_of(const TrainedDenoiser& denoiser) {
  return [&denoiser](const Tensor<float>& x, int n) { return denoiser.predict(x, n); };
}

// --- reverse process -----------------------------------------------------------------

std::string to_string(DenoiseVariant v) {
  switch (v) {
    case DenoiseVariant::ddpm: return "ddpm";
    case DenoiseVariant::ddim: return "ddim";
    case DenoiseVariant::single: return "single";
  }
  return "?";
}

DenoiseVariant parse_denoise_variant(const std::string& text) {
  if (text == "ddpm") return DenoiseVariant::ddpm;
  if (text == "ddim") return DenoiseVariant::ddim;
  if (text == "single") return DenoiseVariant::single;
  throw std::invalid_argument("unknown denoise variant '" + text + "' (expected ddpm, ddim or single)");
}

ReverseCoefficients reverse_coefficients(const NoiseSchedule& s, int n, DenoiseVariant variant) {
  s.check(n, 1);
  const double a = s.alpha_at(n);
  const double ab = s.alpha_bar_at(n);
  const double ab_prev = s.alpha_bar_at(n - 1);
  ReverseCoefficients c;
  switch (variant) {
    case DenoiseVariant::ddpm:
      c.cx = 1.0 / std::sqrt(a);
      c.ce = -(1.0 - a) / (std::sqrt(a) * std::sqrt(1.0 - ab));
      c.sigma = n >= 2 ? s.sigma_at(n) : 0.0;
      break;
    case DenoiseVariant::ddim:
      // sqrt(ab_prev) * (x - sqrt(1-ab) e) / sqrt(ab) + sqrt(1-ab_prev) e
      c.cx = std::sqrt(ab_prev) / std::sqrt(ab);
      c.ce = std::sqrt(1.0 - ab_prev) - std::sqrt(ab_prev) * std::sqrt(1.0 - ab) / std::sqrt(ab);
      break;
    case DenoiseVariant::single:
      c.cx = 1.0 / std::sqrt(ab);
      c.ce = -std::sqrt(1.0 - ab) / std::sqrt(ab);
      break;
  }
  return c;
}

namespace {

Tensor<float> apply_reverse(const Tensor<float>& x, int n, const NoisePredictor& predict, const NoiseSchedule& schedule,
                            RngStream& rng, DenoiseVariant variant, const SamplerOptions& opts) {
  const Tensor<float> eps = predict(x, n);
  if (eps.shape() != x.shape()) throw ShapeError("denoise: predictor returned " + to_string(eps.shape()));
  const ReverseCoefficients c = reverse_coefficients(schedule, n, variant);
  Tensor<float> out(x.shape(), (x.data().cast<double>() * c.cx + eps.data().cast<double>() * c.ce).cast<float>());
  if (c.sigma > 0.0 && opts.stochastic) {
    for (Index i = 0; i < out.size(); ++i) out[i] += static_cast<float>(c.sigma * rng.normal());
  }
  return out;
}

}  // namespace

Tensor<float> denoise_step(const Tensor<float>& x, int n, const NoisePredictor& predict, const NoiseSchedule& schedule,
                           RngStream& rng, const SamplerOptions& opts) {
  return apply_reverse(x, n, predict, schedule, rng, DenoiseVariant::ddpm, opts);
}

Tensor<float> denoise_module(const Tensor<float>& x, int n, const NoisePredictor& predict,
                             const NoiseSchedule& schedule, RngStream& rng, DenoiseVariant variant,
                             const SamplerOptions& opts) {
  schedule.check(n, 0);
  if (n == 0) return x;
  if (variant == DenoiseVariant::single) return apply_reverse(x, n, predict, schedule, rng, variant, opts);
  Tensor<float> cur = x;
  for (int k = n; k >= 1; --k) cur = apply_reverse(cur, k, predict, schedule, rng, variant, opts);
  return cur;
}

Tensor<float> denoise_module(const Tensor<float>& x, const std::vector<int>& steps, const NoisePredictor& predict,
                             const NoiseSchedule& schedule, RngStream& rng, DenoiseVariant variant,
                             const SamplerOptions& opts) {
  const Index B = x.rank() == 0 ? 0 : x.dim(0);
  if (static_cast<Index>(steps.size()) != B) throw ShapeError("denoise: one step per sample required");
  for (int n : steps) schedule.check(n, 0);
  if (B == 0) return x;
  const Index stride = x.size() / B;

  std::vector<Index> order(static_cast<std::size_t>(B));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return steps[a] > steps[b]; });
  Tensor<float> cur(x.shape());
  for (Index i = 0; i < B; ++i) cur.data().segment(i * stride, stride) = x.data().segment(order[i] * stride, stride);

  const auto rows = [&](Index begin, Index count) {
    Shape s = x.shape();
    s[0] = count;
    return Tensor<float>(s, cur.data().segment(begin * stride, count * stride));
  };
  const auto store = [&](Index begin, const Tensor<float>& t) { cur.data().segment(begin * stride, t.size()) = t.data(); };

  if (variant == DenoiseVariant::single) {
    for (Index i = 0; i < B;) {
      Index j = i;
      while (j < B && steps[order[j]] == steps[order[i]]) ++j;
      const int n = steps[order[i]];
      if (n > 0) store(i, apply_reverse(rows(i, j - i), n, predict, schedule, rng, variant, opts));
      i = j;
    }
  } else {
    for (int n = steps[order.front()]; n >= 1; --n) {
      Index a = 0;
      while (a < B && steps[order[a]] >= n) ++a;
      store(0, apply_reverse(rows(0, a), n, predict, schedule, rng, variant, opts));
    }
  }

  Tensor<float> out(x.shape());
  for (Index i = 0; i < B; ++i) out.data().segment(order[i] * stride, stride) = cur.data().segment(i * stride, stride);
  return out;
}

Tensor<float> partial_diffusion_reconstruct(const Tensor<float>& x0, int steps, const NoisePredictor& predict,
                                            const NoiseSchedule& schedule, RngStream& data_rng,
                                            RngStream& sampler_rng, const SamplerOptions& opts) {
  schedule.check(steps, 1);
  const Tensor<float> eps = sample_gaussian<float>(data_rng, x0.shape());
  return denoise_module(forward_sample(x0, steps, eps, schedule), steps, predict, schedule, sampler_rng,
                        DenoiseVariant::ddpm, opts);
}

// --- training --------------------------------------------------------------------------

DenoiserTrainResult train_denoiser(const WindowSet& windows, const DenoiserConfig& cfg, const NoiseSchedule& schedule,
                                   const DenoiserTrainOptions& opts, std::uint64_t seed) {
  cfg.validate();
  const Index k = windows.count();
  if (k == 0) throw std::invalid_argument("train_denoiser: empty window set");
  if (opts.batch_size < 1 || opts.batch_size > k) {
    throw std::invalid_argument("train_denoiser: batch size " + std::to_string(opts.batch_size) + " not in [1, " +
                                std::to_string(k) + "]");
  }
  if (windows.windows.dim(1) != cfg.window || windows.windows.dim(2) != cfg.channels) {
    throw ShapeError("train_denoiser: windows " + to_string(windows.windows.shape()) + " do not match config");
  }

  const RngStream root(seed);
  RngStream init_rng = root.substream("init");
  RngStream batch_rng = root.substream("batch");
  RngStream noise_rng = root.substream("noise");
  RngStream step_rng = root.substream("step");

  DenoiserTrainResult result;
  result.denoiser.config = cfg;
  result.denoiser.schedule = schedule;
  result.denoiser.params = init_denoiser(cfg, init_rng);
  result.optimizer = AdamWState<float>(opts.adam);
  ParameterSet<float>& params = result.denoiser.params;

  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  Index batches = k / opts.batch_size;
  if (opts.max_batches_per_epoch > 0) batches = std::min(batches, opts.max_batches_per_epoch);

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  std::int64_t iteration = 0;
  for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng.engine());
    double total = 0.0;
    for (Index bi = 0; bi < batches; ++bi) {
      const std::vector<Index> idx(order.begin() + bi * opts.batch_size, order.begin() + (bi + 1) * opts.batch_size);
      const Tensor<float> batch = gather_windows(windows.windows, idx);
      const int n = static_cast<int>(step_rng.uniform_int(1, schedule.steps));
      const Tensor<float> eps = sample_gaussian<float>(noise_rng, batch.shape());

      Graph<float> g;
      BoundParams<float> p(g, params);
      const Var<float> loss = denoiser_loss(cfg, p, schedule, batch, n, eps);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingError("train_denoiser: non-finite loss at iteration " + std::to_string(iteration));
      }
      g.backward(loss);
      GradientMap<float> grads = collect_gradients(g, p, params);
      if (opts.clip_norm > 0.0) clip_global_norm(grads, opts.clip_norm);
      adamw_step(params, grads, result.optimizer);
      result.iteration_loss.push_back(lv);
      total += lv;
      ++iteration;
    }
    const double epoch_loss = total / static_cast<double>(batches);
    result.epoch_loss.push_back(epoch_loss);
    if (opts.log) *opts.log << "denoiser epoch " << epoch + 1 << " loss " << epoch_loss << '\n';

    if (epoch_loss < best * (1.0 - opts.min_improvement)) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= opts.patience) {
      break;
    }
  }
  return result;
}

}  // namespace diffgan
