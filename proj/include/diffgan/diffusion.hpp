#pragma once

#include "diffgan/adamw.hpp"
#include "diffgan/data.hpp"
#include "diffgan/layers.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace diffgan {

/// Step index outside the schedule.
class StepRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// --- noise schedule ---------------------------------------------------------------

enum class ScheduleShape { linear, cosine };

std::string to_string(ScheduleShape shape);
ScheduleShape parse_schedule_shape(const std::string& text);

/// Per-step constants for n = 1..N. Stored 0-based: beta[n-1] is beta_n.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  double alpha_at(int n) const { return alpha.at(check(n, 1) - 1); }
  /// alpha_bar_0 = 1.
  double alpha_bar_at(int n) const { return check(n, 0) == 0 ? 1.0 : alpha_bar[n - 1]; }
  /// Posterior standard deviation; sigma_1 = 0.
  double sigma_at(int n) const { return sigma.at(check(n, 1) - 1); }

  int check(int n, int lo) const {
    if (n < lo || n > steps) {
      throw StepRangeError("step " + std::to_string(n) + " outside [" + std::to_string(lo) + ", " +
                           std::to_string(steps) + "]");
    }
    return n;
  }
};

struct ScheduleOptions {
  /// Reject schedules whose final alpha_bar exceeds this (1.0 disables the check).
  double max_terminal_alpha_bar = 0.05;
};

/// Linear: betas evenly spaced in [beta_start, beta_end]. Cosine: improved-DDPM
/// cosine alpha_bar with betas clipped to [beta_start, 0.999].
NoiseSchedule build_schedule(int steps, double beta_start, double beta_end, ScheduleShape shape,
                             const ScheduleOptions& opts = {});

NoiseSchedule schedule_from_betas(std::vector<double> betas, const ScheduleOptions& opts = {});

nlohmann::json to_json(const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

/// sqrt(alpha_bar_n) x0 + sqrt(1 - alpha_bar_n) eps.
template <class S>
Tensor<S> forward_sample(const Tensor<S>& x0, int n, const Tensor<S>& eps, const NoiseSchedule& schedule) {
  if (eps.shape() != x0.shape()) throw ShapeError("forward_sample: noise shape does not match data");
  const double ab = schedule.alpha_bar_at(schedule.check(n, 1));
  return Tensor<S>(x0.shape(), x0.data() * static_cast<S>(std::sqrt(ab)) + eps.data() * static_cast<S>(std::sqrt(1.0 - ab)));
}

// --- denoiser network ------------------------------------------------------------

struct DenoiserConfig {
  Index window = 64;
  Index channels = 5;
  Index depth = 2;
  Index base_width = 16;
  Index time_embedding = 32;
  Index groups = 4;
  Activation activation = Activation::silu;

  void validate() const;
  /// Channel width at U-Net level i (0..depth).
  Index width(Index level) const { return base_width * (level == 0 ? 1 : 2); }
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

ParameterSet<float> init_denoiser(const DenoiserConfig& cfg, RngStream& rng);

namespace detail {

template <class S>
Var<S> res_block(const DenoiserConfig& cfg, const BoundParams<S>& p, const std::string& name, Var<S> x, Var<S> temb) {
  const Index cout = p[name + ".conv1.w"].value().dim(2);
  Var<S> h = conv(p, name + ".conv1", activate(norm(p, name + ".norm1", x, cfg.groups), cfg.activation));
  h = add_over_time(h, dense(p, name + ".temb", activate(temb, cfg.activation)));
  h = conv(p, name + ".conv2", activate(norm(p, name + ".norm2", h, cfg.groups), cfg.activation));
  const Var<S> skip = x.value().dim(2) == cout ? x : conv(p, name + ".skip", x);
  return add(h, skip);
}

}  // namespace detail

/// Noise prediction for a batch [B, w, D] at per-sample steps.
template <class S>
Var<S> denoiser_forward(const DenoiserConfig& cfg, const BoundParams<S>& p, Var<S> x, const std::vector<int>& steps) {
  const Tensor<S>& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != cfg.window || xv.dim(2) != cfg.channels) {
    throw ShapeError("denoiser: expected [B, " + std::to_string(cfg.window) + ", " + std::to_string(cfg.channels) +
                     "] input, got " + to_string(xv.shape()));
  }
  if (static_cast<Index>(steps.size()) != xv.dim(0)) throw ShapeError("denoiser: one step per sample required");
  Graph<S>& g = *x.graph;

  Var<S> temb = g.constant(timestep_embedding<S>(steps, cfg.time_embedding));
  temb = dense(p, "temb.l2", activate(dense(p, "temb.l1", temb), cfg.activation));

  Var<S> h = conv(p, "in", x);
  std::vector<Var<S>> skips;
  for (Index i = 0; i < cfg.depth; ++i) {
    const std::string n = "down" + std::to_string(i);
    h = detail::res_block(cfg, p, n + ".res", h, temb);
    skips.push_back(h);
    h = conv(p, n + ".pool", h, 2);
  }
  h = detail::res_block(cfg, p, "mid", h, temb);
  for (Index i = cfg.depth; i-- > 0;) {
    const std::string n = "up" + std::to_string(i);
    h = conv(p, n + ".conv", upsample_nearest(h, Index{2}));
    h = detail::res_block(cfg, p, n + ".res", concat_features(h, skips[static_cast<std::size_t>(i)]), temb);
  }
  h = activate(norm(p, "out.norm", h, cfg.groups), cfg.activation);
  return conv(p, "out.conv", h);
}

/// Trained noise predictor with its schedule. Immutable; predict() is thread-safe.
struct TrainedDenoiser {
  DenoiserConfig config;
  ParameterSet<float> params;
  NoiseSchedule schedule;

  Tensor<float> predict(const Tensor<float>& x, const std::vector<int>& steps) const;
  Tensor<float> predict(const Tensor<float>& x, int n) const {
    return predict(x, std::vector<int>(static_cast<std::size_t>(x.dim(0)), n));
  }
};

/// Noise predictor callable: (x_n, n) -> eps_hat.
using NoisePredictor = std::function<Tensor<float>(const Tensor<float>&, int)>;

NoisePredictor predictor_of(const TrainedDenoiser& denoiser);

// --- reverse process -------------------------------------------------------------

enum class DenoiseVariant { ddpm, ddim, single };

std::string to_string(DenoiseVariant v);
DenoiseVariant parse_denoise_variant(const std::string& text);

/// x_prev = cx * x + ce * eps_hat + sigma * z
struct ReverseCoefficients {
  double cx = 1.0;
  double ce = 0.0;
  double sigma = 0.0;
};

ReverseCoefficients reverse_coefficients(const NoiseSchedule& s, int n, DenoiseVariant variant);

struct SamplerOptions {
  /// Draw z ~ N(0, I) in ddpm steps n >= 2. Off forces z = 0.
  bool stochastic = true;
};

/// One ddpm step M_n.
Tensor<float> denoise_step(const Tensor<float>& x, int n, const NoisePredictor& predict, const NoiseSchedule& schedule,
                           RngStream& rng, const SamplerOptions& opts = {});

/// M(x_n, n): ddpm/ddim iterate from n down to 1, single jumps to x0_hat; n = 0 is the identity.
Tensor<float> denoise_module(const Tensor<float>& x, int n, const NoisePredictor& predict,
                             const NoiseSchedule& schedule, RngStream& rng, DenoiseVariant variant,
                             const SamplerOptions& opts = {});

/// Per-sample step counts: M(x[b], steps[b]) for each sample of a [B, ...] batch.
/// Samples sharing a step are denoised together.
Tensor<float> denoise_module(const Tensor<float>& x, const std::vector<int>& steps, const NoisePredictor& predict,
                             const NoiseSchedule& schedule, RngStream& rng, DenoiseVariant variant,
                             const SamplerOptions& opts = {});

/// Diffusion-M baseline: noise to step M with fresh eps, then ddpm back to 0.
Tensor<float> partial_diffusion_reconstruct(const Tensor<float>& x0, int steps, const NoisePredictor& predict,
                                            const NoiseSchedule& schedule, RngStream& data_rng,
                                            RngStream& sampler_rng, const SamplerOptions& opts = {});

/// Differentiable M(x, steps[b]) with per-sample step counts, on one graph.
///
/// Samples are ordered by step so that at every reverse step the active ones form
/// a prefix of the batch; the denoiser runs once per step on that prefix.
template <class S>
Var<S> denoise_module_graph(const DenoiserConfig& cfg, const BoundParams<S>& p, const NoiseSchedule& schedule,
                            Var<S> x, const std::vector<int>& steps, DenoiseVariant variant, RngStream& rng,
                            const SamplerOptions& opts = {}) {
  const Index B = x.value().dim(0);
  if (static_cast<Index>(steps.size()) != B) throw ShapeError("denoise: one step per sample required");
  for (int n : steps) schedule.check(n, 0);
  Graph<S>& g = *x.graph;

  std::vector<Index> order(static_cast<std::size_t>(B));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return steps[a] > steps[b]; });
  const bool permuted = !std::is_sorted(order.begin(), order.end());

  const auto gather = [&](Var<S> v, const std::vector<Index>& idx) {
    std::vector<Var<S>> parts;
    for (Index i : idx) parts.push_back(slice_batch(v, i, 1));
    return concat_batch(parts);
  };

  Var<S> cur = permuted ? gather(x, order) : x;
  const int top = steps[order.front()];
  const auto active_count = [&](int n) {
    Index a = 0;
    while (a < B && steps[order[a]] >= n) ++a;
    return a;
  };
  const auto step_once = [&](Var<S> v, int n) {
    const Index a = v.value().dim(0);
    const Var<S> eps = denoiser_forward(cfg, p, v, std::vector<int>(static_cast<std::size_t>(a), n));
    const ReverseCoefficients c = reverse_coefficients(schedule, n, variant);
    Var<S> out = add(scale(v, static_cast<S>(c.cx)), scale(eps, static_cast<S>(c.ce)));
    if (c.sigma > 0.0 && opts.stochastic) {
      Tensor<S> z = sample_gaussian<S>(rng, v.value().shape());
      z.data() *= static_cast<S>(c.sigma);
      out = add(out, g.constant(std::move(z)));
    }
    return out;
  };

  if (variant == DenoiseVariant::single) {
    // Samples sharing a step count share one denoiser call.
    std::vector<Var<S>> parts;
    Index i = 0;
    while (i < B) {
      Index j = i;
      while (j < B && steps[order[j]] == steps[order[i]]) ++j;
      const Var<S> seg = slice_batch(cur, i, j - i);
      parts.push_back(steps[order[i]] == 0 ? seg : step_once(seg, steps[order[i]]));
      i = j;
    }
    cur = parts.size() == 1 ? parts.front() : concat_batch(parts);
  } else {
    for (int n = top; n >= 1; --n) {
      const Index a = active_count(n);
      if (a == B) {
        cur = step_once(cur, n);
      } else {
        cur = concat_batch(std::vector<Var<S>>{step_once(slice_batch(cur, 0, a), n), slice_batch(cur, a, B - a)});
      }
    }
  }

  if (!permuted) return cur;
  std::vector<Index> inverse(static_cast<std::size_t>(B));
  for (Index i = 0; i < B; ++i) inverse[order[i]] = i;
  return gather(cur, inverse);
}

// --- training (denoiser objective) ---------------------------------------------

/// mean((eps - eps_hat(sqrt(ab_n) W + sqrt(1 - ab_n) eps, n))^2) with one n for the batch.
template <class S>
Var<S> denoiser_loss(const DenoiserConfig& cfg, const BoundParams<S>& p, const NoiseSchedule& schedule,
                     const Tensor<S>& batch, int n, const Tensor<S>& eps) {
  Graph<S>& g = *p.vars().begin()->second.graph;
  const Var<S> noisy = g.constant(forward_sample(batch, n, eps, schedule));
  const Var<S> pred = denoiser_forward(cfg, p, noisy, std::vector<int>(static_cast<std::size_t>(batch.dim(0)), n));
  return mse(pred, g.constant(eps));
}

struct DenoiserTrainOptions {
  AdamWOptions adam{1e-3, 0.9, 0.999, 1e-8, 0.01};
  Index batch_size = 32;
  int max_epochs = 40;
  /// Stop when the best epoch loss has not improved by min_improvement (relative)
  /// for `patience` epochs.
  int patience = 10;
  double min_improvement = 0.01;
  /// Global-norm clip; <= 0 disables.
  double clip_norm = 1.0;
  /// Cap on iterations per epoch (0 = full pass over the windows).
  Index max_batches_per_epoch = 0;
  std::ostream* log = nullptr;
};

struct DenoiserTrainResult {
  TrainedDenoiser denoiser;
  std::vector<double> epoch_loss;
  std::vector<double> iteration_loss;
  AdamWState<float> optimizer;
};

/// Denoiser training loop (batch, uniform n, Gaussian eps, MSE, one AdamW step).
DenoiserTrainResult train_denoiser(const WindowSet& windows, const DenoiserConfig& cfg, const NoiseSchedule& schedule,
                                   const DenoiserTrainOptions& opts, std::uint64_t seed);

/// Windows [idx...] of a [k, w, D] tensor stacked into a batch.
template <class S>
Tensor<S> gather_windows(const Tensor<S>& windows, const std::vector<Index>& idx) {
  const Index w = windows.dim(1), D = windows.dim(2);
  Tensor<S> out(Shape{static_cast<Index>(idx.size()), w, D});
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.data().segment(static_cast<Index>(i) * w * D, w * D) = windows.data().segment(idx[i] * w * D, w * D);
  return out;
}

}  // namespace diffgan
