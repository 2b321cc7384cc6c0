#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace diffgan::testing {

namespace {

Index pick(RngStream& rng, Index lo, Index hi) { return static_cast<Index>(rng.uniform_int(lo, hi)); }

void merge(GradCheck& into, const GradCheck& r) {
  if (r.max_rel > into.max_rel) {
    into.max_rel = r.max_rel;
    into.worst = r.worst;
  }
  into.checked += r.checked;
}

ParameterSet<double> randomized(const ParameterSet<float>& ps, RngStream& rng, double scale) {
  ParameterSet<double> out;
  for (const auto& [name, e] : ps) out.add(name, random_tensor(rng, e.tensor.shape(), scale));
  return out;
}

/// One randomized configuration of a building block: params (including "input") and a loss.
struct Trial {
  ParameterSet<double> params;
  LossFn loss;
};

Trial layer_trial(const std::string& kind, RngStream& rng, std::uint64_t proj_seed) {
  Trial t;
  const Index B = pick(rng, 1, 3);
  const Index L = pick(rng, 2, 9);
  const Index C = pick(rng, 1, 4);

  if (kind == "residual_add" || kind == "concat") {
    t.params.add("input", random_tensor(rng, {B, L, C}));
    t.params.add("other", random_tensor(rng, {B, L, pick(rng, 1, 3)}));
    if (kind == "residual_add") t.params.at("other") = random_tensor(rng, {B, L, C});
    t.loss = [kind, proj_seed](Graph<double>&, const BoundParams<double>& p) {
      const Var<double> y = kind == "residual_add" ? add(p["input"], p["other"]) : concat_features(p["input"], p["other"]);
      return project(y, proj_seed);
    };
    return t;
  }
  if (kind == "time_projection") {
    // Projected timestep embedding broadcast over time (U-Net residual conditioning).
    const Index E = 2 * pick(rng, 1, 4);
    std::vector<int> steps;
    for (Index b = 0; b < B; ++b) steps.push_back(static_cast<int>(rng.uniform_int(1, 100)));
    t.params.add("input", random_tensor(rng, {B, L, C}));
    t.params.add("temb.w", random_tensor(rng, {E, C}, 0.5));
    t.params.add("temb.b", random_tensor(rng, {C}, 0.5));
    t.loss = [E, steps, proj_seed](Graph<double>& g, const BoundParams<double>& p) {
      const Var<double> emb = g.constant(timestep_embedding<double>(steps, E));
      const Var<double> e = linear(silu(emb), p["temb.w"], p["temb.b"]);
      return project(add_over_time(p["input"], e), proj_seed);
    };
    return t;
  }

  LayerConfig cfg;
  cfg.name = kind;
  Shape input{B, L, C};
  double param_scale = 0.5;
  if (kind == "conv1d" || kind == "conv1d_stride2" || kind == "upsample_conv") {
    cfg.kind = kind == "upsample_conv" ? LayerKind::upsample_conv : LayerKind::conv1d;
    cfg.in = C;
    cfg.out = pick(rng, 1, 4);
    cfg.kernel = 2 * pick(rng, 0, 2) + 1;
    cfg.stride = kind == "conv1d_stride2" ? 2 : 1;
    if (cfg.stride == 2) input[1] = 2 * pick(rng, 1, 5);
  } else if (kind == "dense") {
    cfg.kind = LayerKind::dense;
    cfg.in = C;
    cfg.out = pick(rng, 1, 5);
    if (rng.uniform() < 0.5) input = {B, C};
  } else if (kind == "lstm") {
    cfg.kind = LayerKind::lstm;
    cfg.in = C;
    cfg.out = pick(rng, 1, 4);
    input[1] = pick(rng, 1, 6);
  } else if (kind == "group_norm") {
    cfg.kind = LayerKind::group_norm;
    cfg.groups = pick(rng, 1, 3);
    cfg.in = cfg.groups * pick(rng, 1, 3);
    input = {B, pick(rng, 2, 8), cfg.in};
    param_scale = 1.0;
  } else if (kind == "sigmoid") {
    cfg.kind = LayerKind::sigmoid;
  } else if (kind == "silu") {
    cfg.kind = LayerKind::silu;
  } else if (kind == "relu") {
    cfg.kind = LayerKind::relu;
  } else {
    throw std::invalid_argument("gradient_trials: unknown kind '" + kind + "'");
  }
  RngStream init = rng.substream("init");
  t.params = randomized(init_layer<float>(cfg, init), rng, param_scale);
  t.params.add("input", random_tensor(rng, input));
  t.loss = [cfg, proj_seed](Graph<double>&, const BoundParams<double>& p) {
    return project(apply_layer(cfg, p, p["input"]), proj_seed);
  };
  return t;
}

DenoiserConfig tiny_denoiser(RngStream& rng) {
  DenoiserConfig c;
  c.depth = pick(rng, 1, 2);
  c.window = (Index{1} << c.depth) * pick(rng, 1, 3);
  c.channels = pick(rng, 1, 3);
  c.groups = 2;
  c.base_width = 2 * pick(rng, 1, 2);
  c.time_embedding = 4;
  c.activation = rng.uniform() < 0.5 ? Activation::silu : Activation::relu;
  return c;
}

}  // namespace

const std::vector<std::string>& gradient_kinds() {
  static const std::vector<std::string> kinds = {"conv1d", "conv1d_stride2", "upsample_conv", "dense",
                                                 "lstm",   "group_norm",     "sigmoid",       "silu",
                                                 "relu",   "residual_add",   "concat",        "time_projection"};
  return kinds;
}

GradCheck gradient_trials(const std::string& kind, int trials, std::uint64_t seed) {
  RngStream rng = RngStream(seed).substream(kind);
  GradCheck out;
  for (int i = 0; i < trials; ++i) {
    RngStream trial_rng = rng.substream(static_cast<std::uint64_t>(i));
    Trial t = layer_trial(kind, trial_rng, trial_rng.substream("projection").seed());
    merge(out, check_gradients(std::move(t.params), t.loss, trial_rng));
  }
  return out;
}

GradCheck denoiser_loss_trials(int trials, std::uint64_t seed) {
  RngStream rng = RngStream(seed).substream("denoiser_loss");
  GradCheck out;
  for (int i = 0; i < trials; ++i) {
    RngStream r = rng.substream(static_cast<std::uint64_t>(i));
    const DenoiserConfig cfg = tiny_denoiser(r);
    RngStream init = r.substream("init");
    ParameterSet<double> params = randomized(init_denoiser(cfg, init), r, 0.4);
    const NoiseSchedule schedule = build_schedule(20, 0.01, 0.3, ScheduleShape::linear);
    const Index B = pick(r, 1, 3);
    const Tensor<double> batch = random_tensor(r, {B, cfg.window, cfg.channels});
    const Tensor<double> eps = random_tensor(r, {B, cfg.window, cfg.channels});
    const int n = static_cast<int>(r.uniform_int(1, 20));
    const LossFn loss = [&](Graph<double>&, const BoundParams<double>& p) {
      return denoiser_loss(cfg, p, schedule, batch, n, eps);
    };
    merge(out, check_gradients(std::move(params), loss, r, 3));
  }
  return out;
}

namespace {

struct GanFixture {
  GeneratorConfig g;
  DiscriminatorConfig d;
  DenoiserConfig e;
  ParameterSet<double> gp, dp, ep;
  NoiseSchedule schedule;
  Tensor<double> batch, z;
  std::vector<int> steps;
  DenoiseVariant variant = DenoiseVariant::ddpm;
  std::uint64_t sampler_seed = 0;
};

GanFixture gan_fixture(RngStream& r) {
  GanFixture f;
  f.e = tiny_denoiser(r);
  f.g.window = f.d.window = f.e.window;
  f.g.channels = f.d.channels = f.e.channels;
  f.g.hidden = pick(r, 2, 3);
  f.g.layers = pick(r, 1, 2);
  f.g.residual = r.uniform() < 0.5;
  f.d.hidden = {pick(r, 2, 5), pick(r, 2, 4)};
  f.d.activation = r.uniform() < 0.5 ? Activation::relu : Activation::silu;
  RngStream init = r.substream("init");
  f.gp = randomized(init_generator(f.g, init), r, 0.5);
  f.dp = randomized(init_discriminator(f.d, init), r, 0.5);
  f.ep = randomized(init_denoiser(f.e, init), r, 0.3);
  f.schedule = build_schedule(10, 0.05, 0.5, ScheduleShape::linear);
  const Index B = pick(r, 1, 3);
  f.batch = random_tensor(r, {B, f.e.window, f.e.channels});
  f.z = random_tensor(r, {B, f.e.window, f.e.channels});
  for (Index b = 0; b < B; ++b) f.steps.push_back(static_cast<int>(r.uniform_int(0, 10)));
  const double v = r.uniform();
  f.variant = v < 0.34 ? DenoiseVariant::ddpm : v < 0.67 ? DenoiseVariant::ddim : DenoiseVariant::single;
  f.sampler_seed = r.substream("sampler").seed();
  return f;
}

}  // namespace

GradCheck generator_loss_trials(int trials, std::uint64_t seed) {
  RngStream rng = RngStream(seed).substream("generator_loss");
  GradCheck out;
  for (int i = 0; i < trials; ++i) {
    RngStream r = rng.substream(static_cast<std::uint64_t>(i));
    const GanFixture f = gan_fixture(r);
    // Steps are held fixed: the integer mapping blocks gradients.
    const LossFn loss = [&](Graph<double>& g, const BoundParams<double>& p) {
      const BoundParams<double> dp(g, f.dp, false);
      const BoundParams<double> ep(g, f.ep, false);
      const Var<double> x = g.constant(f.batch);
      const Var<double> fake = generator_forward(f.g, p, x);
      const auto adv = adversarial_losses(discriminator_logit(f.d, dp, fake), discriminator_logit(f.d, dp, g.constant(f.z)),
                                          0.7);
      RngStream sampler(f.sampler_seed);
      return add(adv.generator, reconstruction_loss(x, fake, f.steps, f.e, ep, f.schedule, f.variant, sampler));
    };
    merge(out, check_gradients(f.gp, loss, r, 4));
  }
  return out;
}

GradCheck discriminator_loss_trials(int trials, std::uint64_t seed) {
  RngStream rng = RngStream(seed).substream("discriminator_loss");
  GradCheck out;
  for (int i = 0; i < trials; ++i) {
    RngStream r = rng.substream(static_cast<std::uint64_t>(i));
    const GanFixture f = gan_fixture(r);
    const LossFn loss = [&](Graph<double>& g, const BoundParams<double>& p) {
      const BoundParams<double> gp(g, f.gp, false);
      const Var<double> fake = generator_forward(f.g, gp, g.constant(f.batch));
      return adversarial_losses(discriminator_logit(f.d, p, fake), discriminator_logit(f.d, p, g.constant(f.z)), 0.7)
          .discriminator;
    };
    merge(out, check_gradients(f.dp, loss, r, 4));
  }
  return out;
}

// --- forward process ------------------------------------------------------------------

namespace {

MomentCheck summarize(const std::vector<double>& xs, int n, double expected_mean, double expected_var) {
  MomentCheck m;
  m.n = n;
  const double count = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / count;
  double ss = 0.0;
  for (double x : xs) ss += (x - m.mean) * (x - m.mean);
  m.variance = ss / (count - 1);
  m.expected_mean = expected_mean;
  m.expected_variance = expected_var;
  m.standard_error = std::sqrt(expected_var / count);
  return m;
}

}  // namespace

MomentCheck forward_moments(const NoiseSchedule& s, int n, double x0, int draws, std::uint64_t seed) {
  RngStream rng(seed);
  const Tensor<double> x = Tensor<double>::constant({draws}, x0);
  const Tensor<double> eps = sample_gaussian<double>(rng, {draws});
  const Tensor<double> xn = forward_sample(x, n, eps, s);
  const std::vector<double> xs(xn.data().begin(), xn.data().end());
  const double ab = s.alpha_bar_at(n);
  return summarize(xs, n, std::sqrt(ab) * x0, 1.0 - ab);
}

MomentCheck chained_moments(const NoiseSchedule& s, int n, double x0, int draws, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> xs(static_cast<std::size_t>(draws), x0);
  for (int k = 1; k <= n; ++k) {
    const double a = s.alpha_at(k);
    for (double& x : xs) x = std::sqrt(a) * x + std::sqrt(1.0 - a) * rng.normal();
  }
  const double ab = s.alpha_bar_at(n);
  return summarize(xs, n, std::sqrt(ab) * x0, 1.0 - ab);
}

// --- reverse process ----------------------------------------------------------------------

double oracle_inversion_error(const NoiseSchedule& s, DenoiseVariant variant, std::uint64_t seed) {
  RngStream rng(seed);
  double worst = 0.0;
  for (int n = 1; n <= s.steps; ++n) {
    const Tensor<float> x0 = sample_gaussian<float>(rng, {2, 8, 3});
    const Tensor<float> eps = sample_gaussian<float>(rng, {2, 8, 3});
    const Tensor<float> xn = forward_sample(x0, n, eps, s);
    // Exact noise content of the current iterate given the known x0.
    const NoisePredictor oracle = [&](const Tensor<float>& x, int k) {
      const double ab = s.alpha_bar_at(k);
      Tensor<float> out(x.shape());
      for (Index i = 0; i < x.size(); ++i) {
        out[i] = static_cast<float>((static_cast<double>(x[i]) - std::sqrt(ab) * x0[i]) / std::sqrt(1.0 - ab));
      }
      return out;
    };
    RngStream sampler = rng.substream("sampler");
    const Tensor<float> rec = denoise_module(xn, n, oracle, s, sampler, variant, SamplerOptions{false});
    for (Index i = 0; i < x0.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(rec[i] - x0[i])));
  }
  return worst;
}

// --- step mapping ----------------------------------------------------------------------------

PropertyCount map_step_properties(int cases, std::uint64_t seed) {
  RngStream rng(seed);
  PropertyCount out;
  const auto fail = [&](const std::string& what) {
    if (out.violations++ == 0) out.first_violation = what;
  };
  for (int c = 0; c < cases; ++c) {
    const int N = static_cast<int>(rng.uniform_int(1, 200));
    std::vector<double> betas(static_cast<std::size_t>(N));
    for (double& b : betas) b = rng.uniform(1e-4, 0.5);
    if (rng.uniform() < 0.5) std::sort(betas.begin(), betas.end());
    const NoiseSchedule s = schedule_from_betas(betas, ScheduleOptions{1.0});
    const StepMapper sched = StepMapper::from_schedule(s);
    const StepMapper lin = StepMapper::linear(N);

    double p1 = rng.uniform(), p2 = rng.uniform();
    // Exercise the endpoints and exact level boundaries too.
    if (c % 10 == 0) p1 = 0.0;
    if (c % 10 == 1) p2 = 1.0;
    if (c % 10 == 2) p1 = 1.0 - s.alpha_bar_at(static_cast<int>(rng.uniform_int(1, N)));
    if (p1 > p2) std::swap(p1, p2);

    for (const StepMapper* m : {&lin, &sched}) {
      const int a = map_step(p1, *m), b = map_step(p2, *m);
      ++out.cases;
      std::ostringstream os;
      os << to_string(m->kind) << " N=" << N << " p1=" << p1 << " p2=" << p2 << " -> " << a << ", " << b;
      if (a < 0 || a > N || b < 0 || b > N) fail("range: " + os.str());
      if (a > b) fail("monotonicity: " + os.str());
      // Direct-definition oracle.
      for (double p : {p1, p2}) {
        int want = 0;
        if (m->kind == StepMapKind::linear) {
          want = std::min(N, static_cast<int>(std::floor(N * p + 0.5)));
        } else {
          for (int n = 1; n <= N; ++n)
            if (1.0 - s.alpha_bar_at(n) <= p) want = n;
        }
        if (map_step(p, *m) != want) fail("definition: " + os.str() + " expected " + std::to_string(want));
      }
    }
  }
  return out;
}

// --- metrics and thresholds -------------------------------------------------------------------

Metrics brute_force_metrics(const std::vector<int>& predicted, const std::vector<int>& truth) {
  Metrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++m.tp;
    if (predicted[i] == 1 && truth[i] == 0) ++m.fp;
    if (predicted[i] == 0 && truth[i] == 1) ++m.fn;
    if (predicted[i] == 0 && truth[i] == 0) ++m.tn;
  }
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

PropertyCount metric_pairs(int length) {
  PropertyCount out;
  const int n = 1 << length;
  for (int pm = 0; pm < n; ++pm) {
    for (int tm = 0; tm < n; ++tm) {
      std::vector<int> pred(static_cast<std::size_t>(length)), truth(static_cast<std::size_t>(length));
      for (int i = 0; i < length; ++i) {
        pred[i] = (pm >> i) & 1;
        truth[i] = (tm >> i) & 1;
      }
      const Metrics a = evaluate(pred, truth);
      const Metrics b = brute_force_metrics(pred, truth);
      ++out.cases;
      if (a.tp != b.tp || a.fp != b.fp || a.fn != b.fn || a.tn != b.tn || a.precision != b.precision ||
          a.recall != b.recall || a.f1 != b.f1) {
        if (out.violations++ == 0) out.first_violation = "pred mask " + std::to_string(pm) + " truth mask " + std::to_string(tm);
      }
    }
  }
  return out;
}

double exhaustive_best_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
  // Thresholds are non-negative, so every achievable prediction set is {score > c} for
  // c = 0 or some non-negative observed score.
  std::vector<double> cuts{0.0};
  for (double s : scores)
    if (s >= 0.0) cuts.push_back(s);
  double best = 0.0;
  for (double c : cuts) {
    std::vector<int> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > c ? 1 : 0;
    best = std::max(best, brute_force_metrics(pred, labels).f1);
  }
  return best;
}

PropertyCount threshold_search(int cases, std::uint64_t seed) {
  RngStream rng(seed);
  PropertyCount out;
  for (int c = 0; c < cases; ++c) {
    const Index n = pick(rng, 2, 40);
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> labels(static_cast<std::size_t>(n));
    const bool ties = c % 3 == 0;
    for (Index i = 0; i < n; ++i) {
      scores[i] = ties ? std::round(rng.uniform(0.0, 5.0)) : rng.uniform(0.0, 3.0);
      labels[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    if (std::find(labels.begin(), labels.end(), 1) == labels.end()) labels[pick(rng, 0, n - 1)] = 1;

    const ThresholdChoice choice = select_threshold_best_f1(scores, labels);
    std::vector<int> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] > choice.threshold ? 1 : 0;
    const double achieved = brute_force_metrics(pred, labels).f1;
    const double best = exhaustive_best_f1(scores, labels);
    ++out.cases;
    if (std::abs(achieved - best) > 1e-12 || std::abs(choice.f1 - best) > 1e-12) {
      if (out.violations++ == 0) {
        out.first_violation = "case " + std::to_string(c) + ": achieved " + std::to_string(achieved) + " exhaustive " +
                              std::to_string(best);
      }
    }
  }
  return out;
}

// --- data -----------------------------------------------------------------------------------------

namespace {

double population_stddev(const std::vector<double>& x) {
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

std::vector<double> column(const Tensor<float>& values, Index d) {
  std::vector<double> out(static_cast<std::size_t>(values.dim(0)));
  for (Index t = 0; t < values.dim(0); ++t) out[t] = values.at({t, d});
  return out;
}

}  // namespace

PropertyCount data_properties(int configs, std::uint64_t seed) {
  RngStream rng(seed);
  PropertyCount out;
  const auto check = [&](bool ok, const std::string& what) {
    ++out.cases;
    if (!ok && out.violations++ == 0) out.first_violation = what;
  };
  // Infeasible draws (e.g. contextual points on a very short series) are redrawn so that
  // `configs` datasets are verified.
  for (int c = 0; out.inputs < configs; ++c) {
    if (out.rejected > configs) {
      check(false, "generator rejected more configurations than it accepted");
      break;
    }
    const std::string tag = "config " + std::to_string(c) + ": ";
    const Index T = pick(rng, 100, 3000);
    const Index D = pick(rng, 1, 6);
    AnomalySpec spec;
    spec.kind = all_anomaly_kinds()[static_cast<std::size_t>(c) % all_anomaly_kinds().size()];
    spec.ratio = c % 7 == 0 ? 0.0 : rng.uniform(0.001, 0.08);
    spec.dimension = pick(rng, 0, D - 1);
    const std::uint64_t ds_seed = rng.substream("dataset").substream(static_cast<std::uint64_t>(c)).seed();
    SeriesDataset ds;
    try {
      ds = generate_synthetic(spec, T, D, ds_seed);
    } catch (const SpecError&) {
      ++out.rejected;
      continue;
    }
    ++out.inputs;

    // Split: 2:1:2 within one timepoint, contiguous and covering.
    const Index ntr = ds.end(Partition::train) - ds.begin(Partition::train);
    const Index nva = ds.end(Partition::val) - ds.begin(Partition::val);
    const Index nte = ds.end(Partition::test) - ds.begin(Partition::test);
    check(ds.begin(Partition::train) == 0 && ds.end(Partition::train) == ds.begin(Partition::val) &&
              ds.end(Partition::val) == ds.begin(Partition::test) && ds.end(Partition::test) == T,
          tag + "split not contiguous");
    check(std::abs(static_cast<double>(ntr) - 0.4 * T) <= 1.0 && std::abs(static_cast<double>(nva) - 0.2 * T) <= 1.0 &&
              std::abs(static_cast<double>(nte) - 0.4 * T) <= 1.0,
          tag + "split ratio");

    // Anomalies: ceil(ratio * T) labels, none in train, only in the affected dimension.
    const Index labeled = std::accumulate(ds.labels.begin(), ds.labels.end(), Index{0});
    const auto expected = static_cast<Index>(std::ceil(spec.ratio * static_cast<double>(T) - 1e-9));
    check(labeled == expected, tag + "labeled " + std::to_string(labeled) + " expected " + std::to_string(expected));
    const auto train_labels = ds.partition_labels(Partition::train);
    check(std::count(train_labels.begin(), train_labels.end(), 1) == 0, tag + "anomaly in training partition");

    AnomalySpec clean_spec = spec;
    clean_spec.ratio = 0.0;
    const SeriesDataset clean = generate_synthetic(clean_spec, T, D, ds_seed);
    const std::vector<double> base = column(clean.values, spec.dimension);
    const double sigma = population_stddev(base);
    bool only_affected = true, unlabeled_untouched = true, magnitude_ok = true;
    for (Index t = 0; t < T; ++t) {
      for (Index d = 0; d < D; ++d) {
        const double diff = ds.values.at({t, d}) - clean.values.at({t, d});
        if (d != spec.dimension && diff != 0.0) only_affected = false;
        if (d == spec.dimension && ds.labels[t] == 0 && diff != 0.0) unlabeled_untouched = false;
        if (d == spec.dimension && ds.labels[t] == 1 && spec.kind == AnomalyKind::global_point &&
            std::abs(diff) < 3.0 * sigma * (1 - 1e-6)) {
          magnitude_ok = false;
        }
      }
    }
    check(only_affected, tag + "values changed outside the affected dimension");
    check(unlabeled_untouched, tag + "unlabeled timepoint modified");
    check(magnitude_ok, tag + "global spike below 3 sigma");
    if (spec.kind == AnomalyKind::contextual_point && labeled > 0) {
      const std::vector<double> x = column(ds.values, spec.dimension);
      const double lo = *std::min_element(base.begin(), base.end());
      const double hi = *std::max_element(base.begin(), base.end());
      bool in_range = true;
      for (Index t = 0; t < T; ++t)
        if (ds.labels[t] == 1 && (x[t] < lo - 1e-6 || x[t] > hi + 1e-6)) in_range = false;
      check(in_range, tag + "contextual anomaly outside the global range");
    }

    // Normalization: training partition spans exactly [0, 1]; idempotent on its own stats.
    const Normalized nz = normalize(ds, NormalizeOptions{false});
    const Tensor<float> train = nz.dataset.partition_values(Partition::train);
    bool range_ok = true;
    for (Index d = 0; d < D; ++d) {
      const std::vector<double> col = column(train, d);
      const double mn = *std::min_element(col.begin(), col.end()), mx = *std::max_element(col.begin(), col.end());
      if (std::abs(mn) > 1e-6 || std::abs(mx - 1.0) > 1e-6) range_ok = false;
    }
    check(range_ok, tag + "normalized training range is not [0, 1]");
    const Normalized again = normalize(nz.dataset, NormalizeOptions{false});
    check((again.dataset.values.data() - nz.dataset.values.data()).cwiseAbs().maxCoeff() < 1e-6,
          tag + "normalization not idempotent");

    // Windows: count formula, contents and uncovered tail.
    const Index w = pick(rng, 1, std::min<Index>(T, 200));
    const Index l = pick(rng, 1, 60);
    const WindowSet ws = make_windows(ds.values, w, l);
    const Index k = (T - w) / l + 1;
    check(ws.count() == k && ws.windows.dim(0) == k, tag + "window count");
    bool aligned = true;
    for (Index j = 0; j < ws.count(); ++j) {
      if (ws.origins[j] != j * l) aligned = false;
      for (Index o = 0; o < w; o += std::max<Index>(1, w / 7))
        for (Index d = 0; d < D; ++d)
          if (ws.windows.at({j, o, d}) != ds.values.at({ws.origins[j] + o, d})) aligned = false;
    }
    check(aligned, tag + "window contents misaligned");
    const Index covered_to = (k - 1) * l + w;
    bool tail_ok = static_cast<Index>(ws.uncovered.size()) == T - covered_to;
    for (std::size_t i = 0; tail_ok && i < ws.uncovered.size(); ++i)
      tail_ok = ws.uncovered[i] == covered_to + static_cast<Index>(i);
    check(tail_ok, tag + "uncovered tail");
  }
  return out;
}

}  // namespace diffgan::testing
