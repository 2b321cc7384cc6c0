#include "diffgan/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>

namespace diffgan {

NoiseSchedule make_schedule(const ExperimentConfig& cfg) {
  return build_schedule(cfg.steps, cfg.resolved_beta_start(), cfg.resolved_beta_end(), cfg.schedule_shape);
}

SeriesDataset synthetic_dataset(const ExperimentConfig& cfg, AnomalyKind kind, std::uint64_t seed) {
  AnomalySpec spec = cfg.anomaly;
  spec.kind = kind;
  SeriesDataset ds = generate_synthetic(spec, cfg.timesteps, cfg.dims, seed);
  ds.name = to_string(kind);
  return ds;
}

PreparedDataset prepare_dataset(const SeriesDataset& ds, const ExperimentConfig& cfg, std::ostream* log) {
  PreparedDataset p;
  p.raw = ds;
  p.normalized = normalize(ds, NormalizeOptions{cfg.strict_normalization});
  if (log) {
    for (std::size_t d = 0; d < p.normalized.stats.degenerate.size(); ++d)
      if (p.normalized.stats.degenerate[d]) *log << "warning: dimension " << d << " is constant; mapped to 0.5\n";
  }
  p.train_windows = make_windows(p.normalized.dataset.partition_values(Partition::train), cfg.window, cfg.train_stride);
  return p;
}

namespace {

DenoiserConfig denoiser_config(const ExperimentConfig& cfg, Index channels) {
  DenoiserConfig c = cfg.denoiser;
  c.window = cfg.window;
  c.channels = channels;
  return c;
}

}  // namespace

DenoiserTrainResult fit_denoiser(const PreparedDataset& data, const ExperimentConfig& cfg, std::uint64_t seed,
                                 std::ostream* log) {
  DenoiserTrainOptions opts = cfg.denoiser_train;
  opts.batch_size = std::min(opts.batch_size, data.train_windows.count());
  opts.log = log;
  return train_denoiser(data.train_windows, denoiser_config(cfg, data.raw.dims()), make_schedule(cfg), opts, seed);
}

GanTrainResult fit_gan(const PreparedDataset& data, const ExperimentConfig& cfg, const TrainedDenoiser& denoiser,
                       std::uint64_t seed, std::ostream* log) {
  GeneratorConfig g = cfg.generator;
  g.window = cfg.window;
  g.channels = data.raw.dims();
  DiscriminatorConfig d = cfg.discriminator;
  d.window = cfg.window;
  d.channels = data.raw.dims();
  GanTrainOptions opts = cfg.gan;
  opts.batch_size = std::min(opts.batch_size, data.train_windows.count());
  opts.log = log;
  const StepMapper mapper = cfg.mapper == StepMapKind::linear ? StepMapper::linear(denoiser.schedule.steps)
                                                              : StepMapper::from_schedule(denoiser.schedule);
  return train_gan(data.train_windows, g, d, denoiser, mapper, opts, seed);
}

ModelBundle make_bundle(const ExperimentConfig& cfg, const PreparedDataset& data, const DenoiserTrainResult& denoiser,
                        const GanTrainResult* gan, std::uint64_t seed) {
  ModelBundle b;
  b.denoiser = denoiser.denoiser;
  b.normalization = data.normalized.stats;
  b.config_text = serialize_config(cfg);
  b.seed = seed;
  b.extra = {{"dataset", data.raw.name}};
  b.optimizers.emplace("denoiser", denoiser.optimizer);
  if (gan) {
    b.controller = gan->controller;
    b.optimizers.emplace("generator", gan->optimizer_generator);
    b.optimizers.emplace("discriminator", gan->optimizer_discriminator);
  }
  return b;
}

// --- detection --------------------------------------------------------------------------

std::string DetectMode::label() const {
  return method == Method::diffgan ? "DiffGAN" : "Diffusion-" + std::to_string(steps);
}

Reconstructor make_reconstructor(const ModelBundle& bundle, DetectMode mode, DenoiseVariant variant, std::uint64_t seed) {
  const RngStream root(seed);
  auto data_rng = std::make_shared<RngStream>(root.substream("data"));
  auto sampler_rng = std::make_shared<RngStream>(root.substream("sampler"));
  const TrainedDenoiser* denoiser = &bundle.denoiser;
  if (mode.method == Method::diffusion) {
    bundle.denoiser.schedule.check(mode.steps, 1);
    return [denoiser, mode, data_rng, sampler_rng](const Tensor<float>& x) {
      return partial_diffusion_reconstruct(x, mode.steps, predictor_of(*denoiser), denoiser->schedule, *data_rng,
                                           *sampler_rng);
    };
  }
  if (!bundle.controller) throw std::invalid_argument("detect: bundle has no generator/discriminator for DiffGAN mode");
  const Controller* ctl = &*bundle.controller;
  return [denoiser, ctl, variant, sampler_rng](const Tensor<float>& x) {
    return diffgan_reconstruct(*ctl, *denoiser, x, variant, *sampler_rng);
  };
}

ScoringOptions scoring_options(const ExperimentConfig& cfg) {
  ScoringOptions o;
  o.window = cfg.window;
  o.stride = cfg.resolved_detect_stride();
  o.aggregation = cfg.aggregation;
  o.batch_size = cfg.detect_batch;
  return o;
}

ModeEvaluation evaluate_mode(const ModelBundle& bundle, const SeriesDataset& normalized, DetectMode mode,
                             const ExperimentConfig& cfg, std::uint64_t seed) {
  const RngStream root(seed);
  const ScoringOptions so = scoring_options(cfg);
  const auto score_partition = [&](Partition p, const char* stream) {
    const Reconstructor rec = make_reconstructor(bundle, mode, cfg.detect_variant, root.substream(stream).seed());
    return score_series(normalized.partition_values(p), rec, so);
  };

  ModeEvaluation ev;
  ev.mode = mode;
  if (cfg.threshold == ThresholdStrategy::best_f1) {
    const ScoreSeries val = score_partition(Partition::val, "val");
    ev.threshold = select_threshold_best_f1(val.score, normalized.partition_labels(Partition::val));
  } else {
    const ScoreSeries train = score_partition(Partition::train, "train");
    ev.threshold = select_threshold_quantile(train.score, normalized.partition_labels(Partition::train), cfg.quantile);
  }
  const ScoreSeries test = score_partition(Partition::test, "test");
  ev.report = detect(test, std::max(0.0, ev.threshold.threshold), normalized.partition_labels(Partition::test),
                     DetectOptions{cfg.point_adjust});

  if (mode.method == Method::diffgan) {
    const WindowSet vw = make_covering_windows(normalized.partition_values(Partition::val), so.window, so.stride);
    const auto steps = bundle.controller->steps(vw.windows);
    ev.mean_step = std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
  }
  return ev;
}

std::vector<CurvePoint> step_curve(const ModelBundle& bundle, const SeriesDataset& normalized,
                                   const std::vector<int>& steps, const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<CurvePoint> out;
  for (int m : steps) {
    const ModeEvaluation ev = evaluate_mode(bundle, normalized, DetectMode{Method::diffusion, m}, cfg, seed);
    out.push_back({m, ev.report.metrics->f1});
  }
  return out;
}

// --- benchmark ------------------------------------------------------------------------------

std::optional<double> published_f1(const std::string& dataset, const std::string& method) {
  static const std::map<std::string, std::map<std::string, double>> table = {
      {"global", {{"Diffusion-20", 0.8762}, {"Diffusion-50", 0.8617}, {"Diffusion-80", 0.8582}, {"DiffGAN", 0.8877}}},
      {"contextual", {{"Diffusion-20", 0.7234}, {"Diffusion-50", 0.7324}, {"Diffusion-80", 0.7234}, {"DiffGAN", 0.7465}}},
      {"seasonal", {{"Diffusion-20", 0.8172}, {"Diffusion-50", 0.8256}, {"Diffusion-80", 0.8261}, {"DiffGAN", 0.8343}}},
      {"shapelet", {{"Diffusion-20", 0.4843}, {"Diffusion-50", 0.4795}, {"Diffusion-80", 0.4922}, {"DiffGAN", 0.5447}}},
      {"trend", {{"Diffusion-20", 0.6054}, {"Diffusion-50", 0.5485}, {"Diffusion-80", 0.3097}, {"DiffGAN", 0.5478}}},
  };
  const auto d = table.find(dataset);
  if (d == table.end()) return std::nullopt;
  const auto m = d->second.find(method);
  if (m == d->second.end()) return std::nullopt;
  return m->second;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << *v;
  return os.str();
}

}  // namespace

BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const BenchmarkOptions& opts) {
  cfg.validate();
  std::vector<SeriesDataset> sources;
  const bool from_file = !cfg.dataset.empty();
  if (from_file) sources.push_back(load_dataset(cfg.dataset));

  std::vector<DetectMode> modes;
  for (int m : cfg.baseline_steps) modes.push_back({Method::diffusion, m});
  modes.push_back({Method::diffgan, 0});

  BenchmarkResult result;
  std::map<std::pair<std::string, int>, std::vector<double>> curve_acc;
  std::vector<std::string> dataset_order;
  const std::size_t n_sets = from_file ? 1 : cfg.kinds.size();
  for (std::size_t di = 0; di < n_sets; ++di) {
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
      const RngStream root(seed);
      const SeriesDataset ds = from_file ? sources.front()
                                         : synthetic_dataset(cfg, cfg.kinds[di], root.substream("dataset").substream(di).seed());
      if (rep == 0) dataset_order.push_back(ds.name);
      if (opts.log) *opts.log << "== " << ds.name << " seed " << seed << '\n';

      const PreparedDataset data = prepare_dataset(ds, cfg, opts.log);
      const DenoiserTrainResult den = fit_denoiser(data, cfg, root.substream("denoiser").seed(), opts.log);
      const GanTrainResult gan = fit_gan(data, cfg, den.denoiser, root.substream("gan").seed(), opts.log);
      const ModelBundle bundle = make_bundle(cfg, data, den, &gan, seed);
      if (opts.artifacts) {
        const auto dir = *opts.artifacts / (ds.name + "_seed" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        save_bundle(bundle, dir / "bundle.dgan");
        write_denoiser_history(den, dir / "denoiser_history.csv");
        write_gan_history(gan.history, dir / "gan_history.csv");
      }

      const std::uint64_t eval_seed = root.substream("eval").seed();
      for (const DetectMode& mode : modes) {
        const ModeEvaluation ev = evaluate_mode(bundle, data.normalized.dataset, mode, cfg, eval_seed);
        result.runs.push_back({ds.name, mode.label(), seed, *ev.report.metrics, ev.threshold.threshold, ev.mean_step});
        if (opts.log) {
          *opts.log << "  " << mode.label() << " P " << ev.report.metrics->precision << " R " << ev.report.metrics->recall
                    << " F1 " << ev.report.metrics->f1;
          if (ev.mean_step) *opts.log << " mean_step " << *ev.mean_step;
          *opts.log << '\n';
        }
      }
      if (opts.curve && (opts.curve_datasets.empty() || opts.curve_datasets.count(ds.name))) {
        for (const CurvePoint& pt : step_curve(bundle, data.normalized.dataset, cfg.sweep_steps, cfg, eval_seed)) {
          curve_acc[{ds.name, pt.steps}].push_back(pt.f1);
          if (opts.log) *opts.log << "  sweep M=" << pt.steps << " F1 " << pt.f1 << '\n';
        }
      }
    }
  }

  for (const std::string& name : dataset_order) {
    for (const DetectMode& mode : modes) {
      BenchmarkRow row;
      row.dataset = name;
      row.method = mode.label();
      std::vector<double> steps;
      int n = 0;
      for (const BenchmarkRun& r : result.runs) {
        if (r.dataset != name || r.method != row.method) continue;
        row.precision += r.metrics.precision;
        row.recall += r.metrics.recall;
        row.f1 += r.metrics.f1;
        if (r.mean_step) steps.push_back(*r.mean_step);
        ++n;
      }
      row.precision /= n;
      row.recall /= n;
      row.f1 /= n;
      if (!steps.empty()) row.mean_step = std::accumulate(steps.begin(), steps.end(), 0.0) / static_cast<double>(steps.size());
      row.published_f1 = published_f1(name, row.method);
      result.table.push_back(row);
    }
    for (int m : cfg.sweep_steps) {
      const auto it = curve_acc.find({name, m});
      if (it == curve_acc.end()) continue;
      const auto& v = it->second;
      result.curve.push_back({name, m, std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size())});
    }
  }
  return result;
}

void write_benchmark_csv(const BenchmarkResult& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "dataset,method,precision,recall,f1,mean_step,published_reference_f1\n";
  for (const auto& row : r.table) {
    out << row.dataset << ',' << row.method << ',' << row.precision << ',' << row.recall << ',' << row.f1 << ','
        << opt_str(row.mean_step) << ',' << opt_str(row.published_f1) << '\n';
  }
}

void write_runs_csv(const BenchmarkResult& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "dataset,method,seed,tp,fp,fn,tn,precision,recall,f1,threshold,mean_step\n";
  for (const auto& run : r.runs) {
    const Metrics& m = run.metrics;
    out << run.dataset << ',' << run.method << ',' << run.seed << ',' << m.tp << ',' << m.fp << ',' << m.fn << ','
        << m.tn << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << run.threshold << ','
        << opt_str(run.mean_step) << '\n';
  }
}

void write_curve_csv(const std::vector<CurveRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "dataset,steps,f1\n";
  for (const auto& row : rows) out << row.dataset << ',' << row.steps << ',' << row.f1 << '\n';
}

std::string format_benchmark_table(const BenchmarkResult& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(12) << "dataset" << std::setw(14) << "method" << std::right << std::setw(10) << "P"
     << std::setw(10) << "R" << std::setw(10) << "F1" << std::setw(11) << "mean n*" << std::setw(16) << "published F1"
     << '\n';
  for (const auto& row : r.table) {
    os << std::left << std::setw(12) << row.dataset << std::setw(14) << row.method << std::right << std::setw(10)
       << row.precision << std::setw(10) << row.recall << std::setw(10) << row.f1;
    if (row.mean_step) os << std::setw(11) << std::setprecision(2) << *row.mean_step << std::setprecision(4);
    else os << std::setw(11) << "-";
    if (row.published_f1) os << std::setw(16) << *row.published_f1;
    else os << std::setw(16) << "-";
    os << '\n';
  }
  os << "published F1: reference values reported for the original implementation at 50,000 timesteps; "
        "not expected to match.\n";
  return os.str();
}

void write_denoiser_history(const DenoiserTrainResult& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < r.epoch_loss.size(); ++i) out << i + 1 << ',' << r.epoch_loss[i] << '\n';
}

void write_gan_history(const GanHistory& h, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch,discriminator_adversarial,generator_adversarial,reconstruction,mean_step\n";
  for (std::size_t i = 0; i < h.epoch_reconstruction.size(); ++i) {
    out << i + 1 << ',' << h.epoch_discriminator_adversarial[i] << ',' << h.epoch_generator_adversarial[i] << ','
        << h.epoch_reconstruction[i] << ',' << h.epoch_mean_step[i] << '\n';
  }
}

}  // namespace diffgan
