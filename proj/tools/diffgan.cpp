#include "diffgan/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace diffgan;

namespace {

/// Bad arguments or inputs; exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::string> scale;
  std::optional<Index> timesteps;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "INI config file (defaults otherwise)");
  cmd->add_option("--seed", a.seed, "root seed");
  cmd->add_option("--out", a.out, "output directory");
  cmd->add_option("--scale", a.scale, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--timesteps", a.timesteps, "rows per synthetic dataset")->check(CLI::PositiveNumber);
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: '" + path + "'");
}

/// Config file (or defaults, or `fallback_text`), then --scale, then the remaining flags.
ExperimentConfig resolve_config(const CommonArgs& a, const std::string& fallback_text = {}) {
  ParsedConfig parsed;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    parsed = load_config(a.config);
  } else if (!fallback_text.empty()) {
    parsed = parse_config(fallback_text);
  }
  ExperimentConfig& cfg = parsed.config;
  if (a.scale) apply_scale(cfg, parse_scale(*a.scale), parsed.explicit_keys);
  if (a.timesteps) cfg.timesteps = *a.timesteps;
  if (a.seed) cfg.seed = *a.seed;
  if (!a.out.empty()) cfg.out = a.out;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

// --- commands -----------------------------------------------------------------------------

void cmd_generate(const CommonArgs& a) {
  const ExperimentConfig cfg = resolve_config(a);
  const fs::path dir = out_dir(cfg);
  const RngStream root(cfg.seed);
  for (std::size_t i = 0; i < cfg.kinds.size(); ++i) {
    // Same seeds as the benchmark uses for repeat 0.
    const SeriesDataset ds = synthetic_dataset(cfg, cfg.kinds[i], root.substream("dataset").substream(i).seed());
    const fs::path path = dir / (ds.name + ".csv");
    save_dataset(ds, path);
    std::cerr << "wrote " << path.string() << " (" << ds.length() << " x " << ds.dims() << ")\n";
  }
}

void cmd_train_denoiser(const CommonArgs& a, const std::string& data) {
  require_file(data, "dataset");
  const ExperimentConfig cfg = resolve_config(a);
  const fs::path dir = out_dir(cfg);
  const PreparedDataset prepared = prepare_dataset(load_dataset(data), cfg, &std::cerr);
  const std::uint64_t seed = RngStream(cfg.seed).substream("denoiser").seed();
  const DenoiserTrainResult r = fit_denoiser(prepared, cfg, seed, &std::cerr);
  save_bundle(make_bundle(cfg, prepared, r, nullptr, cfg.seed), dir / "denoiser.dgan");
  write_denoiser_history(r, dir / "denoiser_history.csv");
  std::cerr << "wrote " << (dir / "denoiser.dgan").string() << '\n';
}

void cmd_train_gan(const CommonArgs& a, const std::string& data, const std::string& denoiser_path) {
  require_file(data, "dataset");
  require_file(denoiser_path, "denoiser checkpoint");
  const ModelBundle base = load_bundle(denoiser_path);
  const ExperimentConfig cfg = resolve_config(a, base.config_text);
  const fs::path dir = out_dir(cfg);
  const PreparedDataset prepared = prepare_dataset(load_dataset(data), cfg, &std::cerr);
  const std::uint64_t seed = RngStream(cfg.seed).substream("gan").seed();
  const GanTrainResult gan = fit_gan(prepared, cfg, base.denoiser, seed, &std::cerr);

  ModelBundle bundle = base;
  bundle.controller = gan.controller;
  bundle.config_text = serialize_config(cfg);
  bundle.optimizers.insert_or_assign("generator", gan.optimizer_generator);
  bundle.optimizers.insert_or_assign("discriminator", gan.optimizer_discriminator);
  save_bundle(bundle, dir / "bundle.dgan");
  write_gan_history(gan.history, dir / "gan_history.csv");
  std::cerr << "wrote " << (dir / "bundle.dgan").string() << '\n';
}

struct DetectArgs {
  std::string bundle;
  std::string data;
  std::string mode = "diffgan";
  std::optional<int> steps;
  std::optional<double> threshold;
  std::string partition = "test";
  bool point_adjust = false;
  std::string emit_curve;
};

Partition parse_partition(const std::string& p) {
  if (p == "train") return Partition::train;
  if (p == "val") return Partition::val;
  return Partition::test;
}

void cmd_detect(const CommonArgs& a, const DetectArgs& d) {
  require_file(d.bundle, "bundle");
  require_file(d.data, "dataset");
  const ModelBundle bundle = load_bundle(d.bundle);
  ExperimentConfig cfg = resolve_config(a, bundle.config_text);
  if (d.point_adjust) cfg.point_adjust = true;

  DetectMode mode;
  if (d.mode == "diffusion") {
    if (!d.steps) throw UsageError("--mode diffusion requires --steps");
    if (*d.steps < 1 || *d.steps > bundle.denoiser.schedule.steps)
      throw UsageError("--steps must be in [1, " + std::to_string(bundle.denoiser.schedule.steps) + "]");
    mode = {Method::diffusion, *d.steps};
  } else if (!bundle.controller) {
    throw UsageError("bundle '" + d.bundle + "' has no generator/discriminator; train-gan first or use --mode diffusion");
  }
  if (d.threshold && *d.threshold < 0) throw UsageError("--threshold must be >= 0");

  SeriesDataset ds = load_dataset(d.data);
  if (ds.dims() != bundle.denoiser.config.channels)
    throw UsageError("dataset has " + std::to_string(ds.dims()) + " dimensions; bundle expects " +
                     std::to_string(bundle.denoiser.config.channels));
  ds.values = apply_normalization(ds.values, bundle.normalization);
  const fs::path dir = out_dir(cfg);
  const std::uint64_t seed = RngStream(cfg.seed).substream("detect").seed();

  nlohmann::json doc;
  DetectionReport report;
  Index offset = 0;
  if (d.threshold || d.partition == "all") {
    // Fixed threshold, or a bare series without a validation split: score the requested range directly.
    const bool all = d.partition == "all";
    const Partition part = parse_partition(d.partition);
    const Tensor<float> values = all ? ds.values : ds.partition_values(part);
    const std::vector<int> labels = all ? ds.labels : ds.partition_labels(part);
    offset = all ? 0 : ds.begin(part);
    const Reconstructor rec = make_reconstructor(bundle, mode, cfg.detect_variant, seed);
    const ScoreSeries scores = score_series(values, rec, scoring_options(cfg));
    double threshold = 0.0;
    std::string source = "fixed";
    if (d.threshold) {
      threshold = *d.threshold;
    } else {
      const ThresholdChoice c = select_threshold_best_f1(scores.score, labels);
      threshold = std::max(0.0, c.threshold);
      source = "best_f1_in_sample";
    }
    report = detect(scores, threshold, labels, DetectOptions{cfg.point_adjust});
    doc["threshold_source"] = source;
  } else {
    const ModeEvaluation ev = evaluate_mode(bundle, ds, mode, cfg, seed);
    report = ev.report;
    offset = ds.begin(Partition::test);
    doc["threshold_source"] = cfg.threshold == ThresholdStrategy::best_f1 ? "best_f1_validation" : "quantile_train";
    doc["threshold_degenerate"] = ev.threshold.degenerate;
    if (ev.mean_step) doc["mean_step"] = *ev.mean_step;
  }

  doc["format_version"] = 1;
  doc["mode"] = mode.label();
  doc["dataset"] = d.data;
  doc["partition"] = d.partition;
  doc["time_offset"] = offset;
  doc["report"] = to_json(report);
  write_json(doc, dir / "report.json");
  write_report_csv(report, dir / "report.csv", offset);
  if (report.metrics) {
    std::cerr << mode.label() << ": P " << report.metrics->precision << " R " << report.metrics->recall << " F1 "
              << report.metrics->f1 << " threshold " << report.threshold << '\n';
  }

  if (!d.emit_curve.empty()) {
    std::vector<int> steps;
    for (int m : cfg.sweep_steps)
      if (m <= bundle.denoiser.schedule.steps) steps.push_back(m);
    const auto curve = step_curve(bundle, ds, steps, cfg, seed);
    std::ofstream out(d.emit_curve);
    if (!out) throw std::runtime_error("cannot write '" + d.emit_curve + "'");
    out << std::setprecision(17) << "steps,f1\n";
    for (const auto& pt : curve) out << pt.steps << ',' << pt.f1 << '\n';
    std::cerr << "wrote " << d.emit_curve << '\n';
  }
}

void cmd_benchmark(const CommonArgs& a, std::optional<int> repeats, bool curve, bool artifacts) {
  ExperimentConfig cfg = resolve_config(a);
  if (repeats) cfg.repeats = *repeats;
  cfg.validate();
  const fs::path dir = out_dir(cfg);
  BenchmarkOptions opts;
  opts.curve = curve;
  opts.log = &std::cerr;
  if (artifacts) opts.artifacts = dir / "artifacts";
  const BenchmarkResult r = run_benchmark(cfg, opts);
  write_benchmark_csv(r, dir / "benchmark.csv");
  write_runs_csv(r, dir / "runs.csv");
  if (curve) write_curve_csv(r.curve, dir / "curve.csv");
  std::cout << format_benchmark_table(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DiffGAN time-series anomaly detection"};
  app.require_subcommand(1);

  CommonArgs common;
  auto* gen = app.add_subcommand("generate", "write the synthetic benchmark datasets");
  add_common(gen, common);

  std::string data;
  auto* td = app.add_subcommand("train-denoiser", "train the noise-prediction network");
  add_common(td, common);
  td->add_option("--data", data, "dataset CSV")->required();

  std::string denoiser_path;
  auto* tg = app.add_subcommand("train-gan", "train generator and discriminator against a trained denoiser");
  add_common(tg, common);
  tg->add_option("--data", data, "dataset CSV")->required();
  tg->add_option("--denoiser", denoiser_path, "denoiser checkpoint from train-denoiser")->required();

  DetectArgs det;
  auto* dt = app.add_subcommand("detect", "score a series and report detections");
  add_common(dt, common);
  dt->add_option("--bundle", det.bundle, "model bundle")->required();
  dt->add_option("--data", det.data, "series CSV")->required();
  dt->add_option("--mode", det.mode, "diffgan | diffusion")->check(CLI::IsMember({"diffgan", "diffusion"}));
  dt->add_option("--steps", det.steps, "fixed step count for --mode diffusion")->check(CLI::Range(1, 1 << 30));
  dt->add_option("--threshold", det.threshold, "fixed threshold (skips calibration)");
  dt->add_option("--partition", det.partition, "test | val | train | all")
      ->check(CLI::IsMember({"test", "val", "train", "all"}));
  dt->add_flag("--point-adjust", det.point_adjust, "segment-level point adjustment");
  dt->add_option("--emit-curve", det.emit_curve, "write steps,f1 for the configured step sweep");

  std::optional<int> repeats;
  bool curve = false;
  bool artifacts = false;
  auto* bm = app.add_subcommand("benchmark", "train and evaluate every dataset x method");
  add_common(bm, common);
  bm->add_option("--repeats", repeats, "seeds per cell")->check(CLI::PositiveNumber);
  bm->add_flag("--emit-curve", curve, "also sweep the fixed step count (curve.csv)");
  bm->add_flag("--artifacts", artifacts, "keep bundles and loss histories");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen) cmd_generate(common);
    else if (*td) cmd_train_denoiser(common, data);
    else if (*tg) cmd_train_gan(common, data, denoiser_path);
    else if (*dt) cmd_detect(common, det);
    else if (*bm) cmd_benchmark(common, repeats, curve, artifacts);
    return 0;
  } catch (const std::logic_error& e) {
    // invalid_argument, domain_error, out_of_range: bad configuration or arguments.
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DegenerateDimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
