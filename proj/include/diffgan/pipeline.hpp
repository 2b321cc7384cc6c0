#pragma once

#include "diffgan/bundle.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace diffgan {

NoiseSchedule make_schedule(const ExperimentConfig& cfg);

/// Synthetic dataset of one anomaly kind under the config's generator settings.
SeriesDataset synthetic_dataset(const ExperimentConfig& cfg, AnomalyKind kind, std::uint64_t seed);

struct PreparedDataset {
  SeriesDataset raw;
  Normalized normalized;
  WindowSet train_windows;
};

PreparedDataset prepare_dataset(const SeriesDataset& ds, const ExperimentConfig& cfg, std::ostream* log = nullptr);

DenoiserTrainResult fit_denoiser(const PreparedDataset& data, const ExperimentConfig& cfg, std::uint64_t seed,
                                 std::ostream* log = nullptr);

GanTrainResult fit_gan(const PreparedDataset& data, const ExperimentConfig& cfg, const TrainedDenoiser& denoiser,
                       std::uint64_t seed, std::ostream* log = nullptr);

// --- detection modes ------------------------------------------------------------------

enum class Method { diffgan, diffusion };

struct DetectMode {
  Method method = Method::diffgan;
  /// Fixed step count M for the diffusion baseline.
  int steps = 0;

  /// "DiffGAN" or "Diffusion-M".
  std::string label() const;
};

/// Window reconstructor for a mode. Stateful: consumes its own noise streams
/// derived from `seed` (forward noise and sampler noise are separate).
Reconstructor make_reconstructor(const ModelBundle& bundle, DetectMode mode, DenoiseVariant variant, std::uint64_t seed);

ScoringOptions scoring_options(const ExperimentConfig& cfg);

struct ModeEvaluation {
  DetectMode mode;
  ThresholdChoice threshold;
  /// Test partition.
  DetectionReport report;
  /// Mean f(D(G(W))) over validation windows (DiffGAN only).
  std::optional<double> mean_step;
};

/// Scores the validation and test partitions of a normalized dataset, picks the
/// threshold per the config (best F1 on validation or a quantile of training
/// scores) and reports test metrics.
ModeEvaluation evaluate_mode(const ModelBundle& bundle, const SeriesDataset& normalized, DetectMode mode,
                             const ExperimentConfig& cfg, std::uint64_t seed);

struct CurvePoint {
  int steps = 0;
  double f1 = 0.0;
};

/// Test F1 of the diffusion baseline at each step count.
std::vector<CurvePoint> step_curve(const ModelBundle& bundle, const SeriesDataset& normalized,
                                   const std::vector<int>& steps, const ExperimentConfig& cfg, std::uint64_t seed);

// --- benchmark ------------------------------------------------------------------------------

/// F1 values published for the reference implementation (5 datasets x 4 methods).
std::optional<double> published_f1(const std::string& dataset, const std::string& method);

struct BenchmarkRun {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  Metrics metrics;
  double threshold = 0.0;
  std::optional<double> mean_step;
};

struct BenchmarkRow {
  std::string dataset;
  std::string method;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> mean_step;
  std::optional<double> published_f1;
};

struct CurveRow {
  std::string dataset;
  int steps = 0;
  double f1 = 0.0;  ///< mean over seeds
};

struct BenchmarkResult {
  std::vector<BenchmarkRun> runs;
  std::vector<BenchmarkRow> table;
  std::vector<CurveRow> curve;
};

struct BenchmarkOptions {
  bool curve = false;
  /// Restrict the sweep to these dataset names; empty means every dataset.
  std::set<std::string> curve_datasets;
  /// Write bundles and loss histories under this directory when set.
  std::optional<std::filesystem::path> artifacts;
  std::ostream* log = nullptr;
};

/// Every configured dataset x {Diffusion-M for each baseline M, DiffGAN}, repeated over
/// seeds seed, seed+1, ...; rows are means over the repeats.
BenchmarkResult run_benchmark(const ExperimentConfig& cfg, const BenchmarkOptions& opts = {});

void write_benchmark_csv(const BenchmarkResult& r, const std::filesystem::path& path);
void write_runs_csv(const BenchmarkResult& r, const std::filesystem::path& path);
void write_curve_csv(const std::vector<CurveRow>& rows, const std::filesystem::path& path);
std::string format_benchmark_table(const BenchmarkResult& r);

void write_denoiser_history(const DenoiserTrainResult& r, const std::filesystem::path& path);
void write_gan_history(const GanHistory& h, const std::filesystem::path& path);

/// Bundle for a trained denoiser and optional controller.
ModelBundle make_bundle(const ExperimentConfig& cfg, const PreparedDataset& data, const DenoiserTrainResult& denoiser,
                        const GanTrainResult* gan, std::uint64_t seed);

}  // namespace diffgan
