#pragma once

#include "diffgan/detect.hpp"
#include "diffgan/gan.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffgan {

/// Invalid configuration file or value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Scale { desk, paper };

std::string to_string(Scale s);
Scale parse_scale(const std::string& text);

/// Every tunable of a run. Defaults reproduce the reference setup (N = 100, lambda = 0.7,
/// baselines at M = 20, 50, 80) at paper scale.
struct ExperimentConfig {
  /// Paper-scale defaults (apply_scale(Scale::paper)).
  ExperimentConfig();

  // [experiment]
  std::uint64_t seed = 0;
  std::string out = "runs";
  Scale scale = Scale::paper;
  /// Seeds per benchmark cell (seed, seed+1, ...).
  int repeats = 1;

  // [data]
  /// Dataset CSV; empty means synthetic datasets from `kinds`.
  std::string dataset;
  std::vector<AnomalyKind> kinds = all_anomaly_kinds();
  Index timesteps = 50000;
  Index dims = 5;
  bool strict_normalization = false;
  AnomalySpec anomaly;

  // [window]
  Index window = 64;
  Index train_stride = 1;

  // [schedule]
  int steps = 100;
  /// Unset: the standard 1000-step endpoints (1e-4, 0.02) scaled by 1000 / steps.
  std::optional<double> beta_start;
  std::optional<double> beta_end;
  ScheduleShape schedule_shape = ScheduleShape::linear;

  // [denoiser], [generator], [discriminator], [gan]
  DenoiserConfig denoiser;
  DenoiserTrainOptions denoiser_train;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  GanTrainOptions gan;
  StepMapKind mapper = StepMapKind::schedule;

  // [detect]
  /// 0 means window / 2.
  Index detect_stride = 0;
  Aggregation aggregation = Aggregation::mean;
  ThresholdStrategy threshold = ThresholdStrategy::best_f1;
  double quantile = 0.99;
  bool point_adjust = false;
  DenoiseVariant detect_variant = DenoiseVariant::ddpm;
  Index detect_batch = 64;

  // [benchmark]
  std::vector<int> baseline_steps{20, 50, 80};
  std::vector<int> sweep_steps{5, 10, 20, 40, 60, 80, 100};

  double resolved_beta_start() const { return beta_start.value_or(1e-4 * 1000.0 / steps); }
  double resolved_beta_end() const { return beta_end.value_or(0.02 * 1000.0 / steps); }
  Index resolved_detect_stride() const { return detect_stride > 0 ? detect_stride : std::max<Index>(1, window / 2); }

  /// Cross-field checks (window divisibility, ranges).
  void validate() const;
};

/// Keys controlled by --scale unless set explicitly: data.timesteps, denoiser.epochs,
/// gan.epochs, gan.max_batches_per_epoch.
void apply_scale(ExperimentConfig& cfg, Scale scale, const std::set<std::string>& explicit_keys = {});

struct ParsedConfig {
  ExperimentConfig config;
  /// "section.key" entries present in the file.
  std::set<std::string> explicit_keys;
};

/// INI text with [section] headers and key = value lines. Unknown sections or keys are errors.
ParsedConfig parse_config(const std::string& text);
ParsedConfig load_config(const std::filesystem::path& path);

/// Every key, in a fixed order; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace diffgan
