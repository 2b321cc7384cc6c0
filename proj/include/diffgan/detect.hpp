#pragma once

#include "diffgan/data.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffgan {

class SeriesTooShortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-timepoint anomaly scores. Timepoints no window covers have coverage 0 and a NaN score.
struct ScoreSeries {
  std::vector<double> score;
  std::vector<int> coverage;

  std::size_t size() const noexcept { return score.size(); }
  bool covered(std::size_t t) const { return coverage.at(t) > 0; }
};

enum class Aggregation { mean, median };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& text);

/// Maps a batch of windows [k, w, D] to reconstructions of the same shape.
using Reconstructor = std::function<Tensor<float>(const Tensor<float>&)>;

struct ScoringOptions {
  Index window = 64;
  Index stride = 32;
  Aggregation aggregation = Aggregation::mean;
  /// Windows per reconstructor call.
  Index batch_size = 64;
  /// Add a window aligned to the series end so every timepoint is covered.
  bool cover_tail = true;
};

/// Squared error summed over dimensions, per window offset: [k, w].
std::vector<std::vector<double>> window_errors(const Tensor<float>& windows, const Tensor<float>& reconstructions);

/// Aggregates per-window errors onto the timeline.
ScoreSeries aggregate_scores(Index length, const std::vector<Index>& origins,
                             const std::vector<std::vector<double>>& errors, Aggregation aggregation);

/// Window the series [T, D], reconstruct each window, aggregate errors per timepoint.
ScoreSeries score_series(const Tensor<float>& series, const Reconstructor& reconstruct, const ScoringOptions& opts);

// --- thresholds ----------------------------------------------------------------------

enum class ThresholdStrategy { best_f1, quantile };

std::string to_string(ThresholdStrategy s);
ThresholdStrategy parse_threshold_strategy(const std::string& text);

struct ThresholdChoice {
  double threshold = 0.0;
  /// F1 at the threshold on the scores it was chosen from (best_f1 only).
  double f1 = 0.0;
  /// All scores identical; the threshold is that value.
  bool degenerate = false;
};

/// Threshold maximizing F1 of (score > delta) over candidates: half the minimum,
/// midpoints between sorted distinct scores, and the maximum. NaN scores are skipped.
ThresholdChoice select_threshold_best_f1(const std::vector<double>& scores, const std::vector<int>& labels);

/// q-quantile (linear interpolation) of the scores whose label is 0.
ThresholdChoice select_threshold_quantile(const std::vector<double>& scores, const std::vector<int>& labels, double q);

// --- evaluation ------------------------------------------------------------------------

struct Metrics {
  Index tp = 0;
  Index fp = 0;
  Index fn = 0;
  Index tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Metrics evaluate(const std::vector<int>& predicted, const std::vector<int>& truth);

/// Marks a whole true anomaly segment as detected when any point in it is predicted.
std::vector<int> point_adjust(const std::vector<int>& predicted, const std::vector<int>& truth);

struct DetectionReport {
  double threshold = 0.0;
  ScoreSeries scores;
  std::vector<int> predicted;
  std::vector<int> labels;
  std::optional<Metrics> metrics;
  bool point_adjusted = false;
};

struct DetectOptions {
  bool point_adjust = false;
};

/// predicted[t] = score[t] > threshold; metrics when labels are given.
DetectionReport detect(const ScoreSeries& scores, double threshold, const std::vector<int>& labels = {},
                       const DetectOptions& opts = {});

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const DetectionReport& r);

/// `t,score,pred,label` rows; `label` is empty when unknown, `score` is empty when uncovered.
void write_report_csv(const DetectionReport& r, const std::filesystem::path& path, Index time_offset = 0);

}  // namespace diffgan
