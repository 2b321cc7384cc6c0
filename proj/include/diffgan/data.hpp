#pragma once

#include "diffgan/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffgan {

/// Raised for invalid dataset or generator specifications.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed dataset file; `line()` is 1-based (the header is line 1).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A dimension whose training values are constant cannot be min-max scaled.
class DegenerateDimensionError : public std::runtime_error {
 public:
  explicit DegenerateDimensionError(Index dim)
      : std::runtime_error("normalize: dimension " + std::to_string(dim) + " is constant on the training split"),
        dim_(dim) {}
  Index dimension() const noexcept { return dim_; }

 private:
  Index dim_;
};

enum class Partition { train, val, test };

/// Contiguous partition boundaries: train [0, train_end), val [train_end, val_end), test [val_end, T).
struct SplitBounds {
  Index train_end = 0;
  Index val_end = 0;
};

/// 2:1:2 split of T timepoints.
SplitBounds default_split(Index length);

struct SeriesDataset {
  std::string name;
  Tensor<float> values;  ///< [T, D]
  std::vector<int> labels;
  SplitBounds split;
  nlohmann::json generator = nlohmann::json::object();  ///< generator spec and seed, if synthetic

  Index length() const { return values.rank() == 2 ? values.dim(0) : 0; }
  Index dims() const { return values.rank() == 2 ? values.dim(1) : 0; }

  Index begin(Partition p) const;
  Index end(Partition p) const;
  Tensor<float> partition_values(Partition p) const;
  std::vector<int> partition_labels(Partition p) const;

  /// Checks label length, label values and split coverage.
  void validate() const;
};

// --- normalization ---------------------------------------------------------------

struct NormalizationStats {
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> degenerate;
};

struct NormalizeOptions {
  /// Throw on a constant training dimension instead of mapping it to 0.5.
  bool strict = true;
};

/// Min-max statistics over the training partition.
NormalizationStats fit_normalization(const SeriesDataset& ds, const NormalizeOptions& opts = {});

/// (x - min) / (max - min) per dimension; degenerate dimensions become 0.5.
Tensor<float> apply_normalization(const Tensor<float>& values, const NormalizationStats& stats);

struct Normalized {
  SeriesDataset dataset;
  NormalizationStats stats;
};

Normalized normalize(const SeriesDataset& ds, const NormalizeOptions& opts = {});

// --- windows -----------------------------------------------------------------------

struct WindowSet {
  Tensor<float> windows;       ///< [k, w, D]
  Index window = 0;
  Index stride = 0;
  std::vector<Index> origins;  ///< 0-based start of each window
  std::vector<Index> uncovered;  ///< trailing timepoints no window reaches

  Index count() const { return static_cast<Index>(origins.size()); }
};

/// k = floor((T - w) / l) + 1 windows; window j starts at j*l.
WindowSet make_windows(const Tensor<float>& series, Index window, Index stride);

/// As make_windows, plus one window aligned to the series end when the last
/// timepoints would otherwise be uncovered.
WindowSet make_covering_windows(const Tensor<float>& series, Index window, Index stride);

// --- synthetic benchmark ---------------------------------------------------------------

enum class AnomalyKind { global_point, contextual_point, seasonal, shapelet, trend };

std::string to_string(AnomalyKind kind);
AnomalyKind parse_anomaly_kind(const std::string& text);
const std::vector<AnomalyKind>& all_anomaly_kinds();

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::global_point;
  /// Labeled timepoints = ceil(ratio * T). Must lie in [0, 0.5).
  double ratio = 0.05;
  Index dimension = 0;
  /// Point anomaly offset, in units of the relevant standard deviation.
  double magnitude_min = 3.5;
  double magnitude_max = 5.0;
  double seasonal_factor_min = 2.0;
  double seasonal_factor_max = 3.0;
  /// Total trend drift across an interval, in dimension standard deviations.
  double trend_sigmas = 3.0;
  Index interval_min = 20;
  Index interval_max = 50;
  /// Rolling-mean window for contextual anomalies; 0 means half the shortest base period.
  Index context_window = 0;
  double noise_level = 0.05;
  /// Allow anomalies inside the training partition.
  bool contaminate_train = false;
};

nlohmann::json to_json(const AnomalySpec& spec);
AnomalySpec anomaly_spec_from_json(const nlohmann::json& j);

/// Multi-sinusoid base signal with one dimension carrying injected anomalies.
SeriesDataset generate_synthetic(const AnomalySpec& spec, Index length, Index dims, std::uint64_t seed);

/// Rolling mean over a centered window (truncated at the edges).
std::vector<double> rolling_mean(const std::vector<double>& x, Index window);

// --- files ---------------------------------------------------------------------------------

/// Sidecar metadata path for a dataset CSV ("x.csv" -> "x.meta.json").
std::filesystem::path metadata_path(const std::filesystem::path& csv);

void save_dataset(const SeriesDataset& ds, const std::filesystem::path& csv);
SeriesDataset load_dataset(const std::filesystem::path& csv);

}  // namespace diffgan
