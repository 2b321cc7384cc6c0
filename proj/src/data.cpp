#include "diffgan/data.hpp"

#include "diffgan/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace diffgan {

SplitBounds default_split(Index length) {
  return SplitBounds{static_cast<Index>(std::llround(static_cast<double>(length) * 2.0 / 5.0)),
                     static_cast<Index>(std::llround(static_cast<double>(length) * 3.0 / 5.0))};
}

Index SeriesDataset::begin(Partition p) const {
  switch (p) {
    case Partition::train: return 0;
    case Partition::val: return split.train_end;
    case Partition::test: return split.val_end;
  }
  return 0;
}

Index SeriesDataset::end(Partition p) const {
  switch (p) {
    case Partition::train: return split.train_end;
    case Partition::val: return split.val_end;
    case Partition::test: return length();
  }
  return 0;
}

Tensor<float> SeriesDataset::partition_values(Partition p) const {
  const Index b = begin(p), e = end(p), D = dims();
  return Tensor<float>(Shape{e - b, D}, values.data().segment(b * D, (e - b) * D));
}

std::vector<int> SeriesDataset::partition_labels(Partition p) const {
  return std::vector<int>(labels.begin() + begin(p), labels.begin() + end(p));
}

void SeriesDataset::validate() const {
  if (values.rank() != 2) throw SpecError("dataset: values must be [T, D], got " + diffgan::to_string(values.shape()));
  if (static_cast<Index>(labels.size()) != length()) {
    throw SpecError("dataset: " + std::to_string(labels.size()) + " labels for " + std::to_string(length()) +
                    " timepoints");
  }
  for (int y : labels)
    if (y != 0 && y != 1) throw SpecError("dataset: labels must be 0 or 1");
  if (!(0 <= split.train_end && split.train_end <= split.val_end && split.val_end <= length())) {
    throw SpecError("dataset: split boundaries outside [0, T]");
  }
}

// --- normalization ---------------------------------------------------------------

NormalizationStats fit_normalization(const SeriesDataset& ds, const NormalizeOptions& opts) {
  const Index D = ds.dims();
  const Tensor<float> train = ds.partition_values(Partition::train);
  if (train.dim(0) == 0) throw SpecError("normalize: empty training partition");
  NormalizationStats stats{std::vector<double>(D), std::vector<double>(D), std::vector<bool>(D, false)};
  auto m = train.matrix();  // D x T_train
  for (Index d = 0; d < D; ++d) {
    stats.min[d] = m.row(d).minCoeff();
    stats.max[d] = m.row(d).maxCoeff();
    if (!(stats.max[d] > stats.min[d])) {
      if (opts.strict) throw DegenerateDimensionError(d);
      std::cerr << "warning: dimension " << d << " is constant on the training split; mapping it to 0.5\n";
      stats.degenerate[d] = true;
    }
  }
  return stats;
}

Tensor<float> apply_normalization(const Tensor<float>& values, const NormalizationStats& stats) {
  const Index D = values.features();
  if (static_cast<Index>(stats.min.size()) != D) throw ShapeError("normalize: stats do not match dimension count");
  Tensor<float> out(values.shape());
  auto in = values.matrix();
  auto o = out.matrix();
  for (Index d = 0; d < D; ++d) {
    if (stats.degenerate.size() > static_cast<std::size_t>(d) && stats.degenerate[d]) {
      o.row(d).setConstant(0.5f);
      continue;
    }
    const double lo = stats.min[d];
    const double span = stats.max[d] - stats.min[d];
    for (Index t = 0; t < in.cols(); ++t) o(d, t) = static_cast<float>((in(d, t) - lo) / span);
  }
  return out;
}

Normalized normalize(const SeriesDataset& ds, const NormalizeOptions& opts) {
  ds.validate();
  Normalized out{ds, fit_normalization(ds, opts)};
  out.dataset.values = apply_normalization(ds.values, out.stats);
  return out;
}

// --- windows ---------------------------------------------------------------------

namespace {

WindowSet windows_at(const Tensor<float>& series, Index window, std::vector<Index> origins, Index stride) {
  const Index T = series.dim(0), D = series.dim(1);
  const Index k = static_cast<Index>(origins.size());
  WindowSet ws;
  ws.window = window;
  ws.stride = stride;
  ws.windows = Tensor<float>(Shape{k, window, D});
  for (Index j = 0; j < k; ++j)
    ws.windows.data().segment(j * window * D, window * D) = series.data().segment(origins[j] * D, window * D);
  Index covered_to = 0;
  for (Index o : origins) covered_to = std::max(covered_to, o + window);
  for (Index t = covered_to; t < T; ++t) ws.uncovered.push_back(t);
  ws.origins = std::move(origins);
  return ws;
}

void check_window_args(const Tensor<float>& series, Index window, Index stride) {
  if (series.rank() != 2) throw ShapeError("windows: series must be [T, D], got " + diffgan::to_string(series.shape()));
  if (window < 1 || stride < 1) throw SpecError("windows: window and stride must be >= 1");
  if (window > series.dim(0)) {
    throw SpecError("windows: window " + std::to_string(window) + " longer than series of " +
                    std::to_string(series.dim(0)) + " timepoints (empty window set)");
  }
}

}  // namespace

WindowSet make_windows(const Tensor<float>& series, Index window, Index stride) {
  check_window_args(series, window, stride);
  const Index k = (series.dim(0) - window) / stride + 1;
  std::vector<Index> origins(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) origins[j] = j * stride;
  return windows_at(series, window, std::move(origins), stride);
}

WindowSet make_covering_windows(const Tensor<float>& series, Index window, Index stride) {
  check_window_args(series, window, stride);
  const Index T = series.dim(0);
  const Index k = (T - window) / stride + 1;
  std::vector<Index> origins(static_cast<std::size_t>(k));
  for (Index j = 0; j < k; ++j) origins[j] = j * stride;
  if (origins.back() + window < T) origins.push_back(T - window);
  return windows_at(series, window, std::move(origins), stride);
}

// --- synthetic generator -------------------------------------------------------------

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::global_point: return "global";
    case AnomalyKind::contextual_point: return "contextual";
    case AnomalyKind::seasonal: return "seasonal";
    case AnomalyKind::shapelet: return "shapelet";
    case AnomalyKind::trend: return "trend";
  }
  return "unknown";
}

AnomalyKind parse_anomaly_kind(const std::string& text) {
  for (AnomalyKind k : all_anomaly_kinds())
    if (to_string(k) == text) return k;
  if (text == "global_point") return AnomalyKind::global_point;
  if (text == "contextual_point") return AnomalyKind::contextual_point;
  throw SpecError("unknown anomaly kind '" + text + "'");
}

const std::vector<AnomalyKind>& all_anomaly_kinds() {
  static const std::vector<AnomalyKind> kinds{AnomalyKind::global_point, AnomalyKind::contextual_point,
                                              AnomalyKind::seasonal, AnomalyKind::shapelet, AnomalyKind::trend};
  return kinds;
}

nlohmann::json to_json(const AnomalySpec& s) {
  return {{"kind", to_string(s.kind)},
          {"ratio", s.ratio},
          {"dimension", s.dimension},
          {"magnitude_min", s.magnitude_min},
          {"magnitude_max", s.magnitude_max},
          {"seasonal_factor_min", s.seasonal_factor_min},
          {"seasonal_factor_max", s.seasonal_factor_max},
          {"trend_sigmas", s.trend_sigmas},
          {"interval_min", s.interval_min},
          {"interval_max", s.interval_max},
          {"context_window", s.context_window},
          {"noise_level", s.noise_level},
          {"contaminate_train", s.contaminate_train}};
}

AnomalySpec anomaly_spec_from_json(const nlohmann::json& j) {
  AnomalySpec s;
  s.kind = parse_anomaly_kind(j.at("kind").get<std::string>());
  s.ratio = j.value("ratio", s.ratio);
  s.dimension = j.value("dimension", s.dimension);
  s.magnitude_min = j.value("magnitude_min", s.magnitude_min);
  s.magnitude_max = j.value("magnitude_max", s.magnitude_max);
  s.seasonal_factor_min = j.value("seasonal_factor_min", s.seasonal_factor_min);
  s.seasonal_factor_max = j.value("seasonal_factor_max", s.seasonal_factor_max);
  s.trend_sigmas = j.value("trend_sigmas", s.trend_sigmas);
  s.interval_min = j.value("interval_min", s.interval_min);
  s.interval_max = j.value("interval_max", s.interval_max);
  s.context_window = j.value("context_window", s.context_window);
  s.noise_level = j.value("noise_level", s.noise_level);
  s.contaminate_train = j.value("contaminate_train", s.contaminate_train);
  return s;
}

std::vector<double> rolling_mean(const std::vector<double>& x, Index window) {
  const Index n = static_cast<Index>(x.size());
  const Index half = window / 2;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (Index i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  for (Index i = 0; i < n; ++i) {
    const Index lo = std::max<Index>(0, i - half);
    const Index hi = std::min<Index>(n, i - half + window);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

namespace {

struct Component {
  double amplitude;
  double period;
  double phase;
};

struct Channel {
  double offset = 0.0;
  std::vector<Component> parts;

  double at(double t, double time_scale = 1.0, double anchor = 0.0) const {
    const double tt = anchor + time_scale * (t - anchor);
    double v = offset;
    for (const auto& c : parts) v += c.amplitude * std::sin(2.0 * std::numbers::pi * tt / c.period + c.phase);
    return v;
  }

  double shortest_period() const {
    double p = parts.front().period;
    for (const auto& c : parts) p = std::min(p, c.period);
    return p;
  }
};

double stddev(const std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

/// Isolated positions (pairwise distance >= 2) in [lo, hi).
std::vector<Index> pick_points(RngStream& rng, Index lo, Index hi, Index count) {
  std::vector<Index> candidates;
  for (Index t = lo; t < hi; ++t) candidates.push_back(t);
  std::shuffle(candidates.begin(), candidates.end(), rng.engine());
  std::vector<char> blocked(static_cast<std::size_t>(hi - lo), 0);
  std::vector<Index> picked;
  for (Index t : candidates) {
    if (static_cast<Index>(picked.size()) == count) break;
    const Index i = t - lo;
    if (blocked[i]) continue;
    picked.push_back(t);
    for (Index d = -1; d <= 1; ++d)
      if (i + d >= 0 && i + d < hi - lo) blocked[i + d] = 1;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

struct Interval {
  Index begin;
  Index end;
};

/// `n` non-overlapping intervals covering exactly `count` timepoints in [lo, hi).
std::vector<Interval> pick_intervals(RngStream& rng, Index lo, Index hi, Index count, Index n) {
  const Index seg = (hi - lo) / n;
  std::vector<Interval> out;
  for (Index i = 0; i < n; ++i) {
    const Index len = count / n + (i < count % n ? 1 : 0);
    if (len + 2 > seg) throw SpecError("synthetic: anomaly ratio too large to place separated intervals");
    const Index s0 = lo + i * seg + 1;
    const Index start = static_cast<Index>(rng.uniform_int(s0, s0 + seg - len - 2));
    out.push_back({start, start + len});
  }
  return out;
}

}  // namespace

SeriesDataset generate_synthetic(const AnomalySpec& spec, Index length, Index dims, std::uint64_t seed) {
  if (length < 100) throw SpecError("synthetic: need at least 100 timepoints");
  if (dims < 1) throw SpecError("synthetic: need at least one dimension");
  if (!(spec.ratio >= 0.0 && spec.ratio < 0.5)) throw SpecError("synthetic: ratio must lie in [0, 0.5)");
  if (spec.dimension < 0 || spec.dimension >= dims) throw SpecError("synthetic: affected dimension out of range");
  if (spec.magnitude_min < 3.0 || spec.magnitude_max < spec.magnitude_min) {
    throw SpecError("synthetic: point magnitudes must be >= 3 standard deviations");
  }

  const RngStream root(seed);
  RngStream base_rng = root.substream("base");
  RngStream noise_rng = root.substream("noise");
  RngStream anomaly_rng = root.substream("anomaly");

  std::vector<Channel> channels(static_cast<std::size_t>(dims));
  for (auto& ch : channels) {
    ch.offset = base_rng.uniform(-1.0, 1.0);
    const int parts = 2 + static_cast<int>(base_rng.uniform_int(0, 1));
    for (int k = 0; k < parts; ++k) {
      ch.parts.push_back({base_rng.uniform(0.3, 1.0) / (k + 1), base_rng.uniform(30.0, 120.0) / (k + 1),
                          base_rng.uniform(0.0, 2.0 * std::numbers::pi)});
    }
  }

  std::vector<std::vector<double>> series(static_cast<std::size_t>(dims), std::vector<double>(length));
  std::vector<std::vector<double>> noise(static_cast<std::size_t>(dims), std::vector<double>(length));
  for (Index d = 0; d < dims; ++d) {
    double amp = 0.0;
    for (const auto& c : channels[d].parts) amp += c.amplitude;
    for (Index t = 0; t < length; ++t) {
      noise[d][t] = spec.noise_level * amp * noise_rng.normal();
      series[d][t] = channels[d].at(static_cast<double>(t)) + noise[d][t];
    }
  }

  SeriesDataset ds;
  ds.name = to_string(spec.kind);
  ds.split = default_split(length);
  ds.labels.assign(static_cast<std::size_t>(length), 0);
  ds.generator = {{"spec", to_json(spec)}, {"length", length}, {"dims", dims}, {"seed", seed}};

  const Index count = static_cast<Index>(std::ceil(spec.ratio * static_cast<double>(length) - 1e-9));
  // Anomalies are shared between validation and test in proportion to their lengths so that
  // both partitions carry labels (thresholds are tuned on validation).
  // Interval kinds share whole intervals of roughly the mean configured length.
  struct Region {
    Index lo, hi, count, intervals;
  };
  const bool interval_kind = spec.kind == AnomalyKind::seasonal || spec.kind == AnomalyKind::shapelet ||
                             spec.kind == AnomalyKind::trend;
  const Index mean_len = std::max<Index>(1, (spec.interval_min + spec.interval_max) / 2);
  const Index n_intervals = std::max<Index>(1, (count + mean_len / 2) / mean_len);
  std::vector<Region> regions;
  if (spec.contaminate_train) {
    regions.push_back({0, length, count, n_intervals});
  } else {
    const Index val_len = ds.split.val_end - ds.split.train_end;
    const double val_share = static_cast<double>(val_len) / static_cast<double>(length - ds.split.train_end);
    Index val_count = 0, val_intervals = 0;
    if (interval_kind) {
      if (n_intervals >= 2) {
        val_intervals = std::clamp<Index>(std::llround(val_share * static_cast<double>(n_intervals)), 1, n_intervals - 1);
        // Interval i has count / n (+1 for the first count % n); validation takes the last ones.
        for (Index i = n_intervals - val_intervals; i < n_intervals; ++i)
          val_count += count / n_intervals + (i < count % n_intervals ? 1 : 0);
      }
    } else {
      val_count = std::llround(val_share * static_cast<double>(count));
      if (count >= 2) val_count = std::clamp<Index>(val_count, 1, count - 1);
    }
    regions.push_back({ds.split.train_end, ds.split.val_end, val_count, val_intervals});
    regions.push_back({ds.split.val_end, length, count - val_count, n_intervals - val_intervals});
  }
  if (count > 0) {
    const Index d = spec.dimension;
    std::vector<double>& x = series[d];
    const std::vector<double> base = x;
    const double sigma = stddev(base);
    const double lo_v = *std::min_element(base.begin(), base.end());
    const double hi_v = *std::max_element(base.begin(), base.end());
    for (const Region& r : regions)
      if (2 * r.count > r.hi - r.lo) throw SpecError("synthetic: ratio leaves too few normal points");

    std::vector<double> local, resid;
    double rs = 0.0;
    if (spec.kind == AnomalyKind::contextual_point) {
      Index window = spec.context_window;
      if (window <= 0) {
        window = std::max<Index>(3, std::llround(channels[d].shortest_period() / 2.0));
      }
      local = rolling_mean(base, window);
      resid.resize(base.size());
      for (std::size_t i = 0; i < base.size(); ++i) resid[i] = base[i] - local[i];
      rs = stddev(resid);
    }
    const Channel& ch = channels[d];
    double amp = 0.0;
    for (const auto& c : ch.parts) amp += c.amplitude;

    Index carry = 0;
    for (const Region& r : regions) {
      if (r.count + carry == 0) continue;
      switch (spec.kind) {
        case AnomalyKind::global_point: {
          for (Index t : pick_points(anomaly_rng, r.lo, r.hi, r.count)) {
            const double m = anomaly_rng.uniform(spec.magnitude_min, spec.magnitude_max);
            const double sign = anomaly_rng.uniform() < 0.5 ? -1.0 : 1.0;
            x[t] = base[t] + sign * m * sigma;
            ds.labels[t] = 1;
          }
          break;
        }
        case AnomalyKind::contextual_point: {
          // Oversample candidates; keep those whose shifted value stays in the global range.
          // A shortfall in one region moves to the next.
          const Index wanted = r.count + carry;
          Index placed = 0;
          for (Index t : pick_points(anomaly_rng, r.lo, r.hi, (r.hi - r.lo) / 2)) {
            if (placed == wanted) break;
            const double m = anomaly_rng.uniform(spec.magnitude_min, spec.magnitude_max);
            double sign = anomaly_rng.uniform() < 0.5 ? -1.0 : 1.0;
            double v = local[t] + sign * m * rs;
            if (v < lo_v || v > hi_v) v = local[t] - sign * m * rs;
            if (v < lo_v || v > hi_v) continue;
            x[t] = v;
            ds.labels[t] = 1;
            ++placed;
          }
          carry = wanted - placed;
          break;
        }
        case AnomalyKind::seasonal:
        case AnomalyKind::shapelet:
        case AnomalyKind::trend: {
          const double main_period = ch.parts.front().period;
          for (const Interval& iv : pick_intervals(anomaly_rng, r.lo, r.hi, r.count, r.intervals)) {
            const double factor = anomaly_rng.uniform(spec.seasonal_factor_min, spec.seasonal_factor_max);
            for (Index t = iv.begin; t < iv.end; ++t) {
              const double tt = static_cast<double>(t);
              if (spec.kind == AnomalyKind::seasonal) {
                x[t] = ch.at(tt, factor, static_cast<double>(iv.begin)) + noise[d][t];
              } else if (spec.kind == AnomalyKind::shapelet) {
                const double sq = std::sin(2.0 * std::numbers::pi * tt / main_period + ch.parts.front().phase);
                x[t] = ch.offset + amp * (sq >= 0.0 ? 1.0 : -1.0) + noise[d][t];
              } else {
                const double frac = static_cast<double>(t - iv.begin + 1) / static_cast<double>(iv.end - iv.begin);
                x[t] = base[t] + frac * spec.trend_sigmas * sigma;
              }
              ds.labels[t] = 1;
            }
          }
          break;
        }
      }
    }
    if (carry > 0) throw SpecError("synthetic: could not place contextual anomalies inside the global range");
  }

  ds.values = Tensor<float>(Shape{length, dims});
  for (Index t = 0; t < length; ++t)
    for (Index d = 0; d < dims; ++d) ds.values[t * dims + d] = static_cast<float>(series[d][t]);
  return ds;
}

// --- files -------------------------------------------------------------------------------

std::filesystem::path metadata_path(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

void save_dataset(const SeriesDataset& ds, const std::filesystem::path& csv) {
  ds.validate();
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("dataset: cannot write '" + csv.string() + "'");
  const Index T = ds.length(), D = ds.dims();
  for (Index d = 0; d < D; ++d) out << "dim_" << d << ',';
  out << "label\n";
  out << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (Index t = 0; t < T; ++t) {
    for (Index d = 0; d < D; ++d) out << ds.values[t * D + d] << ',';
    out << ds.labels[t] << '\n';
  }
  if (!out) throw std::runtime_error("dataset: write failed for '" + csv.string() + "'");

  nlohmann::json meta = {{"name", ds.name},
                         {"length", T},
                         {"dims", D},
                         {"split", {{"train_end", ds.split.train_end}, {"val_end", ds.split.val_end}}},
                         {"generator", ds.generator}};
  std::ofstream mo(metadata_path(csv));
  if (!mo) throw std::runtime_error("dataset: cannot write metadata for '" + csv.string() + "'");
  mo << meta.dump(2) << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

SeriesDataset load_dataset(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("dataset: cannot open '" + csv.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty file (zero rows)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 2 || header.back() != "label") throw ParseError(1, "header must be dim_0,...,dim_{D-1},label");
  const Index D = static_cast<Index>(header.size()) - 1;
  for (Index d = 0; d < D; ++d)
    if (header[d] != "dim_" + std::to_string(d)) throw ParseError(1, "unexpected column name '" + header[d] + "'");

  std::vector<float> values;
  std::vector<int> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != D + 1) {
      throw ParseError(lineno, "expected " + std::to_string(D + 1) + " columns, got " + std::to_string(cells.size()));
    }
    for (Index d = 0; d < D; ++d) {
      float v = 0.0f;
      const auto& c = cells[d];
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size() || !std::isfinite(v)) {
        throw ParseError(lineno, "malformed value '" + c + "' in column " + header[d]);
      }
      values.push_back(v);
    }
    const auto& lc = cells.back();
    if (lc != "0" && lc != "1") throw ParseError(lineno, "label must be 0 or 1, got '" + lc + "'");
    labels.push_back(lc == "1" ? 1 : 0);
  }
  if (labels.empty()) throw ParseError(lineno, "no data rows (zero rows)");

  SeriesDataset ds;
  const Index T = static_cast<Index>(labels.size());
  ds.values = Tensor<float>::from_vector(Shape{T, D}, values);
  ds.labels = std::move(labels);
  ds.name = csv.stem().string();
  ds.split = default_split(T);

  const auto meta_file = metadata_path(csv);
  if (std::filesystem::exists(meta_file)) {
    std::ifstream mi(meta_file);
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(mi);
      ds.name = meta.value("name", ds.name);
      ds.split.train_end = meta.at("split").at("train_end").get<Index>();
      ds.split.val_end = meta.at("split").at("val_end").get<Index>();
      ds.generator = meta.value("generator", nlohmann::json::object());
      if (meta.value("length", T) != T || meta.value("dims", D) != D) {
        throw SpecError("dataset: metadata shape does not match '" + csv.string() + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw SpecError("dataset: malformed metadata '" + meta_file.string() + "': " + e.what());
    }
  }
  ds.validate();
  return ds;
}

}  // namespace diffgan
