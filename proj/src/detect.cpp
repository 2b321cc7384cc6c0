#include "diffgan/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

namespace diffgan {

std::string to_string(Aggregation a) { return a == Aggregation::mean ? "mean" : "median"; }

Aggregation parse_aggregation(const std::string& text) {
  if (text == "mean") return Aggregation::mean;
  if (text == "median") return Aggregation::median;
  throw std::invalid_argument("unknown aggregation '" + text + "' (expected mean or median)");
}

std::vector<std::vector<double>> window_errors(const Tensor<float>& windows, const Tensor<float>& reconstructions) {
  if (windows.shape() != reconstructions.shape() || windows.rank() != 3) {
    throw ShapeError("window_errors: reconstruction " + to_string(reconstructions.shape()) + " does not match windows " +
                     to_string(windows.shape()));
  }
  const Index k = windows.dim(0), w = windows.dim(1);
  const auto diff = (windows.matrix().cast<double>() - reconstructions.matrix().cast<double>()).eval();
  std::vector<std::vector<double>> out(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(w)));
  for (Index j = 0; j < k; ++j)
    for (Index o = 0; o < w; ++o) out[j][o] = diff.col(j * w + o).squaredNorm();
  return out;
}

ScoreSeries aggregate_scores(Index length, const std::vector<Index>& origins,
                             const std::vector<std::vector<double>>& errors, Aggregation aggregation) {
  if (origins.size() != errors.size()) throw std::invalid_argument("aggregate_scores: one error row per window required");
  std::vector<std::vector<double>> per_t(static_cast<std::size_t>(length));
  for (std::size_t j = 0; j < origins.size(); ++j)
    for (std::size_t o = 0; o < errors[j].size(); ++o) {
      const Index t = origins[j] + static_cast<Index>(o);
      if (t < 0 || t >= length) throw std::out_of_range("aggregate_scores: window extends past the series");
      per_t[t].push_back(errors[j][o]);
    }

  ScoreSeries s;
  s.score.assign(static_cast<std::size_t>(length), std::numeric_limits<double>::quiet_NaN());
  s.coverage.assign(static_cast<std::size_t>(length), 0);
  for (Index t = 0; t < length; ++t) {
    auto& v = per_t[t];
    s.coverage[t] = static_cast<int>(v.size());
    if (v.empty()) continue;
    if (aggregation == Aggregation::mean) {
      s.score[t] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    } else {
      std::sort(v.begin(), v.end());
      const std::size_t m = v.size() / 2;
      s.score[t] = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    }
  }
  return s;
}

ScoreSeries score_series(const Tensor<float>& series, const Reconstructor& reconstruct, const ScoringOptions& opts) {
  if (series.rank() != 2) throw ShapeError("score_series: expected [T, D] series, got " + to_string(series.shape()));
  const Index T = series.dim(0);
  if (T < opts.window) {
    throw SeriesTooShortError("score_series: series of length " + std::to_string(T) + " is shorter than window " +
                              std::to_string(opts.window));
  }
  if (opts.batch_size < 1) throw std::invalid_argument("score_series: batch size must be positive");
  const WindowSet ws = opts.cover_tail ? make_covering_windows(series, opts.window, opts.stride)
                                       : make_windows(series, opts.window, opts.stride);

  const Index k = ws.count();
  std::vector<std::vector<double>> errors;
  errors.reserve(static_cast<std::size_t>(k));
  for (Index begin = 0; begin < k; begin += opts.batch_size) {
    std::vector<Index> idx(static_cast<std::size_t>(std::min(opts.batch_size, k - begin)));
    std::iota(idx.begin(), idx.end(), begin);
    Tensor<float> batch(Shape{static_cast<Index>(idx.size()), ws.windows.dim(1), ws.windows.dim(2)});
    const Index per = ws.windows.dim(1) * ws.windows.dim(2);
    batch.data() = ws.windows.data().segment(begin * per, batch.size());
    auto part = window_errors(batch, reconstruct(batch));
    for (auto& row : part) errors.push_back(std::move(row));
  }
  return aggregate_scores(T, ws.origins, errors, opts.aggregation);
}

// --- thresholds --------------------------------------------------------------------------

std::string to_string(ThresholdStrategy s) { return s == ThresholdStrategy::best_f1 ? "best_f1" : "quantile"; }

ThresholdStrategy parse_threshold_strategy(const std::string& text) {
  if (text == "best_f1") return ThresholdStrategy::best_f1;
  if (text == "quantile") return ThresholdStrategy::quantile;
  throw std::invalid_argument("unknown threshold strategy '" + text + "' (expected best_f1 or quantile)");
}

namespace {

double f1_from(Index tp, Index fp, Index fn) {
  const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

void check_binary(const std::vector<int>& v, const char* what) {
  for (int x : v)
    if (x != 0 && x != 1) throw std::invalid_argument(std::string(what) + ": entries must be 0 or 1");
}

}  // namespace

ThresholdChoice select_threshold_best_f1(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("select_threshold: scores and labels differ in length");
  check_binary(labels, "select_threshold");
  std::vector<std::pair<double, int>> pts;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::isnan(scores[i])) pts.emplace_back(scores[i], labels[i]);
  if (pts.empty()) throw std::invalid_argument("select_threshold: no scored points");
  const Index positives = std::count_if(pts.begin(), pts.end(), [](const auto& p) { return p.second == 1; });
  if (positives == 0) {
    throw std::invalid_argument("select_threshold: best_f1 needs at least one anomalous label; use the quantile strategy");
  }
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  ThresholdChoice best;
  if (pts.front().first == pts.back().first) {
    best.threshold = pts.front().first;
    best.degenerate = true;
    best.f1 = 0.0;
    return best;
  }

  // Threshold = max: nothing is predicted.
  best.threshold = pts.front().first;
  best.f1 = 0.0;
  Index tp = 0, fp = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    (pts[i].second ? tp : fp) += 1;
    const bool last_of_value = i + 1 == pts.size() || pts[i + 1].first < pts[i].first;
    if (!last_of_value) continue;
    double cand;
    if (i + 1 < pts.size()) {
      cand = 0.5 * (pts[i].first + pts[i + 1].first);
    } else if (pts[i].first > 0.0) {
      cand = 0.5 * pts[i].first;
    } else {
      continue;  // every score is above a negative threshold only
    }
    const double f = f1_from(tp, fp, positives - tp);
    if (f > best.f1) {
      best.f1 = f;
      best.threshold = cand;
    }
  }
  return best;
}

ThresholdChoice select_threshold_quantile(const std::vector<double>& scores, const std::vector<int>& labels, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("select_threshold: quantile must lie in (0, 1)");
  if (!labels.empty() && labels.size() != scores.size()) {
    throw std::invalid_argument("select_threshold: scores and labels differ in length");
  }
  std::vector<double> normal;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (!std::isnan(scores[i]) && (labels.empty() || labels[i] == 0)) normal.push_back(scores[i]);
  if (normal.empty()) throw std::invalid_argument("select_threshold: no normal scores for the quantile");
  std::sort(normal.begin(), normal.end());
  const double pos = q * static_cast<double>(normal.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, normal.size() - 1);
  ThresholdChoice c;
  c.threshold = normal[lo] + (pos - static_cast<double>(lo)) * (normal[hi] - normal[lo]);
  c.degenerate = normal.front() == normal.back();
  return c;
}

// --- evaluation ----------------------------------------------------------------------------

Metrics evaluate(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("evaluate: prediction and truth differ in length");
  check_binary(predicted, "evaluate");
  check_binary(truth, "evaluate");
  Metrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] && truth[i]) ++m.tp;
    else if (predicted[i]) ++m.fp;
    else if (truth[i]) ++m.fn;
    else ++m.tn;
  }
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

std::vector<int> point_adjust(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("point_adjust: length mismatch");
  std::vector<int> out = predicted;
  std::size_t i = 0;
  while (i < truth.size()) {
    if (!truth[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool hit = false;
    for (; j < truth.size() && truth[j]; ++j) hit = hit || predicted[j] != 0;
    if (hit) std::fill(out.begin() + static_cast<std::ptrdiff_t>(i), out.begin() + static_cast<std::ptrdiff_t>(j), 1);
    i = j;
  }
  return out;
}

DetectionReport detect(const ScoreSeries& scores, double threshold, const std::vector<int>& labels,
                       const DetectOptions& opts) {
  if (!(threshold >= 0.0)) throw std::invalid_argument("detect: threshold must be >= 0");
  if (!labels.empty() && labels.size() != scores.size()) {
    throw std::invalid_argument("detect: labels and scores differ in length");
  }
  DetectionReport r;
  r.threshold = threshold;
  r.scores = scores;
  r.labels = labels;
  r.predicted.resize(scores.size());
  for (std::size_t t = 0; t < scores.size(); ++t) r.predicted[t] = scores.score[t] > threshold ? 1 : 0;
  if (!labels.empty()) {
    if (opts.point_adjust) {
      r.predicted = point_adjust(r.predicted, labels);
      r.point_adjusted = true;
    }
    r.metrics = evaluate(r.predicted, labels);
  }
  return r;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"tp", m.tp},           {"fp", m.fp},     {"fn", m.fn}, {"tn", m.tn},
          {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

nlohmann::json to_json(const DetectionReport& r) {
  nlohmann::json scores = nlohmann::json::array();
  for (double s : r.scores.score) scores.push_back(std::isnan(s) ? nlohmann::json(nullptr) : nlohmann::json(s));
  nlohmann::json j = {{"threshold", r.threshold},
                      {"point_adjusted", r.point_adjusted},
                      {"scores", scores},
                      {"coverage", r.scores.coverage},
                      {"predicted", r.predicted}};
  j["metrics"] = r.metrics ? to_json(*r.metrics) : nlohmann::json(nullptr);
  return j;
}

void write_report_csv(const DetectionReport& r, const std::filesystem::path& path, Index time_offset) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "t,score,pred,label\n";
  for (std::size_t t = 0; t < r.scores.size(); ++t) {
    out << time_offset + static_cast<Index>(t) << ',';
    if (r.scores.covered(t)) out << r.scores.score[t];
    out << ',' << r.predicted[t] << ',';
    if (!r.labels.empty()) out << r.labels[t];
    out << '\n';
  }
}

}  // namespace diffgan
