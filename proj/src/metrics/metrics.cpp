#include "metrics/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "common/csv.hpp"
#include "common/error.hpp"

namespace whdspot::metrics {

namespace {

// Minimum-cost perfect assignment on a square matrix (Hungarian method with
// potentials). Returns the column chosen for every row.
std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) minv[j] = cur, way[j] = j0;
        if (minv[j] < delta) delta = minv[j], j1 = j;
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) u[p[j]] += delta, v[j] -= delta;
        else minv[j] -= delta;
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

MatchResult match_points(const PointSet& pred, const PointSet& truth, double radius) {
  require(radius > 0, "match_points: radius must be positive");
  MatchResult out;
  const std::size_t n = std::max(pred.size(), truth.size());
  if (!pred.empty() && !truth.empty()) {
    // Forbidden and padding cells cost more than any full set of allowed
    // pairs, so the optimum maximises the match count first.
    const double big = (radius + 1.0) * static_cast<double>(n + 1);
    std::vector<double> cost(n * n, big);
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (std::size_t j = 0; j < truth.size(); ++j) {
        const double d = std::hypot(pred[i].x - truth[j].x, pred[i].y - truth[j].y);
        if (d <= radius) cost[i * n + j] = d;
      }
    const auto assign = hungarian(cost, n);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const std::size_t j = assign[i];
      if (j >= truth.size()) continue;
      const double d = std::hypot(pred[i].x - truth[j].x, pred[i].y - truth[j].y);
      if (d <= radius) out.pairs.push_back({i, j, d});
    }
  }
  out.tp = static_cast<int>(out.pairs.size());
  out.fp = static_cast<int>(pred.size()) - out.tp;
  out.fn = static_cast<int>(truth.size()) - out.tp;
  return out;
}

double f1_score(double precision, double recall) {
  if (precision <= 0.0 || recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

Scores precision_recall_f1(int tp, int fp, int fn) {
  require(tp >= 0 && fp >= 0 && fn >= 0, "precision_recall_f1: counts must be non-negative");
  Scores s;
  s.precision_undefined = tp + fp == 0;
  s.recall_undefined = tp + fn == 0;
  s.precision = s.precision_undefined ? 0.0 : static_cast<double>(tp) / (tp + fp);
  s.recall = s.recall_undefined ? 0.0 : static_cast<double>(tp) / (tp + fn);
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

CountStats count_errors(const std::vector<long>& predicted, const std::vector<long>& truth) {
  require(predicted.size() == truth.size(), "count_errors: " + std::to_string(predicted.size()) +
                                                " predicted counts for " + std::to_string(truth.size()) + " images");
  require(!truth.empty(), "count_errors: no images");
  CountStats s;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = static_cast<double>(predicted[i] - truth[i]);
    s.me += e;
    s.mse += e * e;
    s.mae += std::abs(e);
    s.mape += std::abs(e) / static_cast<double>(std::max(truth[i], 1L));
  }
  const double n = static_cast<double>(truth.size());
  s.me /= n;
  s.mse /= n;
  s.mae /= n;
  s.mape = s.mape / n * 100.0;
  s.rmse = std::sqrt(s.mse);
  return s;
}

LocalizationError localization_rmse(const std::vector<MatchedPair>& pairs) {
  if (pairs.empty()) return {0.0, true};
  double sum = 0.0;
  for (const auto& p : pairs) sum += p.distance * p.distance;
  return {std::sqrt(sum / static_cast<double>(pairs.size())), false};
}

double time_per_image(const std::function<void()>& run_all, std::size_t image_count, int warmup, int reps) {
  require(image_count > 0, "time_per_image: empty dataset");
  require(reps >= 1 && warmup >= 0, "time_per_image: need reps >= 1 and warmup >= 0");
  for (int i = 0; i < warmup; ++i) run_all();
  std::vector<double> times;
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    run_all();
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
                    static_cast<double>(image_count));
  }
  std::sort(times.begin(), times.end());
  const std::size_t m = times.size() / 2;
  return times.size() % 2 ? times[m] : (times[m - 1] + times[m]) / 2.0;
}

MetricsReport evaluate(const std::vector<PointSet>& pred, const std::vector<PointSet>& truth, double radius,
                       const std::vector<long>& predicted_counts) {
  require(pred.size() == truth.size(), "evaluate: predictions and ground truth cover different image counts");
  MetricsReport r;
  std::vector<MatchedPair> pairs;
  std::vector<long> true_counts;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const MatchResult m = match_points(pred[i], truth[i], radius);
    r.tp += m.tp;
    r.fp += m.fp;
    r.fn += m.fn;
    pairs.insert(pairs.end(), m.pairs.begin(), m.pairs.end());
    true_counts.push_back(static_cast<long>(truth[i].size()));
  }
  r.scores = precision_recall_f1(r.tp, r.fp, r.fn);
  if (!truth.empty()) r.counts = count_errors(predicted_counts, true_counts);
  r.localization = localization_rmse(pairs);
  return r;
}

std::string format_metrics_csv(const std::vector<MetricsReport>& reports) {
  std::string out =
      "model,split,precision,recall,f1,count_me,count_mse,count_rmse,count_mae,count_mape,loc_rmse,tpi_seconds\n";
  for (const auto& r : reports) {
    const auto value = [](double v, bool missing) { return "," + (missing ? std::string("NA") : fixed(v, 6)); };
    out += r.model + "," + r.split;
    out += value(r.scores.precision, r.scores.precision_undefined);
    out += value(r.scores.recall, r.scores.recall_undefined);
    out += value(r.scores.f1, false);
    for (double v : {r.counts.me, r.counts.mse, r.counts.rmse, r.counts.mae, r.counts.mape}) out += value(v, false);
    out += value(r.localization.rmse, r.localization.empty);
    out += "," + (r.tpi_seconds ? fixed(*r.tpi_seconds, 6) : std::string("NA")) + "\n";
  }
  return out;
}

}  // namespace whdspot::metrics
