#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "common/geometry.hpp"

namespace whdspot::metrics {

struct MatchedPair {
  std::size_t pred = 0;
  std::size_t truth = 0;
  double distance = 0.0;
  friend bool operator==(const MatchedPair&, const MatchedPair&) = default;
};

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<MatchedPair> pairs;  // sorted by prediction index
};

// One-to-one assignment restricted to pairs within `radius`: the largest
// possible number of matches, and among those the least total distance.
MatchResult match_points(const PointSet& pred, const PointSet& truth, double radius);

struct Scores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no predictions
  bool recall_undefined = false;     // no ground truth
};

Scores precision_recall_f1(int tp, int fp, int fn);
inline Scores precision_recall_f1(const MatchResult& m) { return precision_recall_f1(m.tp, m.fp, m.fn); }
// Harmonic mean; 0 when either input is 0.
double f1_score(double precision, double recall);

struct CountStats {
  double me = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  double mape = 0.0;  // percent; a zero true count divides by 1
};

CountStats count_errors(const std::vector<long>& predicted, const std::vector<long>& truth);

struct LocalizationError {
  double rmse = 0.0;
  bool empty = false;
};

LocalizationError localization_rmse(const std::vector<MatchedPair>& pairs);

// Median over `reps` timed runs of run_all() divided by image_count, after
// `warmup` untimed runs.
double time_per_image(const std::function<void()>& run_all, std::size_t image_count, int warmup, int reps);

struct MetricsReport {
  std::string model;
  std::string split;
  Scores scores;
  CountStats counts;
  LocalizationError localization;
  std::optional<double> tpi_seconds;
  int tp = 0, fp = 0, fn = 0;
};

// Pools matches over images: predictions and truth are per image.
MetricsReport evaluate(const std::vector<PointSet>& pred, const std::vector<PointSet>& truth, double radius,
                       const std::vector<long>& predicted_counts);

// Header model,split,precision,recall,f1,count_me,count_mse,count_rmse,
// count_mae,count_mape,loc_rmse,tpi_seconds. Undefined precision or recall, a
// localization error without matches and a missing TPI are written as NA.
std::string format_metrics_csv(const std::vector<MetricsReport>& reports);

}  // namespace whdspot::metrics
