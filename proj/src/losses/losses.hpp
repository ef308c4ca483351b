#pragma once

#include <optional>
#include <span>
#include <vector>

#include "common/geometry.hpp"
#include "diffcore/tape.hpp"

namespace whdspot::loss {

struct WhdParams {
  double alpha = 4.0;
  double epsilon = 1e-6;
  std::optional<double> d_max;  // defaults to the grid diagonal
  int height = 0;
  int width = 0;

  static WhdParams for_grid(int height, int width) {
    WhdParams p;
    p.height = height;
    p.width = width;
    return p;
  }
  double max_distance() const;
  void validate() const;
};

// Sum of the map; the soft number of detections.
double soft_count(std::span<const double> p);

// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
double smooth_l1(double x);
double smooth_l1_derivative(double x);

// Estimated count log(1 + e^s) from the regression signal s.
double softplus_count(double s);
// Nearest integer, ties to even.
long rounded_count(double c_hat);

struct WhdTerms {
  double localization = 0.0;  // p-weighted mean distance to the nearest point
  double coverage = 0.0;      // mean over points of the best weighted distance
  double count = 0.0;         // smooth L1 on the count residual
  double total() const { return localization + coverage + count; }
};

// Weighted Hausdorff distance plus count regression for one image. `p` holds
// height*width probabilities in row-major order; `s` is the count signal.
// For an empty point set the nearest distance is taken as d_max and the
// coverage term and true count are zero.
WhdTerms whd_terms(std::span<const double> p, const PointSet& points, const WhdParams& params, double s);

// Differentiable form of whd_terms(...).total(); p may have any shape with
// height*width elements and s a single element.
diff::Variable whd_loss(diff::Tape& tape, const diff::Variable& p, const PointSet& points, const WhdParams& params,
                        const diff::Variable& s);

// Mean of whd_loss over a batch: probmap [N,1,H,W], s [N], one point set per image.
diff::Variable whd_loss_batch(diff::Tape& tape, const diff::Variable& probmap, const std::vector<PointSet>& points,
                              const WhdParams& params, const diff::Variable& s);

// Mean negative log-likelihood of `labels` under softmax(logits[N,K]).
diff::Variable cross_entropy(diff::Tape& tape, const diff::Variable& logits, std::span<const int> labels);

}  // namespace whdspot::loss
