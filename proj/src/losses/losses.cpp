#include "losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "common/error.hpp"
#include "diffcore/ops.hpp"

namespace whdspot::loss {

using diff::Shape;
using diff::Tensor;
using diff::Variable;

double WhdParams::max_distance() const {
  if (d_max) return *d_max;
  const double h = height - 1.0, w = width - 1.0;
  return std::sqrt(h * h + w * w);
}

void WhdParams::validate() const {
  require(height > 0 && width > 0, "whd: grid dimensions must be positive");
  require(epsilon > 0, "whd: epsilon must be positive");
  require(alpha >= 1, "whd: alpha must be >= 1");
  require(max_distance() > 0, "whd: d_max must be positive (use a grid larger than 1x1 or set d_max)");
}

namespace {

void check_probabilities(std::span<const double> p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::Numeric, "whd: probability " + std::to_string(v) + " outside [0,1]");
}

// Forward quantities kept for the backward pass of one image.
struct WhdContext {
  std::vector<double> nearest;           // min_y d(x,y), or d_max without points
  std::vector<std::int64_t> best_pixel;  // argmin_x of the coverage term per point
  double mass = 0.0;                     // sum p + eps
  double weighted = 0.0;                 // sum p * nearest
  WhdTerms terms;
};

WhdContext evaluate(std::span<const double> p, const PointSet& points, const WhdParams& params, double s) {
  params.validate();
  const std::int64_t h = params.height, w = params.width;
  require(static_cast<std::int64_t>(p.size()) == h * w,
          "whd: map has " + std::to_string(p.size()) + " values for a " + std::to_string(h) + "x" + std::to_string(w) +
              " grid");
  check_probabilities(p);
  const double eps = params.epsilon, dmax = params.max_distance(), alpha = params.alpha;

  WhdContext ctx;
  ctx.nearest.assign(p.size(), points.empty() ? dmax : std::numeric_limits<double>::infinity());
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t c = 0; c < w; ++c) {
      double& m = ctx.nearest[r * w + c];
      for (const auto& y : points) m = std::min(m, std::hypot(c - y.x, r - y.y));
    }
  for (std::size_t i = 0; i < p.size(); ++i) {
    ctx.mass += p[i];
    ctx.weighted += p[i] * ctx.nearest[i];
  }
  ctx.mass += eps;
  ctx.terms.localization = ctx.weighted / ctx.mass;

  if (!points.empty()) {
    std::vector<double> denom(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) denom[i] = std::pow(p[i], alpha) + eps / dmax;
    double total = 0.0;
    for (const auto& y : points) {
      double best = std::numeric_limits<double>::infinity();
      std::int64_t arg = 0;
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) {
          const double v = (std::hypot(c - y.x, r - y.y) + eps) / denom[r * w + c];
          if (v < best) {
            best = v;
            arg = r * w + c;
          }
        }
      ctx.best_pixel.push_back(arg);
      total += best;
    }
    ctx.terms.coverage = total / static_cast<double>(points.size());
  }
  const double truth = static_cast<double>(points.size());
  ctx.terms.count = smooth_l1(truth - softplus_count(s));
  return ctx;
}

// Adds d(total)/dp * scale into grad_p and returns d(total)/ds * scale.
double backprop(const WhdContext& ctx, std::span<const double> p, const PointSet& points, const WhdParams& params,
                double s, double scale, double* grad_p) {
  const double eps = params.epsilon, dmax = params.max_distance(), alpha = params.alpha;
  if (grad_p) {
    const double b = ctx.mass;
    for (std::size_t i = 0; i < p.size(); ++i) grad_p[i] += scale * (ctx.nearest[i] / b - ctx.weighted / (b * b));
    const std::int64_t w = params.width;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const std::int64_t i = ctx.best_pixel[k];
      const double px = p[i];
      const double den = std::pow(px, alpha) + eps / dmax;
      const double d = std::hypot(static_cast<double>(i % w) - points[k].x, static_cast<double>(i / w) - points[k].y);
      const double df = -(d + eps) * alpha * std::pow(px, alpha - 1.0) / (den * den);
      grad_p[i] += scale * df / static_cast<double>(points.size());
    }
  }
  const double residual = static_cast<double>(points.size()) - softplus_count(s);
  return scale * smooth_l1_derivative(residual) * -diff::sigmoid_value(s);
}

}  // namespace

double soft_count(std::span<const double> p) {
  check_probabilities(p);
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_derivative(double x) {
  if (std::abs(x) < 1.0) return x;
  return x > 0 ? 1.0 : -1.0;
}

double softplus_count(double s) { return diff::softplus_value(s); }

long rounded_count(double c_hat) { return std::lrint(c_hat); }

WhdTerms whd_terms(std::span<const double> p, const PointSet& points, const WhdParams& params, double s) {
  return evaluate(p, points, params, s).terms;
}

Variable whd_loss(diff::Tape& tape, const Variable& p, const PointSet& points, const WhdParams& params,
                  const Variable& s) {
  require(s.size() == 1, "whd_loss: count signal must be a single value");
  const Variable map = diff::reshape(tape, p, Shape{1, 1, params.height, params.width});
  return whd_loss_batch(tape, map, {points}, params, diff::reshape(tape, s, Shape{1}));
}

Variable whd_loss_batch(diff::Tape& tape, const Variable& probmap, const std::vector<PointSet>& points,
                        const WhdParams& params, const Variable& s) {
  const Shape& ps = probmap.shape();
  require(ps.size() == 4 && ps[1] == 1, "whd_loss_batch: probability map must be [N,1,H,W], got " +
                                            diff::to_string(ps));
  require(ps[2] == params.height && ps[3] == params.width,
          "whd_loss_batch: map " + diff::to_string(ps) + " does not match the configured grid");
  const std::int64_t n = ps[0], pixels = ps[2] * ps[3];
  require(static_cast<std::int64_t>(points.size()) == n, "whd_loss_batch: need one point set per image");
  require(s.shape() == Shape{n}, "whd_loss_batch: count signal must have shape [" + std::to_string(n) + "]");
  require(n > 0, "whd_loss_batch: empty batch");

  std::vector<WhdContext> contexts;
  double total = 0.0;
  for (std::int64_t b = 0; b < n; ++b) {
    std::span<const double> slice(probmap.value().ptr() + b * pixels, static_cast<std::size_t>(pixels));
    contexts.push_back(evaluate(slice, points[b], params, s.value()[b]));
    total += contexts.back().terms.total();
  }
  total /= static_cast<double>(n);

  return tape.emit("whd_loss", {probmap, s}, Tensor::scalar(total),
                   [probmap, s, points, params, contexts = std::move(contexts), n, pixels](const Tensor& g) {
                     const double scale = g[0] / static_cast<double>(n);
                     for (std::int64_t b = 0; b < n; ++b) {
                       std::span<const double> slice(probmap.value().ptr() + b * pixels,
                                                     static_cast<std::size_t>(pixels));
                       double* gp = probmap.requires_grad() ? probmap.grad().ptr() + b * pixels : nullptr;
                       const double gs = backprop(contexts[b], slice, points[b], params, s.value()[b], scale, gp);
                       if (s.requires_grad()) s.grad()[b] += gs;
                     }
                   });
}

Variable cross_entropy(diff::Tape& tape, const Variable& logits, std::span<const int> labels) {
  require(logits.shape().size() == 2, "cross_entropy: logits must be [N,K], got " + diff::to_string(logits.shape()));
  const std::int64_t n = logits.shape()[0], k = logits.shape()[1];
  require(static_cast<std::int64_t>(labels.size()) == n, "cross_entropy: need one label per row");
  require(n > 0, "cross_entropy: empty batch");
  for (int l : labels)
    require(l >= 0 && l < k, "cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(k) + ")");

  Tensor probs(logits.shape());
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = logits.value().ptr() + i * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[labels[i]];
    for (std::int64_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - log_z);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return tape.emit("cross_entropy", {logits}, Tensor::scalar(total / static_cast<double>(n)),
                   [logits, probs = std::move(probs), lab = std::move(lab), n, k](const Tensor& g) {
                     if (!logits.requires_grad()) return;
                     auto gx = logits.grad().data();
                     const double scale = g[0] / static_cast<double>(n);
                     for (std::int64_t i = 0; i < n; ++i)
                       for (std::int64_t j = 0; j < k; ++j)
                         gx[i * k + j] += scale * (probs[i * k + j] - (j == lab[i] ? 1.0 : 0.0));
                   });
}

}  // namespace whdspot::loss
