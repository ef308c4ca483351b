#pragma once

// Brute-force reference implementations used only by tests. They are written
// directly from the definitions and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// out[n][k][oi][oj] = sum_{c,ki,kj} x[n][c][oi*s-p+ki][oj*s-p+kj] * w[k][c][ki][kj]
inline std::vector<double> conv2d(const std::vector<double>& x, int n, int c, int h, int w,
                                  const std::vector<double>& kern, int k, int kh, int kw, int stride, int pad) {
  const int ho = (h + 2 * pad - kh) / stride + 1, wo = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n) * k * ho * wo);
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < k; ++o)
      for (int oi = 0; oi < ho; ++oi)
        for (int oj = 0; oj < wo; ++oj) {
          double s = 0.0;
          for (int ch = 0; ch < c; ++ch)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj) {
                const int ii = oi * stride - pad + ki, jj = oj * stride - pad + kj;
                if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                s += x[((b * c + ch) * h + ii) * w + jj] * kern[((o * c + ch) * kh + ki) * kw + kj];
              }
          out[((b * k + o) * ho + oi) * wo + oj] = s;
        }
  return out;
}

// 2x2 stride-2 max pool over even-sized planes, scanning each window.
inline std::vector<double> maxpool2x2(const std::vector<double>& x, int planes, int h, int w) {
  std::vector<double> out(static_cast<std::size_t>(planes) * (h / 2) * (w / 2));
  for (int p = 0; p < planes; ++p)
    for (int i = 0; i < h / 2; ++i)
      for (int j = 0; j < w / 2; ++j) {
        double m = -std::numeric_limits<double>::infinity();
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) m = std::max(m, x[(p * h + 2 * i + di) * w + 2 * j + dj]);
        out[(p * (h / 2) + i) * (w / 2) + j] = m;
      }
  return out;
}

// x[n][fin] * w[fin][fout] + b[fout]
inline std::vector<double> linear(const std::vector<double>& x, int n, int fin, const std::vector<double>& w,
                                  int fout, const std::vector<double>& b) {
  std::vector<double> out(static_cast<std::size_t>(n) * fout);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < fout; ++j) {
      double s = 0.0;
      for (int k = 0; k < fin; ++k) s += x[i * fin + k] * w[k * fout + j];
      out[i * fout + j] = s + b[j];
    }
  return out;
}

}  // namespace oracle

namespace oracle {

struct Pt {
  double x, y;
};

// Direct evaluation of the weighted Hausdorff objective with count term.
// p is row-major h x w; pixel (r,c) sits at (x=c, y=r).
inline double whd(const std::vector<double>& p, int h, int w, const std::vector<Pt>& ys, double alpha, double eps,
                  double dmax, double s) {
  double mass = 0.0;
  for (double v : p) mass += v;
  double first = 0.0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double m = ys.empty() ? dmax : std::numeric_limits<double>::infinity();
      for (const auto& y : ys) m = std::min(m, std::sqrt((c - y.x) * (c - y.x) + (r - y.y) * (r - y.y)));
      first += p[r * w + c] * m;
    }
  first /= mass + eps;
  double second = 0.0;
  for (const auto& y : ys) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double d = std::sqrt((c - y.x) * (c - y.x) + (r - y.y) * (r - y.y));
        best = std::min(best, (d + eps) / (std::pow(p[r * w + c], alpha) + eps / dmax));
      }
    second += best;
  }
  if (!ys.empty()) second /= static_cast<double>(ys.size());
  const double residual = static_cast<double>(ys.size()) - std::log(1.0 + std::exp(s));
  const double third = std::abs(residual) < 1 ? 0.5 * residual * residual : std::abs(residual) - 0.5;
  return first + second + third;
}

}  // namespace oracle

namespace oracle {

struct Rect {
  double x, y, w, h;
};

// Overlap by pixel-free interval arithmetic.
inline double overlap_ratio(const Rect& a, const Rect& b) {
  const double left = a.x > b.x ? a.x : b.x, right = a.x + a.w < b.x + b.w ? a.x + a.w : b.x + b.w;
  const double top = a.y > b.y ? a.y : b.y, bottom = a.y + a.h < b.y + b.h ? a.y + a.h : b.y + b.h;
  const double inter = (right > left && bottom > top) ? (right - left) * (bottom - top) : 0.0;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// Repeatedly takes the best remaining box (lowest index on ties) and removes
// everything overlapping it beyond the threshold.
inline std::vector<std::size_t> nms(const std::vector<Rect>& boxes, const std::vector<double>& scores, double thr) {
  std::vector<bool> alive(boxes.size(), true);
  std::vector<std::size_t> kept;
  while (true) {
    std::size_t best = boxes.size();
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && (best == boxes.size() || scores[i] > scores[best])) best = i;
    if (best == boxes.size()) return kept;
    kept.push_back(best);
    alive[best] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i)
      if (alive[i] && overlap_ratio(boxes[i], boxes[best]) > thr) alive[i] = false;
  }
}

// Bilinear value of a row-major h x w plane at (x, y), coordinates clamped to
// the pixel-centre range.
inline double bilinear(const std::vector<double>& plane, int h, int w, double x, double y) {
  x = std::min(std::max(x, 0.0), w - 1.0);
  y = std::min(std::max(y, 0.0), h - 1.0);
  const int c0 = static_cast<int>(x), r0 = static_cast<int>(y);
  const int c1 = c0 + 1 < w ? c0 + 1 : c0, r1 = r0 + 1 < h ? r0 + 1 : r0;
  const double fx = x - c0, fy = y - r0;
  return plane[r0 * w + c0] * (1 - fx) * (1 - fy) + plane[r0 * w + c1] * fx * (1 - fy) +
         plane[r1 * w + c0] * (1 - fx) * fy + plane[r1 * w + c1] * fx * fy;
}

}  // namespace oracle

namespace oracle {

// Otsu by direct evaluation: for every candidate k/256 split the pixels and
// compute the between-class variance of their bin-centre values.
inline double otsu_best_variance(const std::vector<double>& p, double* variance_at = nullptr, double at = -1) {
  double best = 0.0;
  for (int k = 1; k < 256; ++k) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (double v : p) {
      int b = static_cast<int>(v * 256);
      b = b < 0 ? 0 : b > 255 ? 255 : b;
      const double centre = (b + 0.5) / 256;
      if (b < k) n0 += 1, s0 += centre;
      else n1 += 1, s1 += centre;
    }
    if (n0 == 0 || n1 == 0) continue;
    const double n = n0 + n1, m0 = s0 / n0, m1 = s1 / n1;
    const double var = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
    if (var > best) best = var;
    if (variance_at && std::abs(k / 256.0 - at) < 1e-12) *variance_at = var;
  }
  return best;
}

}  // namespace oracle

namespace oracle {

struct Assignment {
  int matches = 0;
  double total = 0.0;
  std::vector<int> truth_of_pred;  // -1 when unmatched
};

// Enumerates every partial one-to-one assignment using only pairs within r;
// keeps the most matches, then the smallest total distance.
inline Assignment best_assignment(const std::vector<Pt>& pred, const std::vector<Pt>& truth, double r) {
  Assignment best;
  best.truth_of_pred.assign(pred.size(), -1);
  std::vector<int> current(pred.size(), -1);
  std::vector<bool> taken(truth.size(), false);
  const auto dist = [&](std::size_t i, std::size_t j) {
    return std::sqrt((pred[i].x - truth[j].x) * (pred[i].x - truth[j].x) +
                     (pred[i].y - truth[j].y) * (pred[i].y - truth[j].y));
  };
  const auto recurse = [&](auto&& self, std::size_t i, int matches, double total) -> void {
    if (i == pred.size()) {
      if (matches > best.matches || (matches == best.matches && total < best.total)) {
        best.matches = matches;
        best.total = total;
        best.truth_of_pred = current;
      }
      return;
    }
    current[i] = -1;
    self(self, i + 1, matches, total);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (taken[j] || dist(i, j) > r) continue;
      taken[j] = true;
      current[i] = static_cast<int>(j);
      self(self, i + 1, matches + 1, total + dist(i, j));
      taken[j] = false;
      current[i] = -1;
    }
  };
  recurse(recurse, 0, 0, 0.0);
  return best;
}

}  // namespace oracle
