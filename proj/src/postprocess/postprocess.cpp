#include "postprocess/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "losses/losses.hpp"

namespace whdspot::post {

namespace {

constexpr int kBins = 256;

int bin_of(double p) { return std::clamp(static_cast<int>(p * kBins), 0, kBins - 1); }

void check_map(const MapView& map) {
  require(map.height > 0 && map.width > 0, "postprocess: empty map");
  require(map.values.size() == static_cast<std::size_t>(map.height) * map.width,
          "postprocess: map size does not match its dimensions");
}

Component summarize(std::vector<int> pixels, const MapView& map) {
  Component c;
  c.pixels = std::move(pixels);
  std::sort(c.pixels.begin(), c.pixels.end());
  c.area = static_cast<int>(c.pixels.size());
  double sx = 0, sy = 0, ux = 0, uy = 0;
  int x0 = map.width, x1 = -1, y0 = map.height, y1 = -1;
  for (int i : c.pixels) {
    const int x = i % map.width, y = i / map.width;
    const double v = map.values[i];
    c.mass += v;
    sx += v * x, sy += v * y, ux += x, uy += y;
    x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  c.centroid = c.mass > 0 ? Point{sx / c.mass, sy / c.mass} : Point{ux / c.area, uy / c.area};
  // Keep the centroid inside the member extent.
  c.centroid.x = std::clamp(c.centroid.x, static_cast<double>(x0), static_cast<double>(x1));
  c.centroid.y = std::clamp(c.centroid.y, static_cast<double>(y0), static_cast<double>(y1));
  c.bounds = {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 - x0),
              static_cast<double>(y1 - y0)};
  c.mean_value = c.mass / c.area;
  return c;
}

}  // namespace

double otsu_threshold(const MapView& map) {
  check_map(map);
  std::vector<double> hist(kBins, 0.0);
  for (double p : map.values) hist[bin_of(p)] += 1.0;
  const double total = static_cast<double>(map.values.size());
  double all = 0.0;
  for (int b = 0; b < kBins; ++b) all += hist[b] * (b + 0.5) / kBins;

  double best = 0.0;
  int first = -1, last = -1;
  double w0 = 0.0, sum0 = 0.0;
  for (int k = 1; k < kBins; ++k) {
    w0 += hist[k - 1];
    sum0 += hist[k - 1] * (k - 0.5) / kBins;
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0, m1 = (all - sum0) / w1;
    const double between = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      first = last = k;
    } else if (between == best && first >= 0) {
      last = k;
    }
  }
  if (first < 0) return 0.5;
  return (first + last) / 2.0 / kBins;
}

std::vector<Component> connected_components(const std::vector<bool>& mask, const MapView& map) {
  check_map(map);
  require(mask.size() == map.values.size(), "connected_components: mask and map sizes differ");
  const int h = map.height, w = map.width;
  std::vector<int> label(mask.size(), -1);
  std::vector<Component> out;
  std::vector<int> stack;
  for (int start = 0; start < h * w; ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(out.size());
    std::vector<int> pixels;
    stack.assign(1, start);
    label[start] = id;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      pixels.push_back(i);
      const int x = i % w, y = i / w;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h) {
            const int j = ny * w + nx;
            if (mask[j] && label[j] < 0) {
              label[j] = id;
              stack.push_back(j);
            }
          }
        }
    }
    out.push_back(summarize(std::move(pixels), map));
  }
  return out;
}

void ExtractionParams::validate() const {
  require(threshold > 0.0 && threshold < 1.0, "extraction: threshold must lie in (0,1)");
  require(min_area >= 1, "extraction: min component area must be at least 1");
}

std::optional<std::pair<Component, Component>> split_component(const Component& c, const MapView& map) {
  if (c.area < 2) return std::nullopt;
  const int w = map.width;
  const auto pos = [&](int i) { return Point{static_cast<double>(i % w), static_cast<double>(i / w)}; };
  // Seeds: the member farthest from the centroid, then the member farthest from it.
  const auto farthest = [&](Point from) {
    std::size_t best = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < c.pixels.size(); ++i) {
      const Point p = pos(c.pixels[i]);
      const double d = (p.x - from.x) * (p.x - from.x) + (p.y - from.y) * (p.y - from.y);
      if (d > far) far = d, best = i;
    }
    return best;
  };
  const std::size_t sa = farthest(c.centroid), sb = farthest(pos(c.pixels[sa]));
  Point ca = pos(c.pixels[sa]), cb = pos(c.pixels[sb]);
  std::vector<int> assign(c.pixels.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < c.pixels.size(); ++i) {
      const Point p = pos(c.pixels[i]);
      const double da = std::hypot(p.x - ca.x, p.y - ca.y), db = std::hypot(p.x - cb.x, p.y - cb.y);
      const int a = db < da ? 1 : 0;
      changed = changed || a != assign[i];
      assign[i] = a;
    }
    if (!changed) break;
    double wa = 0, wb = 0, xa = 0, ya = 0, xb = 0, yb = 0;
    int na = 0, nb = 0;
    for (std::size_t i = 0; i < c.pixels.size(); ++i) {
      const Point p = pos(c.pixels[i]);
      const double v = std::max(map.values[c.pixels[i]], 1e-12);
      if (assign[i] == 0) wa += v, xa += v * p.x, ya += v * p.y, ++na;
      else wb += v, xb += v * p.x, yb += v * p.y, ++nb;
    }
    if (na == 0 || nb == 0) return std::nullopt;
    ca = {xa / wa, ya / wa};
    cb = {xb / wb, yb / wb};
  }
  std::vector<int> pa, pb;
  for (std::size_t i = 0; i < c.pixels.size(); ++i) (assign[i] == 0 ? pa : pb).push_back(c.pixels[i]);
  if (pa.empty() || pb.empty()) return std::nullopt;
  return std::make_pair(summarize(std::move(pa), map), summarize(std::move(pb), map));
}

std::vector<PointDetection> extract_detections(const MapView& map, const ExtractionParams& params,
                                               std::optional<double> count) {
  check_map(map);
  params.validate();
  const double tau = params.mode == ThresholdMode::otsu ? otsu_threshold(map) : params.threshold;
  std::vector<bool> mask(map.values.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = map.values[i] >= tau && map.values[i] > 0.0;
  std::vector<Component> comps;
  for (auto& c : connected_components(mask, map))
    if (c.area >= params.min_area) comps.push_back(std::move(c));

  if (params.reconcile && count) {
    const long target = std::max(0L, loss::rounded_count(*count));
    std::vector<bool> indivisible(comps.size(), false);
    while (static_cast<long>(comps.size()) < target) {
      std::size_t pick = comps.size();
      for (std::size_t i = 0; i < comps.size(); ++i)
        if (!indivisible[i] && (pick == comps.size() || comps[i].area > comps[pick].area)) pick = i;
      if (pick == comps.size()) break;
      auto halves = split_component(comps[pick], map);
      if (!halves) {
        indivisible[pick] = true;
        continue;
      }
      comps[pick] = std::move(halves->first);
      comps.insert(comps.begin() + static_cast<std::ptrdiff_t>(pick) + 1, std::move(halves->second));
      indivisible.insert(indivisible.begin() + static_cast<std::ptrdiff_t>(pick) + 1, false);
    }
    if (static_cast<long>(comps.size()) > target) {
      std::vector<std::size_t> order(comps.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return comps[a].mass > comps[b].mass; });
      order.resize(static_cast<std::size_t>(target));
      std::sort(order.begin(), order.end());
      std::vector<Component> kept;
      for (std::size_t i : order) kept.push_back(std::move(comps[i]));
      comps = std::move(kept);
    }
  }
  std::vector<PointDetection> out;
  for (const auto& c : comps) out.push_back({c.centroid, c.mean_value});
  return out;
}

PointSet extract_centroids(const MapView& map, const ExtractionParams& params, std::optional<double> count) {
  PointSet out;
  for (const auto& d : extract_detections(map, params, count)) out.push_back(d.point);
  return out;
}

}  // namespace whdspot::post
