#include "proposals/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace whdspot::proposals {

using diff::Shape;
using diff::Tensor;

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  // Areas from the same edge differences, so iou(a, a) is exactly 1.
  const double area_a = ((a.x + a.w) - a.x) * ((a.y + a.h) - a.y);
  const double area_b = ((b.x + b.w) - b.x) * ((b.y + b.h) - b.y);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

Box clip(const Box& b, int image_size) {
  const Bounds bd = Bounds::of_image(image_size);
  const double x0 = std::clamp(b.x, bd.lo, bd.hi), x1 = std::clamp(b.x + b.w, bd.lo, bd.hi);
  const double y0 = std::clamp(b.y, bd.lo, bd.hi), y1 = std::clamp(b.y + b.h, bd.lo, bd.hi);
  return {x0, y0, x1 - x0, y1 - y0};
}

Label label_for(double v) {
  if (v >= 0.5 && v <= 1.0) return Label::positive;
  if (v >= 0.1 && v <= 0.2) return Label::negative;
  return Label::ignore;
}

LabeledProposal label_proposal(const Box& box, const BoxSet& truth) {
  LabeledProposal p;
  p.box = box;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double v = iou(box, truth[i]);
    if (!p.matched || v > p.iou) {
      p.iou = v;
      p.matched = static_cast<int>(i);
    }
  }
  p.label = label_for(p.iou);
  return p;
}

std::vector<LabeledProposal> generate_train_proposals(const BoxSet& truth, int image_size,
                                                       const ProposalConfig& config, std::uint64_t seed) {
  require(config.count >= 1, "proposals: count must be at least 1");
  require(image_size >= 2, "proposals: image size must be at least 2");
  require(config.positive_fraction >= 0 && config.positive_fraction <= 1, "proposals: positive fraction outside [0,1]");
  require(config.scale_min > 0 && config.scale_min <= config.scale_max, "proposals: bad jitter scale range");
  const double rmax = config.random_max > 0 ? config.random_max : image_size / 4.0;
  require(config.random_min > 0 && config.random_min <= rmax && rmax <= image_size,
          "proposals: random box sizes must satisfy 0 < min <= max <= image size");

  Rng rng(seed);
  const Bounds bd = Bounds::of_image(image_size);
  std::vector<LabeledProposal> out;
  out.reserve(static_cast<std::size_t>(config.count));
  const auto derived = truth.empty() ? 0 : static_cast<std::size_t>(std::lround(config.count * config.positive_fraction));
  for (std::size_t i = 0; i < truth.size() && out.size() < derived; ++i) out.push_back(label_proposal(truth[i], truth));
  std::size_t next = 0;
  while (out.size() < derived) {
    const Box& g = truth[next++ % truth.size()];
    Box b;
    do {
      const double w = g.w * rng.uniform(config.scale_min, config.scale_max);
      const double h = g.h * rng.uniform(config.scale_min, config.scale_max);
      const double cx = g.x + g.w / 2 + rng.uniform(-config.max_shift, config.max_shift) * g.w;
      const double cy = g.y + g.h / 2 + rng.uniform(-config.max_shift, config.max_shift) * g.h;
      b = clip({cx - w / 2, cy - h / 2, w, h}, image_size);
    } while (b.w <= 0 || b.h <= 0);
    out.push_back(label_proposal(b, truth));
  }
  while (out.size() < static_cast<std::size_t>(config.count)) {
    const double w = rng.uniform(config.random_min, rmax), h = rng.uniform(config.random_min, rmax);
    const Box b{rng.uniform(bd.lo, bd.hi - w), rng.uniform(bd.lo, bd.hi - h), w, h};
    out.push_back(label_proposal(b, truth));
  }
  return out;
}

BoxSet sliding_proposals(int image_size, const std::vector<int>& scales, int stride) {
  require(stride >= 1, "sliding_proposals: stride must be at least 1");
  BoxSet out;
  for (int s : scales) {
    require(s >= 1, "sliding_proposals: scales must be positive");
    if (s > image_size) {
      out.push_back(clip({-0.5, -0.5, static_cast<double>(s), static_cast<double>(s)}, image_size));
      continue;
    }
    for (int y = 0; y + s <= image_size; y += stride)
      for (int x = 0; x + s <= image_size; x += stride)
        out.push_back({x - 0.5, y - 0.5, static_cast<double>(s), static_cast<double>(s)});
  }
  return out;
}

Tensor extract_patch(const Tensor& image, const Box& box, int patch_size) {
  require(image.rank() == 3, "extract_patch: expected a [C,H,W] image, got " + diff::to_string(image.shape()));
  require(patch_size >= 1, "extract_patch: patch size must be positive");
  require(box.w > 0 && box.h > 0, "extract_patch: box has zero area");
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  require(box.x < w - 0.5 && box.x + box.w > -0.5 && box.y < h - 0.5 && box.y + box.h > -0.5,
          "extract_patch: box does not overlap the image");
  Tensor out(Shape{c, patch_size, patch_size});
  const double* src = image.ptr();
  for (int i = 0; i < patch_size; ++i) {
    const double sy = std::clamp(box.y + (i + 0.5) * box.h / patch_size, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::int64_t>(std::floor(sy));
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double ty = sy - y0;
    for (int j = 0; j < patch_size; ++j) {
      const double sx = std::clamp(box.x + (j + 0.5) * box.w / patch_size, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const std::int64_t x1 = std::min(x0 + 1, w - 1);
      const double tx = sx - x0;
      for (std::int64_t k = 0; k < c; ++k) {
        const double* plane = src + k * h * w;
        const double top = plane[y0 * w + x0] * (1 - tx) + plane[y0 * w + x1] * tx;
        const double bottom = plane[y1 * w + x0] * (1 - tx) + plane[y1 * w + x1] * tx;
        out[(k * patch_size + i) * patch_size + j] = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

std::vector<std::size_t> nms(const BoxSet& boxes, const std::vector<double>& scores, double iou_threshold) {
  require(boxes.size() == scores.size(), "nms: need one score per box");
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool keep = true;
    for (std::size_t k : kept)
      if (iou(boxes[i], boxes[k]) > iou_threshold) {
        keep = false;
        break;
      }
    if (keep) kept.push_back(i);
  }
  return kept;
}

}  // namespace whdspot::proposals
