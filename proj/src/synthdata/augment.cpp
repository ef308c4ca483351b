#include "synthdata/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "common/error.hpp"

namespace whdspot::data {

using diff::Shape;
using diff::Tensor;

namespace {

double wrap_angle(double theta) {
  const double pi = std::numbers::pi;
  double t = std::fmod(theta, pi);
  if (t < 0) t += pi;
  return t >= pi ? 0.0 : t;
}

// One clockwise quarter turn: (x, y) -> (H-1-y, x).
void rotate90(Tensor& image, GroundTruth& gt) {
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(Shape{c, w, h});
  for (std::int64_t k = 0; k < c; ++k)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) out[(k * w + x) * h + (h - 1 - y)] = image[(k * h + y) * w + x];
  image = std::move(out);
  const double hm = static_cast<double>(h - 1);
  for (auto& p : gt.centroids) p = {hm - p.y, p.x};
  for (auto& b : gt.boxes) b = {hm - b.y - b.h, b.x, b.h, b.w};
  for (auto& t : gt.orientations) t = wrap_angle(t + std::numbers::pi / 2);
}

void flip(Tensor& image, GroundTruth& gt, bool horizontal) {
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::int64_t k = 0; k < c; ++k)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t sx = horizontal ? w - 1 - x : x, sy = horizontal ? y : h - 1 - y;
        out[(k * h + y) * w + x] = image[(k * h + sy) * w + sx];
      }
  image = std::move(out);
  if (horizontal) {
    const double wm = static_cast<double>(w - 1);
    for (auto& p : gt.centroids) p.x = wm - p.x;
    for (auto& b : gt.boxes) b.x = wm - b.x - b.w;
    for (auto& t : gt.orientations) t = wrap_angle(std::numbers::pi - t);
  } else {
    const double hm = static_cast<double>(h - 1);
    for (auto& p : gt.centroids) p.y = hm - p.y;
    for (auto& b : gt.boxes) b.y = hm - b.y - b.h;
    for (auto& t : gt.orientations) t = wrap_angle(-t);
  }
}

}  // namespace

Augmented augment(const Tensor& image, const GroundTruth& truth, const std::vector<AugmentOp>& ops,
                  double brightness_scale) {
  require(image.rank() == 3, "augment: expected a [C,H,W] image, got " + diff::to_string(image.shape()));
  require(brightness_scale >= 0, "augment: brightness scale must be non-negative");
  Augmented out{image, truth};
  for (AugmentOp op : ops) {
    switch (op) {
      case AugmentOp::hflip: flip(out.image, out.truth, true); break;
      case AugmentOp::vflip: flip(out.image, out.truth, false); break;
      case AugmentOp::rot90: rotate90(out.image, out.truth); break;
      case AugmentOp::rot180:
        for (int i = 0; i < 2; ++i) rotate90(out.image, out.truth);
        break;
      case AugmentOp::rot270:
        for (int i = 0; i < 3; ++i) rotate90(out.image, out.truth);
        break;
      case AugmentOp::brightness:
        for (auto& v : out.image.data()) v = std::clamp(v * brightness_scale, 0.0, 1.0);
        break;
    }
  }
  return out;
}

}  // namespace whdspot::data
