#include "synthdata/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace whdspot::data {

namespace {

constexpr int kPlacementAttempts = 500;
constexpr int kFenceAttempts = 40;

struct Rgb {
  double r, g, b;
};

Rgb hsv(double hue_deg, double s, double v) {
  const double h = std::fmod(hue_deg, 360.0) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
  const double m = v - c;
  Rgb out{0, 0, 0};
  switch (static_cast<int>(h)) {
    case 0: out = {c, x, 0}; break;
    case 1: out = {x, c, 0}; break;
    case 2: out = {0, c, x}; break;
    case 3: out = {0, x, c}; break;
    case 4: out = {x, 0, c}; break;
    default: out = {c, 0, x}; break;
  }
  return {out.r + m, out.g + m, out.b + m};
}

// Multi-octave value noise in roughly [-1, 1].
std::vector<double> value_noise(int size, int octaves, double cell, Rng& rng) {
  std::vector<double> out(static_cast<std::size_t>(size) * size, 0.0);
  double amplitude = 1.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const double step = std::max(1.0, cell / std::pow(2.0, o));
    const int n = static_cast<int>(std::ceil(size / step)) + 2;
    std::vector<double> lattice(static_cast<std::size_t>(n) * n);
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double fx = x / step, fy = y / step;
        const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
        double tx = fx - ix, ty = fy - iy;
        tx = tx * tx * (3 - 2 * tx);
        ty = ty * ty * (3 - 2 * ty);
        const double a = lattice[iy * n + ix], b = lattice[iy * n + ix + 1];
        const double c = lattice[(iy + 1) * n + ix], d = lattice[(iy + 1) * n + ix + 1];
        out[y * size + x] += amplitude * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
      }
    norm += amplitude;
    amplitude *= 0.5;
  }
  for (auto& v : out) v /= norm;
  return out;
}

bool inside_box(const Box& b, double x, double y) { return x >= b.x && x <= b.x + b.w && y >= b.y && y <= b.y + b.h; }

// Fence coverage of a straight line through (x0,y0)-(x1,y1) with the given half width.
std::vector<double> fence_coverage(int size, double x0, double y0, double x1, double y1, double half_width) {
  std::vector<double> cov(static_cast<std::size_t>(size) * size, 0.0);
  const double dx = x1 - x0, dy = y1 - y0, len = std::hypot(dx, dy);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dist = std::abs(dy * (x - x0) - dx * (y - y0)) / len;
      cov[y * size + x] = std::clamp(half_width + 0.5 - dist, 0.0, 1.0);
    }
  return cov;
}

// Random point on the image border, on side 0..3.
void border_point(int side, int size, Rng& rng, double& x, double& y) {
  const double t = rng.uniform(0.0, size - 1.0), e = size - 1.0;
  switch (side) {
    case 0: x = t, y = 0; break;
    case 1: x = e, y = t; break;
    case 2: x = t, y = e; break;
    default: x = 0, y = t; break;
  }
}

}  // namespace

SceneConfig SceneConfig::full() {
  SceneConfig c;
  c.image_size = 256;
  c.length_min = 18.0;
  c.length_max = 22.0;
  c.width_min = 9.0;
  c.width_max = 11.0;
  c.edge_softness = 2.0;
  c.noise_cell = 64.0;
  c.shadow_offset = 5.0;
  c.min_separation = 22.0;
  return c;
}

SceneConfig SceneConfig::easy() {
  SceneConfig c;
  c.count_min = 1;
  c.count_max = 8;
  c.brightness_min = 0.85;
  c.noise_amplitude = 0.05;
  c.fence_probability = 0.2;
  c.shadow_alpha = 0.25;
  c.illumination_min = 0.9;
  c.contrast_margin = 0.2;
  return c;
}

void SceneConfig::validate() const {
  require(image_size >= 8, "scene: image size must be at least 8");
  require(count_min >= 0 && count_min <= count_max, "scene: count range must satisfy 0 <= min <= max");
  require(length_min > 0 && length_min <= length_max, "scene: bad sheep length range");
  require(width_min > 0 && width_min <= width_max, "scene: bad sheep width range");
  require(width_max <= length_min, "scene: sheep width must not exceed length");
  require(length_max < image_size - 1, "scene: sheep longer than the image");
  require(brightness_min >= 0 && brightness_min <= brightness_max && brightness_max <= 1,
          "scene: brightness range must lie in [0,1]");
  require(edge_softness > 0, "scene: edge softness must be positive");
  require(noise_octaves >= 1 && noise_cell >= 1, "scene: noise needs at least one octave and a cell >= 1 px");
  require(fence_probability >= 0 && fence_probability <= 1, "scene: fence probability must lie in [0,1]");
  require(shadow_alpha >= 0 && shadow_alpha <= 1, "scene: shadow alpha must lie in [0,1]");
  require(illumination_min > 0 && illumination_min <= illumination_max && illumination_max <= 1,
          "scene: illumination range must lie in (0,1]");
  require(min_separation >= 0, "scene: min separation must be non-negative");
  if (!allow_overlap) {
    // Discs of diameter min_separation around every centre must fit the image.
    const double r = min_separation / 2.0;
    const double capacity = 0.9069 * (image_size + 2 * r) * (image_size + 2 * r) / (std::numbers::pi * r * r);
    require(r == 0 || count_max <= capacity,
            "scene: " + std::to_string(count_max) + " sheep cannot be " + std::to_string(min_separation) +
                " px apart in a " + std::to_string(image_size) + " px image; lower the count or separation");
  }
}

double Ellipse::radius(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(theta), s = std::sin(theta);
  const double u = (dx * c + dy * s) / semi_major, v = (-dx * s + dy * c) / semi_minor;
  return std::sqrt(u * u + v * v);
}

Box Ellipse::bounds() const {
  const double c = std::cos(theta), s = std::sin(theta);
  const double hx = std::sqrt(semi_major * semi_major * c * c + semi_minor * semi_minor * s * s);
  const double hy = std::sqrt(semi_major * semi_major * s * s + semi_minor * semi_minor * c * c);
  return {cx - hx, cy - hy, 2 * hx, 2 * hy};
}

double ellipse_alpha(const Ellipse& e, double x, double y, double softness) {
  const double r = e.radius(x, y);
  if (r == 0.0) return 1.0;
  // Signed distance to the boundary along the ray from the centre.
  const double d = std::hypot(x - e.cx, y - e.cy) * (1.0 - 1.0 / r);
  return std::clamp(0.5 - d / softness, 0.0, 1.0);
}

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Scene render_scene(const SceneConfig& config, std::uint64_t index) {
  config.validate();
  Rng rng(config.seed, index);
  const int size = config.image_size;
  const std::size_t pixels = static_cast<std::size_t>(size) * size;
  Scene scene;

  // Placement.
  const int count = static_cast<int>(rng.integer(config.count_min, config.count_max));
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      Ellipse e;
      e.semi_major = rng.uniform(config.length_min, config.length_max) / 2.0;
      e.semi_minor = rng.uniform(config.width_min, config.width_max) / 2.0;
      e.theta = rng.uniform(0.0, std::numbers::pi);
      const Box b = e.bounds();
      const double hx = b.w / 2.0, hy = b.h / 2.0;
      e.cx = rng.uniform(hx, size - 1.0 - hx);
      e.cy = rng.uniform(hy, size - 1.0 - hy);
      placed = true;
      if (!config.allow_overlap)
        for (const auto& other : scene.ellipses)
          if (std::hypot(e.cx - other.cx, e.cy - other.cy) < config.min_separation) placed = false;
      if (placed) scene.ellipses.push_back(e);
    }
    if (!placed)
      fail(ErrorKind::Runtime, "scene " + std::to_string(index) + ": could not place sheep " + std::to_string(k + 1) +
                                   " of " + std::to_string(count) + " after " + std::to_string(kPlacementAttempts) +
                                   " attempts; lower the count range or the minimum separation");
  }
  for (const auto& e : scene.ellipses) {
    const Box b = e.bounds();
    scene.truth.boxes.push_back(b);
    scene.truth.centroids.push_back({e.cx, e.cy});
    scene.truth.orientations.push_back(e.theta);
  }

  // Grass.
  std::vector<Rgb> px(pixels);
  const Rgb base = hsv(rng.uniform(config.hue_min, config.hue_max), config.grass_saturation, config.grass_value);
  const auto noise = value_noise(size, config.noise_octaves, config.noise_cell, rng);
  for (std::size_t i = 0; i < pixels; ++i) {
    const double v = 1.0 + config.noise_amplitude * noise[i] / config.grass_value;
    const double grain = 1.0 + 0.03 * rng.uniform(-1.0, 1.0);
    px[i] = {base.r * v * grain, base.g * v * grain, base.b * v * grain};
  }

  // Fence, kept out of every ground-truth box.
  scene.fence_mask.assign(pixels, 0);
  if (rng.bernoulli(config.fence_probability)) {
    std::vector<double> cov;
    for (int attempt = 0; attempt < kFenceAttempts; ++attempt) {
      const int side0 = static_cast<int>(rng.integer(0, 3));
      const int side1 = (side0 + static_cast<int>(rng.integer(1, 3))) % 4;
      double x0, y0, x1, y1;
      border_point(side0, size, rng, x0, y0);
      border_point(side1, size, rng, x1, y1);
      if (std::hypot(x1 - x0, y1 - y0) < size / 4.0) continue;
      const double half_width = 0.5 * static_cast<double>(rng.integer(1, 3)) - 0.5;
      auto candidate = fence_coverage(size, x0, y0, x1, y1, half_width);
      bool clear = true;
      for (int y = 0; y < size && clear; ++y)
        for (int x = 0; x < size && clear; ++x)
          if (candidate[y * size + x] > 0)
            for (const auto& b : scene.truth.boxes)
              if (inside_box(b, x, y)) clear = false;
      cov = std::move(candidate);
      if (clear) break;
    }
    if (!cov.empty()) {
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          double& c = cov[y * size + x];
          for (const auto& b : scene.truth.boxes)
            if (inside_box(b, x, y)) c = 0.0;
          if (c <= 0) continue;
          Rgb& p = px[y * size + x];
          const double f = config.fence_brightness;
          p = {p.r + c * (f - p.r), p.g + c * (f - p.g), p.b + c * (0.95 * f - p.b)};
          scene.fence_mask[y * size + x] = 1;
        }
    }
  }

  // Shadows, then the sheep themselves.
  for (const auto& e : scene.ellipses) {
    Ellipse shadow = e;
    shadow.cx += config.shadow_offset;
    shadow.cy += config.shadow_offset;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double a = config.shadow_alpha * ellipse_alpha(shadow, x, y, config.edge_softness);
        Rgb& p = px[y * size + x];
        p = {p.r * (1 - a), p.g * (1 - a), p.b * (1 - a)};
      }
  }
  const double light = rng.uniform(config.illumination_min, config.illumination_max);
  double background = 0.0;
  std::size_t background_pixels = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      bool covered = false;
      for (const auto& e : scene.ellipses) covered = covered || ellipse_alpha(e, x, y, config.edge_softness) > 0;
      if (covered) continue;
      const Rgb& p = px[y * size + x];
      background += luminance(p.r, p.g, p.b);
      ++background_pixels;
    }
  if (background_pixels) background /= static_cast<double>(background_pixels);
  const double wool_luma = luminance(1.0, 0.98, 0.92);

  for (const auto& e : scene.ellipses) {
    double b = rng.uniform(config.brightness_min, config.brightness_max);
    // Raise the brightness if the interior would fall short of the contrast margin.
    double base_luma = 0.0, alpha_sum = 0.0;
    int interior = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        if (e.radius(x, y) > 1.0) continue;
        const double a = ellipse_alpha(e, x, y, config.edge_softness);
        const Rgb& p = px[y * size + x];
        base_luma += (1 - a) * luminance(p.r, p.g, p.b);
        alpha_sum += a * wool_luma;
        ++interior;
      }
    if (interior > 0) {
      const double target = interior * (background + config.contrast_margin / light + 0.02);
      b = std::clamp(std::max(b, (target - base_luma) / alpha_sum), 0.0, 1.0);
    }
    const Rgb wool{b, 0.98 * b, 0.92 * b};
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double a = ellipse_alpha(e, x, y, config.edge_softness);
        if (a <= 0) continue;
        const double grain = 1.0 + 0.02 * rng.uniform(-1.0, 1.0);
        Rgb& p = px[y * size + x];
        p = {p.r + a * (wool.r * grain - p.r), p.g + a * (wool.g * grain - p.g), p.b + a * (wool.b * grain - p.b)};
      }
  }

  scene.image = Image(size, size);
  for (std::size_t i = 0; i < pixels; ++i) {
    const double rgb[3] = {px[i].r, px[i].g, px[i].b};
    for (int c = 0; c < 3; ++c)
      scene.image.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb[c] * light, 0.0, 1.0) * 255.0));
  }
  return scene;
}

}  // namespace whdspot::data
