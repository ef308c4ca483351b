#include "synthdata/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "common/error.hpp"

namespace whdspot::data {

using diff::Shape;
using diff::Tensor;

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    fail(std::filesystem::exists(path) ? ErrorKind::Format : ErrorKind::Io,
         "cannot read image " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  if (!png_image_finish_read(&png, nullptr, image.rgb.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    fail(ErrorKind::Format, "corrupt image " + path.string() + ": " + message);
  }
  return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  require(image.width > 0 && image.height > 0, "write_png: empty image");
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.rgb.data(), 0, nullptr))
    fail(ErrorKind::Io, "cannot write image " + path.string() + ": " + png.message);
}

Tensor to_tensor(const Image& image) {
  const std::int64_t h = image.height, w = image.width;
  Tensor t(Shape{3, h, w});
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        t[(c * h + y) * w + x] = image.at(static_cast<int>(x), static_cast<int>(y), c) / 255.0;
  return t;
}

Image to_image(const Tensor& t) {
  require(t.rank() == 3 && t.dim(0) == 3, "to_image: expected [3,H,W], got " + diff::to_string(t.shape()));
  const std::int64_t h = t.dim(1), w = t.dim(2);
  Image image(static_cast<int>(w), static_cast<int>(h));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(t[(c * h + y) * w + x], 0.0, 1.0);
        image.at(static_cast<int>(x), static_cast<int>(y), c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return image;
}

namespace {

void put(Tensor& t, std::int64_t x, std::int64_t y, Color color) {
  const std::int64_t h = t.dim(1), w = t.dim(2);
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  t[(0 * h + y) * w + x] = color.r;
  t[(1 * h + y) * w + x] = color.g;
  t[(2 * h + y) * w + x] = color.b;
}

void check_raster(const Tensor& t) {
  require(t.rank() == 3 && t.dim(0) == 3, "overlay: expected [3,H,W], got " + diff::to_string(t.shape()));
}

}  // namespace

void draw_points(Tensor& image, const PointSet& points, Color color, int arm) {
  check_raster(image);
  for (const auto& p : points) {
    const auto cx = std::lround(p.x), cy = std::lround(p.y);
    for (int d = -arm; d <= arm; ++d) {
      put(image, cx + d, cy, color);
      put(image, cx, cy + d, color);
    }
  }
}

void draw_boxes(Tensor& image, const BoxSet& boxes, Color color) {
  check_raster(image);
  for (const auto& b : boxes) {
    const auto x0 = std::lround(b.x), x1 = std::lround(b.x + b.w);
    const auto y0 = std::lround(b.y), y1 = std::lround(b.y + b.h);
    for (auto x = x0; x <= x1; ++x) {
      put(image, x, y0, color);
      put(image, x, y1, color);
    }
    for (auto y = y0; y <= y1; ++y) {
      put(image, x0, y, color);
      put(image, x1, y, color);
    }
  }
}

void draw_circles(Tensor& image, const PointSet& centers, double radius, Color color) {
  check_raster(image);
  require(radius > 0, "draw_circles: radius must be positive");
  const int steps = 8 * static_cast<int>(std::ceil(radius)) + 8;
  for (const auto& c : centers)
    for (int i = 0; i < steps; ++i) {
      const double a = 2.0 * 3.141592653589793 * i / steps;
      put(image, std::lround(c.x + radius * std::cos(a)), std::lround(c.y + radius * std::sin(a)), color);
    }
}

Tensor upscale(const Tensor& image, int factor) {
  require(image.rank() == 3, "upscale: expected [C,H,W], got " + diff::to_string(image.shape()));
  require(factor >= 1, "upscale: factor must be positive");
  const auto c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(diff::Shape{c, h * factor, w * factor});
  for (std::int64_t k = 0; k < c; ++k)
    for (std::int64_t y = 0; y < h * factor; ++y)
      for (std::int64_t x = 0; x < w * factor; ++x)
        out[static_cast<std::size_t>((k * h * factor + y) * w * factor + x)] =
            image[static_cast<std::size_t>((k * h + y / factor) * w + x / factor)];
  return out;
}

}  // namespace whdspot::data
