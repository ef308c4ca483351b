#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "common/geometry.hpp"
#include "diffcore/tensor.hpp"

namespace whdspot::data {

// 8-bit RGB raster, interleaved, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int x, int y, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  friend bool operator==(const Image&, const Image&) = default;
};

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

// [3,H,W] tensor with values in [0,1].
diff::Tensor to_tensor(const Image& image);
// Inverse of to_tensor; values are clamped to [0,1] and rounded to 8 bits.
Image to_image(const diff::Tensor& t);

struct Color {
  double r = 1.0;
  double g = 0.0;
  double b = 0.0;
};

// Overlay markers on a [3,H,W] tensor: a plus sign of the given arm length at
// each rounded point, and the outline of each box through its rounded edges.
void draw_points(diff::Tensor& image, const PointSet& points, Color color, int arm = 1);
void draw_boxes(diff::Tensor& image, const BoxSet& boxes, Color color);
void draw_circles(diff::Tensor& image, const PointSet& centers, double radius, Color color);

// Nearest-neighbour enlargement of a [C,H,W] tensor by an integer factor.
diff::Tensor upscale(const diff::Tensor& image, int factor);

}  // namespace whdspot::data
