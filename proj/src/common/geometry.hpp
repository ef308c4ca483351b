#pragma once

#include <vector>

namespace whdspot {

// Pixel-centre coordinates: x is the column, y the row; pixel (r, c) has its
// centre at (x=c, y=r).
struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Axis-aligned box, top-left corner plus extent, in the same coordinates.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  Point center() const { return {x + w / 2.0, y + h / 2.0}; }
  friend bool operator==(const Box&, const Box&) = default;
};

using PointSet = std::vector<Point>;
using BoxSet = std::vector<Box>;

}  // namespace whdspot
