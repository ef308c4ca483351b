#pragma once

#include <optional>
#include <span>
#include <vector>

#include "common/geometry.hpp"

namespace whdspot::post {

// Row-major h x w map of values in [0,1].
struct MapView {
  std::span<const double> values;
  int height = 0;
  int width = 0;
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// 256-bin Otsu threshold on [0,1]. Candidates are k/256 for k = 1..255 with
// foreground p >= k/256; when several k reach the maximum between-class
// variance the midpoint of the first and last is used. Maps whose values all
// share one bin give 0.5.
double otsu_threshold(const MapView& map);

struct Component {
  std::vector<int> pixels;  // flat indices y * width + x, raster order
  int area = 0;
  double mass = 0.0;      // sum of weights
  Point centroid;         // weighted by the map values; plain mean when mass is 0
  Box bounds;             // pixel-centre extent of the member pixels
  double mean_value = 0.0;
};

// 8-connected components of the pixels where mask is true, ordered by their
// first pixel in raster order. Weights come from `map`.
std::vector<Component> connected_components(const std::vector<bool>& mask, const MapView& map);

enum class ThresholdMode { fixed, otsu };

struct ExtractionParams {
  ThresholdMode mode = ThresholdMode::otsu;
  double threshold = 0.5;
  int min_area = 2;
  bool reconcile = false;
  void validate() const;
};

struct PointDetection {
  Point point;
  double score = 0.0;  // mean probability of the component
};

// Threshold, connected components, area filter, weighted centroids, then
// optional reconciliation with the rounded count estimate: too few components
// are split by 2-means (largest first), too many are cut to the heaviest.
std::vector<PointDetection> extract_detections(const MapView& map, const ExtractionParams& params,
                                               std::optional<double> count = std::nullopt);
PointSet extract_centroids(const MapView& map, const ExtractionParams& params,
                           std::optional<double> count = std::nullopt);

// Weighted 2-means over the member pixels; returns the two halves, or nothing
// when the component has fewer than two pixels.
std::optional<std::pair<Component, Component>> split_component(const Component& c, const MapView& map);

}  // namespace whdspot::post
