#pragma once

#include <cstdint>
#include <vector>

#include "common/geometry.hpp"
#include "synthdata/image.hpp"

namespace whdspot::data {

struct SceneConfig {
  int image_size = 64;
  int count_min = 0;
  int count_max = 18;
  // Sheep are ellipses: length along the major axis, width across it (pixels).
  double length_min = 7.0;
  double length_max = 9.0;
  double width_min = 3.5;
  double width_max = 4.5;
  double brightness_min = 0.78;
  double brightness_max = 0.95;
  double edge_softness = 1.0;  // width of the alpha ramp across the boundary
  // Grass: HSV base colour with multi-octave value noise.
  double hue_min = 75.0;
  double hue_max = 125.0;
  double grass_saturation = 0.55;
  double grass_value = 0.42;
  int noise_octaves = 3;
  double noise_amplitude = 0.08;
  double noise_cell = 16.0;
  double fence_probability = 0.3;
  double fence_brightness = 0.85;
  double shadow_offset = 1.5;
  double shadow_alpha = 0.35;
  double illumination_min = 0.85;
  double illumination_max = 1.0;
  double min_separation = 6.0;  // between centroids
  bool allow_overlap = false;
  // Guaranteed luminance gap between sheep interiors and the background mean.
  double contrast_margin = 0.15;
  std::uint64_t seed = 0;

  static SceneConfig desk() { return {}; }
  // Full scale: 256 px frames, sheep about 20 x 10 px.
  static SceneConfig full();
  // Fewer objects (1-8), quieter grass and fewer fences.
  static SceneConfig easy();
  void validate() const;
};

struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double theta = 0.0;  // major-axis angle from +x towards +y, in [0, pi)

  // Normalised radius: <= 1 inside the nominal boundary.
  double radius(double x, double y) const;
  // Tight axis-aligned box of the nominal boundary, centred on (cx, cy).
  Box bounds() const;
};

struct GroundTruth {
  PointSet centroids;
  BoxSet boxes;
  std::vector<double> orientations;
};

struct Scene {
  Image image;
  GroundTruth truth;
  std::vector<Ellipse> ellipses;
  std::vector<std::uint8_t> fence_mask;  // 1 where any fence coverage was drawn
};

// Pure function of (config, index).
Scene render_scene(const SceneConfig& config, std::uint64_t index);

// Soft ellipse coverage in [0,1]; >= 0.5 exactly inside the nominal boundary.
double ellipse_alpha(const Ellipse& e, double x, double y, double softness);

double luminance(double r, double g, double b);

}  // namespace whdspot::data
