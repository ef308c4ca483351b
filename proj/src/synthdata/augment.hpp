#pragma once

#include <vector>

#include "diffcore/tensor.hpp"
#include "synthdata/scene.hpp"

namespace whdspot::data {

// Rotations are clockwise as displayed (y pointing down).
enum class AugmentOp { hflip, vflip, rot90, rot180, rot270, brightness };

struct Augmented {
  diff::Tensor image;
  GroundTruth truth;
};

// Applies ops in order to a [C,H,W] image and its ground truth. brightness
// multiplies every value by `brightness_scale` and clamps to [0,1]; the
// geometric ops move centroids, boxes and orientations with the pixels.
Augmented augment(const diff::Tensor& image, const GroundTruth& truth, const std::vector<AugmentOp>& ops,
                  double brightness_scale = 1.0);

}  // namespace whdspot::data
