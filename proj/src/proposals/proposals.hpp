#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "common/geometry.hpp"
#include "diffcore/tensor.hpp"

namespace whdspot::proposals {

// Boxes share the pixel-centre frame of the ground truth. An image of size S
// spans [-0.5, S-0.5] on both axes, so pixel i covers [i-0.5, i+0.5].
struct Bounds {
  double lo = -0.5;
  double hi = 0.0;
  static Bounds of_image(int size) { return {-0.5, size - 0.5}; }
};

double iou(const Box& a, const Box& b);

// Clips to the image; the result may have zero area when b lies outside.
Box clip(const Box& b, int image_size);

enum class Label { positive, negative, ignore };

// Closed overlap windows: positive for iou in [0.5, 1], negative for
// [0.1, 0.2], ignore otherwise.
Label label_for(double iou);

struct LabeledProposal {
  Box box;
  Label label = Label::ignore;
  std::optional<int> matched;  // best-overlapping ground-truth box
  double iou = 0.0;
};

struct ProposalConfig {
  int count = 1000;
  // Share of proposals derived from ground-truth boxes (when any exist).
  double positive_fraction = 0.25;
  double scale_min = 0.7;
  double scale_max = 1.3;
  double max_shift = 0.5;  // of the box extent
  double random_min = 4.0;
  double random_max = 0.0;  // 0 selects image_size / 4
};

LabeledProposal label_proposal(const Box& box, const BoxSet& truth);

// Exactly config.count proposals: every ground-truth box once unchanged, then
// jittered copies up to the positive fraction, then uniform random boxes.
std::vector<LabeledProposal> generate_train_proposals(const BoxSet& truth, int image_size,
                                                       const ProposalConfig& config, std::uint64_t seed);

// Square windows of each scale on a stride grid, row by row, scales in order.
BoxSet sliding_proposals(int image_size, const std::vector<int>& scales, int stride);

// Bilinear warp of the box contents of a [3,H,W] image to [3,S,S]. Output
// pixel (i, j) samples (x + (j+0.5) w/S, y + (i+0.5) h/S); samples outside
// the image take the nearest edge value.
diff::Tensor extract_patch(const diff::Tensor& image, const Box& box, int patch_size);

// Greedy suppression in descending score order (ties: lower index first);
// drops any box whose iou with a kept box exceeds the threshold.
std::vector<std::size_t> nms(const BoxSet& boxes, const std::vector<double>& scores, double iou_threshold);

}  // namespace whdspot::proposals
