#pragma once

#include <vector>

#include "models/model.hpp"

namespace whdspot::models {

struct UNetConfig {
  int input_size = 64;
  // Full-width channel plans; a run uses the first log2(input_size) contraction
  // entries and the last log2(input_size) expansion entries.
  std::vector<int> contraction_channels{64, 128, 256, 512, 512, 512, 512, 512};
  std::vector<int> expansion_channels{512, 512, 512, 512, 256, 128, 64, 64};
  double width_scale = 0.125;

  static UNetConfig full();
  static UNetConfig desk();
  static UNetConfig from_descriptor(const Descriptor& d);

  int stages() const;
  std::vector<int> contraction() const;
  std::vector<int> expansion() const;
  void validate() const;
};

struct UNetOutput {
  diff::Variable probmap;     // [N,1,H,W], values in [0,1]
  diff::Variable count_signal;  // [N]
  std::vector<double> count;  // softplus(count_signal) per image
};

// Point detector: contraction stages (3x3 conv, batch norm, relu, 2x2 max
// pool) down to a 1x1 bottleneck, expansion stages (x2 nearest upsample, 3x3
// conv, batch norm, relu, concatenation with the matching contraction
// features), a 1x1 conv with sigmoid for the probability map, and a dense
// count head over [bottleneck, mean(p), log(1 + sum(p))].
class UNet final : public Model {
 public:
  UNet(UNetConfig config, std::uint64_t seed);

  Architecture architecture() const override { return Architecture::unet; }
  Descriptor descriptor() const override;
  const UNetConfig& config() const { return config_; }

  UNetOutput forward(diff::Tape& tape, const diff::Variable& images) const;

  // Spatial size and channel count after every stage, for shape checks.
  struct StageShape {
    int size;
    int channels;
  };
  std::vector<StageShape> stage_shapes() const;

 private:
  UNetConfig config_;
  std::vector<Conv> down_conv_;
  std::vector<BatchNorm> down_bn_;
  std::vector<Conv> up_conv_;
  std::vector<BatchNorm> up_bn_;
  Conv head_;
  Dense count_head_;
};

}  // namespace whdspot::models
