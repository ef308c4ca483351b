#pragma once

#include <vector>

#include "models/model.hpp"

namespace whdspot::models {

struct RcnnNetConfig {
  Architecture variant = Architecture::network1;
  int patch_size = 64;
  int class_count = 2;
  // Network-I: a single kernel_size x kernel_size conv with `kernels` filters.
  int network1_kernels = 96;
  int network1_kernel_size = 11;
  int network1_stride = 4;
  // Network-II: seven conv blocks, the last ending in 512 channels.
  std::vector<int> network2_channels{32, 64, 128, 256, 512, 512, 512};

  static RcnnNetConfig from_descriptor(const Descriptor& d);
  void validate() const;
  // Spatial size of the final feature map.
  int feature_size() const;
  int feature_channels() const;
};

// Patch classifier over inputs in [0,1], shifted by -0.5 first. Network-I: conv 11x11x96 -> relu -> dense -> softmax.
// Network-II: 7 x (3x3 conv -> batch norm -> relu -> 2x2 max pool) -> dense
// -> softmax. Class 1 is the object, class 0 background.
class RcnnNet final : public Model {
 public:
  RcnnNet(RcnnNetConfig config, std::uint64_t seed);

  Architecture architecture() const override { return config_.variant; }
  Descriptor descriptor() const override;
  const RcnnNetConfig& config() const { return config_; }

  // Class logits [N,class_count] for patches [N,3,S,S].
  diff::Variable logits(diff::Tape& tape, const diff::Variable& patches) const;
  // Final feature map before the dense layer.
  diff::Variable features(diff::Tape& tape, const diff::Variable& patches) const;

 private:
  RcnnNetConfig config_;
  std::vector<Conv> convs_;
  std::vector<BatchNorm> bns_;
  Dense classifier_;
};

// Class probabilities [N,class_count] in eval mode; rows sum to one.
diff::Tensor classify_patches(RcnnNet& model, const diff::Tensor& patches);

}  // namespace whdspot::models
