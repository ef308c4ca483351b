#include "models/rcnn_net.hpp"

#include <bit>
#include <sstream>

#include "common/error.hpp"

namespace whdspot::models {

using diff::Shape;
using diff::Variable;

namespace {

const std::string& field(const Descriptor& d, const std::string& key) {
  const auto it = d.find(key);
  if (it == d.end()) fail(ErrorKind::Format, "descriptor is missing '" + key + "'");
  return it->second;
}

}  // namespace

RcnnNetConfig RcnnNetConfig::from_descriptor(const Descriptor& d) {
  RcnnNetConfig c;
  c.variant = parse_architecture(field(d, "arch"));
  c.patch_size = std::stoi(field(d, "patch_size"));
  c.class_count = std::stoi(field(d, "class_count"));
  if (c.variant == Architecture::network1) {
    c.network1_kernels = std::stoi(field(d, "kernels"));
    c.network1_kernel_size = std::stoi(field(d, "kernel_size"));
    c.network1_stride = std::stoi(field(d, "stride"));
  } else {
    c.network2_channels.clear();
    std::stringstream ss(field(d, "channels"));
    std::string item;
    while (std::getline(ss, item, ',')) c.network2_channels.push_back(std::stoi(item));
  }
  return c;
}

void RcnnNetConfig::validate() const {
  require(variant != Architecture::unet, "rcnn: variant must be network1 or network2");
  require(class_count >= 2, "rcnn: need at least two classes");
  if (variant == Architecture::network1) {
    require(network1_kernels >= 1 && network1_stride >= 1, "network1: kernels and stride must be positive");
    require(patch_size >= network1_kernel_size, "network1: patch size " + std::to_string(patch_size) +
                                                    " is smaller than the " + std::to_string(network1_kernel_size) +
                                                    "px kernel");
  } else {
    require(network2_channels.size() == 7, "network2: needs exactly 7 channel entries");
    require(std::has_single_bit(static_cast<unsigned>(patch_size)) && patch_size >= 2,
            "network2: patch size " + std::to_string(patch_size) +
                " must be a power of two so that the seven 2x2 pools halve it exactly; use 64, 128 or 256");
    for (int c : network2_channels) require(c >= 1, "network2: channel counts must be positive");
  }
}

int RcnnNetConfig::feature_size() const {
  if (variant == Architecture::network1) return (patch_size - network1_kernel_size) / network1_stride + 1;
  int s = patch_size;
  for (int i = 0; i < 7; ++i) s = s <= 2 ? 1 : (s + 1) / 2;
  return s;
}

int RcnnNetConfig::feature_channels() const {
  return variant == Architecture::network1 ? network1_kernels : network2_channels.back();
}

RcnnNet::RcnnNet(RcnnNetConfig config, std::uint64_t seed) : Model(seed), config_(std::move(config)) {
  config_.validate();
  if (config_.variant == Architecture::network1) {
    convs_.push_back(make_conv("conv", 3, config_.network1_kernels, config_.network1_kernel_size,
                               config_.network1_stride, 0, true));
  } else {
    int in = 3;
    for (int i = 0; i < 7; ++i) {
      const std::string name = "block" + std::to_string(i);
      convs_.push_back(make_conv(name + ".conv", in, config_.network2_channels[i], 3, 1, 1, false));
      bns_.push_back(make_batchnorm(name + ".bn", config_.network2_channels[i]));
      in = config_.network2_channels[i];
    }
  }
  const int fs = config_.feature_size();
  classifier_ = make_dense("fc", fs * fs * config_.feature_channels(), config_.class_count);
}

Descriptor RcnnNet::descriptor() const {
  Descriptor d{{"arch", to_string(config_.variant)},
               {"patch_size", std::to_string(config_.patch_size)},
               {"class_count", std::to_string(config_.class_count)}};
  if (config_.variant == Architecture::network1) {
    d["kernels"] = std::to_string(config_.network1_kernels);
    d["kernel_size"] = std::to_string(config_.network1_kernel_size);
    d["stride"] = std::to_string(config_.network1_stride);
  } else {
    std::string s;
    for (std::size_t i = 0; i < config_.network2_channels.size(); ++i)
      s += (i ? "," : "") + std::to_string(config_.network2_channels[i]);
    d["channels"] = s;
  }
  return d;
}

Variable RcnnNet::features(diff::Tape& tape, const Variable& patches) const {
  const auto& s = patches.shape();
  require(s.size() == 4 && s[1] == 3 && s[2] == config_.patch_size && s[3] == config_.patch_size,
          "rcnn: expected patches [N,3," + std::to_string(config_.patch_size) + "," +
              std::to_string(config_.patch_size) + "], got " + diff::to_string(s));
  // Pixel values are centred on zero before the first convolution.
  Variable h = diff::add(tape, patches, -0.5);
  if (config_.variant == Architecture::network1) return diff::relu(tape, convs_[0](tape, h));
  for (std::size_t i = 0; i < convs_.size(); ++i)
    h = diff::maxpool2d(tape, diff::relu(tape, bns_[i](tape, convs_[i](tape, h), mode())));
  return h;
}

Variable RcnnNet::logits(diff::Tape& tape, const Variable& patches) const {
  const Variable f = features(tape, patches);
  const std::int64_t n = f.shape()[0];
  return classifier_(tape, diff::reshape(tape, f, Shape{n, static_cast<std::int64_t>(f.size()) / n}));
}

diff::Tensor classify_patches(RcnnNet& model, const diff::Tensor& patches) {
  const diff::Mode saved = model.mode();
  model.set_mode(diff::Mode::eval);
  diff::Tape tape(diff::Precision::f64, false);
  diff::Tensor probs = diff::softmax(tape, model.logits(tape, Variable(patches))).value();
  model.set_mode(saved);
  return probs;
}

}  // namespace whdspot::models
