#include "models/unet.hpp"

#include <bit>
#include <cmath>
#include <sstream>

#include "common/error.hpp"
#include "diffcore/ops.hpp"

namespace whdspot::models {

using diff::Shape;
using diff::Variable;

namespace {

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  return out;
}

const std::string& field(const Descriptor& d, const std::string& key) {
  const auto it = d.find(key);
  if (it == d.end()) fail(ErrorKind::Format, "descriptor is missing '" + key + "'");
  return it->second;
}

}  // namespace

UNetConfig UNetConfig::full() {
  UNetConfig c;
  c.input_size = 256;
  c.width_scale = 1.0;
  return c;
}

UNetConfig UNetConfig::desk() { return UNetConfig{}; }

UNetConfig UNetConfig::from_descriptor(const Descriptor& d) {
  UNetConfig c;
  c.input_size = std::stoi(field(d, "input_size"));
  c.contraction_channels = split_ints(field(d, "contraction"));
  c.expansion_channels = split_ints(field(d, "expansion"));
  c.width_scale = 1.0;
  return c;
}

int UNetConfig::stages() const { return std::bit_width(static_cast<unsigned>(input_size)) - 1; }

void UNetConfig::validate() const {
  require(input_size >= 2 && std::has_single_bit(static_cast<unsigned>(input_size)),
          "unet: input size must be a power of two >= 2, got " + std::to_string(input_size));
  require(width_scale > 0, "unet: width scale must be positive");
  const auto n = static_cast<std::size_t>(stages());
  require(contraction_channels.size() >= n && expansion_channels.size() >= n,
          "unet: input size " + std::to_string(input_size) + " needs " + std::to_string(n) +
              " contraction and expansion stages; the channel plans are too short");
}

std::vector<int> UNetConfig::contraction() const {
  std::vector<int> out;
  for (int i = 0; i < stages(); ++i)
    out.push_back(std::max(1, static_cast<int>(std::lround(contraction_channels[i] * width_scale))));
  return out;
}

std::vector<int> UNetConfig::expansion() const {
  std::vector<int> out;
  const int skip = static_cast<int>(expansion_channels.size()) - stages();
  for (int i = 0; i < stages(); ++i)
    out.push_back(std::max(1, static_cast<int>(std::lround(expansion_channels[skip + i] * width_scale))));
  return out;
}

UNet::UNet(UNetConfig config, std::uint64_t seed) : Model(seed), config_(std::move(config)) {
  config_.validate();
  const auto down = config_.contraction();
  const auto up = config_.expansion();
  const int n = config_.stages();
  int in = 3;
  for (int i = 0; i < n; ++i) {
    const std::string name = "down" + std::to_string(i);
    down_conv_.push_back(make_conv(name + ".conv", in, down[i], 3, 1, 1, false));
    down_bn_.push_back(make_batchnorm(name + ".bn", down[i]));
    in = down[i];
  }
  for (int j = 0; j < n; ++j) {
    const std::string name = "up" + std::to_string(j);
    up_conv_.push_back(make_conv(name + ".conv", in, up[j], 3, 1, 1, false));
    up_bn_.push_back(make_batchnorm(name + ".bn", up[j]));
    in = up[j] + down[n - 1 - j];
  }
  head_ = make_conv("head", in, 1, 1, 1, 0, true);
  count_head_ = make_dense("count", down[n - 1] + 2, 1);
}

Descriptor UNet::descriptor() const {
  return {{"arch", "unet"},
          {"input_size", std::to_string(config_.input_size)},
          {"contraction", join(config_.contraction())},
          {"expansion", join(config_.expansion())}};
}

std::vector<UNet::StageShape> UNet::stage_shapes() const {
  std::vector<StageShape> out;
  const auto down = config_.contraction();
  const auto up = config_.expansion();
  const int n = config_.stages();
  int size = config_.input_size;
  for (int i = 0; i < n; ++i) {
    size /= 2;
    out.push_back({size, down[i]});
  }
  for (int j = 0; j < n; ++j) {
    size *= 2;
    out.push_back({size, up[j] + down[n - 1 - j]});
  }
  out.push_back({size, 1});
  return out;
}

UNetOutput UNet::forward(diff::Tape& tape, const Variable& images) const {
  const auto& s = images.shape();
  require(s.size() == 4 && s[1] == 3 && s[2] == config_.input_size && s[3] == config_.input_size,
          "unet: expected images [N,3," + std::to_string(config_.input_size) + "," +
              std::to_string(config_.input_size) + "], got " + diff::to_string(s));
  const int n = config_.stages();
  const std::int64_t batch = s[0];
  std::vector<Variable> skips;
  Variable h = images;
  for (int i = 0; i < n; ++i) {
    h = diff::relu(tape, down_bn_[i](tape, down_conv_[i](tape, h), mode()));
    skips.push_back(h);
    h = diff::maxpool2d(tape, h);
  }
  const Variable bottleneck = h;
  for (int j = 0; j < n; ++j) {
    h = diff::upsample_nearest(tape, h, 2);
    h = diff::relu(tape, up_bn_[j](tape, up_conv_[j](tape, h), mode()));
    h = diff::concat_channels(tape, h, skips[n - 1 - j]);
  }
  UNetOutput out;
  out.probmap = diff::sigmoid(tape, head_(tape, h));

  const std::int64_t width = bottleneck.shape()[1];
  Variable features = diff::reshape(tape, bottleneck, Shape{batch, width});
  const Variable avg = diff::reduce(tape, diff::Reduction::mean, out.probmap, {1, 2, 3});
  // Log-scaled soft count.
  const Variable total = diff::log1p(tape, diff::reduce(tape, diff::Reduction::sum, out.probmap, {1, 2, 3}));
  features = diff::concat_channels(tape, features, diff::reshape(tape, avg, Shape{batch, 1}));
  features = diff::concat_channels(tape, features, diff::reshape(tape, total, Shape{batch, 1}));
  out.count_signal = diff::reshape(tape, count_head_(tape, features), Shape{batch});
  for (double v : out.count_signal.value().data()) out.count.push_back(diff::softplus_value(v));
  return out;
}

}  // namespace whdspot::models
