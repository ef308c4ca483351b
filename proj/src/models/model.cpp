#include "models/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "common/error.hpp"
#include "models/rcnn_net.hpp"
#include "models/unet.hpp"

namespace whdspot::models {

using diff::Shape;
using diff::Tensor;
using diff::Variable;

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::unet: return "unet";
    case Architecture::network1: return "network1";
    case Architecture::network2: return "network2";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  if (name == "unet") return Architecture::unet;
  if (name == "network1") return Architecture::network1;
  if (name == "network2") return Architecture::network2;
  fail("unknown model '" + name + "' (expected unet, network1 or network2)");
}

Variable Conv::operator()(diff::Tape& tape, const Variable& x) const {
  Variable y = diff::conv2d(tape, x, weight, stride, padding);
  return bias.defined() ? diff::bias_add(tape, y, bias) : y;
}

Variable BatchNorm::operator()(diff::Tape& tape, const Variable& x, diff::Mode mode) const {
  return diff::batchnorm2d(tape, x, gamma, beta, mode, *stats);
}

Variable Dense::operator()(diff::Tape& tape, const Variable& x) const { return diff::linear(tape, x, weight, bias); }

std::string format_descriptor(const Descriptor& d) {
  std::string out;
  for (const auto& [k, v] : d) out += k + "=" + v + "\n";
  return out;
}

Descriptor parse_descriptor(const std::string& text) {
  Descriptor d;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Format, "malformed descriptor line '" + line + "'");
    d[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return d;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

void Model::zero_grad() const {
  for (const auto& p : params_) p.var.zero_grad();
}

Variable Model::add_parameter(const std::string& name, Tensor value) {
  for (const auto& p : params_) require(p.name != name, "duplicate parameter name " + name);
  Variable v(std::move(value), true);
  params_.push_back({name, v});
  return v;
}

Conv Model::make_conv(const std::string& name, int in, int out, int kernel, int stride, int padding, bool bias) {
  const double bound = std::sqrt(6.0 / (in * kernel * kernel));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(Shape{out, in, kernel, kernel});
  for (auto& v : w.data()) v = u(rng_);
  Conv c;
  c.weight = add_parameter(name + ".weight", std::move(w));
  if (bias) c.bias = add_parameter(name + ".bias", Tensor(Shape{out}, 0.0));
  c.stride = stride;
  c.padding = padding;
  return c;
}

BatchNorm Model::make_batchnorm(const std::string& name, int channels) {
  BatchNorm bn;
  bn.gamma = add_parameter(name + ".gamma", Tensor(Shape{channels}, 1.0));
  bn.beta = add_parameter(name + ".beta", Tensor(Shape{channels}, 0.0));
  bn.stats = &bn_stats_.emplace_back(channels);
  bn_names_.push_back(name);
  return bn;
}

Dense Model::make_dense(const std::string& name, int in, int out) {
  const double bound = std::sqrt(3.0 / in);
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(Shape{in, out});
  for (auto& v : w.data()) v = u(rng_);
  Dense d;
  d.weight = add_parameter(name + ".weight", std::move(w));
  d.bias = add_parameter(name + ".bias", Tensor(Shape{out}, 0.0));
  return d;
}

std::vector<diff::NamedTensor> Model::state() const {
  std::vector<diff::NamedTensor> out;
  for (const auto& p : params_) out.push_back({p.name, p.var.value()});
  for (std::size_t i = 0; i < bn_stats_.size(); ++i) {
    out.push_back({bn_names_[i] + ".running_mean", bn_stats_[i].running_mean});
    out.push_back({bn_names_[i] + ".running_var", bn_stats_[i].running_var});
  }
  return out;
}

void Model::load_state(const std::vector<diff::NamedTensor>& state) {
  std::vector<Tensor*> slots;
  std::vector<std::string> names;
  for (auto& p : params_) {
    slots.push_back(&p.var.mutable_value());
    names.push_back(p.name);
  }
  for (std::size_t i = 0; i < bn_stats_.size(); ++i) {
    slots.push_back(&bn_stats_[i].running_mean);
    names.push_back(bn_names_[i] + ".running_mean");
    slots.push_back(&bn_stats_[i].running_var);
    names.push_back(bn_names_[i] + ".running_var");
  }
  if (state.size() != slots.size())
    fail(ErrorKind::Format, "state has " + std::to_string(state.size()) + " tensors, model expects " +
                                std::to_string(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (state[i].name != names[i])
      fail(ErrorKind::Format, "state tensor " + std::to_string(i) + " is '" + state[i].name + "', expected '" +
                                  names[i] + "'");
    if (state[i].value.shape() != slots[i]->shape())
      fail(ErrorKind::Format, "state tensor '" + names[i] + "' has shape " + diff::to_string(state[i].value.shape()) +
                                  ", expected " + diff::to_string(slots[i]->shape()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = state[i].value;
  zero_grad();
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  diff::Checkpoint ck;
  ck.descriptor = format_descriptor(model.descriptor());
  ck.tensors = model.state();
  write_checkpoint(path, ck);
}

std::unique_ptr<Model> build_from_descriptor(const Descriptor& d) {
  const auto it = d.find("arch");
  if (it == d.end()) fail(ErrorKind::Format, "descriptor has no arch key");
  const Architecture arch = parse_architecture(it->second);
  if (arch == Architecture::unet) return std::make_unique<UNet>(UNetConfig::from_descriptor(d), 0);
  return std::make_unique<RcnnNet>(RcnnNetConfig::from_descriptor(d), 0);
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  diff::Checkpoint ck = diff::read_checkpoint(path);
  auto model = build_from_descriptor(parse_descriptor(ck.descriptor));
  model->load_state(ck.tensors);
  return model;
}

void load_checkpoint_into(Model& model, const std::filesystem::path& path) {
  diff::Checkpoint ck = diff::read_checkpoint(path);
  const Descriptor stored = parse_descriptor(ck.descriptor);
  if (stored != model.descriptor())
    fail(ErrorKind::Format, "checkpoint " + path.string() + " describes a different architecture:\n" +
                                ck.descriptor + "model is:\n" + format_descriptor(model.descriptor()));
  model.load_state(ck.tensors);
}

}  // namespace whdspot::models
