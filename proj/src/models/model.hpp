#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "diffcore/checkpoint.hpp"
#include "diffcore/ops.hpp"

namespace whdspot::models {

enum class Architecture { unet, network1, network2 };

std::string to_string(Architecture a);
Architecture parse_architecture(const std::string& name);

struct NamedParameter {
  std::string name;
  diff::Variable var;
};

// 2-D convolution with an optional per-channel bias.
struct Conv {
  diff::Variable weight;
  diff::Variable bias;  // undefined when the layer has no bias
  int stride = 1;
  int padding = 0;
  diff::Variable operator()(diff::Tape& tape, const diff::Variable& x) const;
};

struct BatchNorm {
  diff::Variable gamma;
  diff::Variable beta;
  diff::BatchNormStats* stats = nullptr;
  diff::Variable operator()(diff::Tape& tape, const diff::Variable& x, diff::Mode mode) const;
};

struct Dense {
  diff::Variable weight;
  diff::Variable bias;
  diff::Variable operator()(diff::Tape& tape, const diff::Variable& x) const;
};

// Key/value architecture description stored in checkpoints.
using Descriptor = std::map<std::string, std::string>;
std::string format_descriptor(const Descriptor& d);
Descriptor parse_descriptor(const std::string& text);

class Model {
 public:
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  virtual Architecture architecture() const = 0;
  virtual Descriptor descriptor() const = 0;

  // Trainable parameters in a fixed, deterministic order with unique names.
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad() const;

  void set_mode(diff::Mode mode) { mode_ = mode; }
  diff::Mode mode() const { return mode_; }

  // Parameters followed by batch-norm running statistics.
  std::vector<diff::NamedTensor> state() const;
  void load_state(const std::vector<diff::NamedTensor>& state);

 protected:
  explicit Model(std::uint64_t seed) : rng_(seed) {}

  // Uniform initialisation: bound sqrt(6 / fan_in) for convs, sqrt(3 / fan_in)
  // for dense layers.
  Conv make_conv(const std::string& name, int in, int out, int kernel, int stride, int padding, bool bias);
  BatchNorm make_batchnorm(const std::string& name, int channels);
  Dense make_dense(const std::string& name, int in, int out);

 private:
  diff::Variable add_parameter(const std::string& name, diff::Tensor value);

  std::mt19937_64 rng_;
  diff::Mode mode_ = diff::Mode::train;
  std::vector<NamedParameter> params_;
  std::deque<diff::BatchNormStats> bn_stats_;
  std::vector<std::string> bn_names_;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);
// Builds the architecture recorded in the checkpoint and loads its state.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);
// Loads into an existing model; the recorded architecture must match.
void load_checkpoint_into(Model& model, const std::filesystem::path& path);
std::unique_ptr<Model> build_from_descriptor(const Descriptor& d);

}  // namespace whdspot::models
