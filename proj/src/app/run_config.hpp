#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "models/rcnn_net.hpp"
#include "models/unet.hpp"
#include "synthdata/scene.hpp"
#include "trainer/trainer.hpp"

namespace whdspot::app {

// Everything a run needs, settable through `key = value` lines or flags of
// the same name.
struct RunConfig {
  std::string preset = "desk";  // desk, easy or full scene defaults
  data::SceneConfig scene = data::SceneConfig::desk();
  std::int64_t total = 500;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 0;

  std::string model = "unet";  // unet, network1 or network2
  models::UNetConfig unet = models::UNetConfig::desk();
  models::RcnnNetConfig rcnn;
  train::TrainConfig train;
  std::string loss = "auto";  // auto picks whd for the UNet, cross_entropy otherwise

  int bench_warmup = 1;
  int bench_reps = 5;

  // Sets one key; unknown keys and malformed values are rejected. `preset`
  // resets the scene fields.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Reads `key = value` lines; blank lines and lines starting with '#' are
  // skipped. Errors name the file and line.
  void load(const std::filesystem::path& path);
  // Every key in registry order, one per line.
  std::string format() const;
  void save(const std::filesystem::path& path) const;

  // Applies assignments with every `preset` first, so a preset never undoes
  // an explicit scene key regardless of order.
  void apply(const std::vector<std::pair<std::string, std::string>>& assignments);

  void validate() const;
  // The seed propagated into the scene and trainer; train_config also
  // resolves the loss and rejects a loss that does not fit the model.
  data::SceneConfig scene_config() const;
  train::TrainConfig train_config(models::Architecture arch) const;
};

struct KeyInfo {
  std::string name;
  std::string help;
};
const std::vector<KeyInfo>& config_keys();

// Reads assignments from a file without applying them.
std::vector<std::pair<std::string, std::string>> read_assignments(const std::filesystem::path& path);

inline constexpr char kResolvedConfigName[] = "run_config.txt";

}  // namespace whdspot::app
