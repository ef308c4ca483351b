#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diffcore/tensor.hpp"
#include "synthdata/scene.hpp"

namespace whdspot::data {

enum class Split { train, val, test };
std::string to_string(Split s);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::string filename;
  Split split = Split::train;
  int count = 0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

using Manifest = std::vector<ManifestEntry>;

struct SplitSizes {
  std::int64_t train = 0;
  std::int64_t val = 0;
  std::int64_t test = 0;
};

// Validation and test sizes are floor(total * fraction); train takes the rest.
SplitSizes split_sizes(std::int64_t total, std::array<double, 3> fractions);

// Renders `total` scenes; indices [0, train) go to train, then val, then test.
// Writes <split>/img_<index>.png, <split>/points.csv, <split>/boxes.csv and
// manifest.csv under out_dir.
Manifest make_dataset(const SceneConfig& config, std::int64_t total, std::array<double, 3> fractions,
                      const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& dir);

struct Sample {
  std::string filename;
  std::uint64_t index = 0;
  diff::Tensor image;  // [3,H,W] in [0,1]
  GroundTruth truth;   // orientations are not stored on disk
};

// Samples of one split in manifest order.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, Split split);

}  // namespace whdspot::data
