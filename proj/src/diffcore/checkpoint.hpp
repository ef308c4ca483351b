#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "diffcore/tensor.hpp"

namespace whdspot::diff {

inline constexpr char kCheckpointMagic[] = "WHDSPOT1";

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::string descriptor;  // plain-text key=value lines
  std::vector<NamedTensor> tensors;
};

// Layout, all integers and floats 64-bit little-endian:
//   "WHDSPOT1"
//   u64 descriptor length, descriptor bytes
//   u64 record count
//   per record: u64 name length, name bytes, u64 rank, rank x u64 dims,
//               numel x f64 values
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace whdspot::diff
