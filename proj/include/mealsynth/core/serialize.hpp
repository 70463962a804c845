#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mealsynth/core/nn.hpp"

namespace mealsynth {

// Checkpoint: little-endian binary, magic+version header, config hash,
// step counter, then named float64 tensors. No timestamps, so identical
// training runs produce identical files.
struct Checkpoint {
  uint64_t config_hash = 0;
  int64_t step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot the registry's current parameter values into a checkpoint.
Checkpoint snapshot(const nn::ParamRegistry& reg, uint64_t config_hash, int64_t step);
// Copy checkpoint tensors into the registry's parameters (by name; every
// registry entry must be present with a matching shape).
void restore(const Checkpoint& ckpt, nn::ParamRegistry& reg);

}  // namespace mealsynth
