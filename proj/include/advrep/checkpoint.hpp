#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advrep/params.hpp"

namespace advrep {

// On-disk model state. The PRNG is captured as (master_seed, epoch): every
// stream the trainer uses is derived from those two via named substreams, so
// they are the complete generator state. Optimizer state is the learning
// rate plus the schedule counters.
struct CheckpointEntry {
  std::string name;
  uint8_t group = 0;
  uint8_t trainable = 1;
  std::vector<uint64_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  uint32_t version = 1;
  uint64_t master_seed = 0;
  uint64_t epoch = 0;
  double lr = 0.0;
  uint32_t patience = 0;
  uint32_t halvings = 0;
  double best_monitor = 0.0;
  std::vector<CheckpointEntry> entries;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_params(const ParamSet<float>& params);

// Copies values back into a ParamSet built by the same model code; names,
// groups and shapes must match exactly.
void checkpoint_to_params(const Checkpoint& ckpt, ParamSet<float>& params);

}  // namespace advrep
