#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brepmae/layers.hpp"

namespace brepmae {

// Checkpoint file = one-line JSON header + '\n' + little-endian f64 payload,
// parameters first then buffers, each in manifest order. Version "ckpt-v1".
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::string version = "ckpt-v1";
  std::string config_hash;
  std::vector<CheckpointEntry> params;
  std::vector<CheckpointEntry> buffers;

  int64_t count_params(const std::string& prefix) const;
  bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const Registry& reg, const std::string& path,
                     const std::string& config_hash);
Checkpoint load_checkpoint(const std::string& path);

// Copies all entries whose name starts with `prefix` into matching registry
// parameters/buffers. Throws MissingNamespace when nothing under the prefix
// exists in the checkpoint, ShapeError on shape mismatch.
void load_namespace(const Checkpoint& ckpt, Registry& reg, const std::string& prefix);

}  // namespace brepmae
