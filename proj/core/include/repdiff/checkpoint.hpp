#pragma once

#include <string>

#include "repdiff/diffusion.hpp"

namespace repdiff {

/// On-disk model snapshot: a single JSON header line (format version, config
/// hash, free-form metadata, tensor directory) followed by the raw
/// little-endian 64-bit float payload.
struct Checkpoint {
  int format_version = 1;
  std::string config_hash;
  std::string meta_json = "{}";  // schedule and config echo, mode, seed
  Params params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace repdiff
