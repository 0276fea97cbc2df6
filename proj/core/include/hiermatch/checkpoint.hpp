#pragma once

#include <string>

#include "hiermatch/trainer.hpp"

namespace hiermatch {

/// Checkpoints are a pair of files: `<prefix>.manifest` (text: config echo,
/// epoch cursor, early-stop state, then one line per tensor with name,
/// shape, byte offset, checksum) plus `<prefix>.bin` (the named tensors as
/// little-endian float64, parameters first, then the Adam moments).
void save_checkpoint(const std::string& prefix, const TrainState& state,
                     const RunConfig& cfg, std::size_t d_raw);

struct LoadedCheckpoint {
  TrainState state;
  RunConfig cfg;
  std::size_t d_raw = 0;
};

/// Restores a checkpoint, verifying per-tensor checksums and shapes.
LoadedCheckpoint load_checkpoint(const std::string& prefix);

/// Fingerprint of the manifest (config + weights checksums), 16 hex digits.
std::string checkpoint_fingerprint(const std::string& prefix);

}  // namespace hiermatch
