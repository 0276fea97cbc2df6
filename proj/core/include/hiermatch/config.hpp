#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace hiermatch {

/// Model architecture and run-mode settings. Field defaults are the
/// reference settings; the key-value config file overrides them.
struct ModelConfig {
  std::size_t d = 512;    // embedding width
  std::size_t d_h = 64;   // projection width for compatibility and affinity
  double tau = 1.0;       // Gumbel-softmax temperature
  double margin = 0.5;    // triplet margin
  bool no_coattn = false;
  bool no_hierarchy = false;
  bool explicit_hierarchy = false;
};

/// Optimization settings (Adam), also sourced from the config file.
struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch = 16;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t patience = 20;  // early stop after this many epochs w/o improvement
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Parses a `key = value` config file. Documented keys: d, d_h, tau, margin,
/// lr, batch, epochs, seed, patience, no_coattn, no_hierarchy,
/// explicit_hierarchy. `#` starts a comment. Unknown keys are rejected.
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_string(const std::string& text);

/// Applies one `key=value` assignment on top of an existing config.
void apply_config_override(RunConfig& cfg, const std::string& key,
                           const std::string& value);

/// Canonical one-line rendering used for fingerprints and report headers.
std::string canonical_config(const RunConfig& cfg);

/// FNV-1a 64-bit hash, printed as 16 hex digits; the fingerprint primitive.
std::uint64_t fnv1a64(const void* data, std::size_t len,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string fnv1a64_hex(const std::string& text);

/// Build identifier baked in at configure time (version + git describe).
const char* build_identifier();

}  // namespace hiermatch
