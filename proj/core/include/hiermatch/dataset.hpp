#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hiermatch/synth.hpp"
#include "hiermatch/tensor.hpp"

namespace hiermatch {

enum class Modality { sketch, photo };

const char* modality_name(Modality m);
Modality parse_modality(const std::string& s);

/// Region features of one item: N rows of width d_raw, plus the planted
/// merge tree and per-region depths when the item came from the generator.
struct RegionRecord {
  std::int64_t identity = 0;
  Modality modality = Modality::photo;
  std::size_t n_regions = 0;
  std::vector<double> features;       // n_regions x d_raw, row-major
  std::vector<std::size_t> depths;    // per region; empty when unknown
  MergeTree tree;                     // planted merge order; empty when unknown
};

struct Dataset {
  std::size_t d_raw = 0;
  std::vector<RegionRecord> records;
  std::vector<std::int64_t> train_identities;
  std::vector<std::int64_t> test_identities;

  const RegionRecord* find(std::int64_t identity, Modality m) const;
  const RegionRecord& get(std::int64_t identity, Modality m) const;
};

/// Directory layout: manifest.txt (header + one line per record),
/// features.bin (little-endian float64 payload addressed by byte offset),
/// split.txt (train/test identity lists).
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

/// The record's features as a constant N x d_raw tensor.
Tensor record_tensor(const Dataset& ds, const RegionRecord& rec);

/// Drops detail regions from a record: the deepest half of the regions are
/// the detail set; `coarse` removes half of it, `coarse_pp` all of it. The
/// planted tree is restricted to the surviving regions.
RegionRecord degrade_record(const RegionRecord& rec, DetailLevel level,
                            std::size_t d_raw);

/// Deterministic synthetic dataset with planted hierarchical structure.
Dataset generate_dataset(const SyntheticSpec& spec);

}  // namespace hiermatch
