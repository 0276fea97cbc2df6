#pragma once

#include <cstdint>
#include <vector>

#include "hiermatch/hierarchy.hpp"
#include "hiermatch/rng.hpp"

namespace hiermatch {

/// One agglomerative merge: nodes `a` and `b` form `parent`. Leaves of an
/// n-leaf tree are ids 0..n-1, internal nodes n..2n-2, created in order.
struct MergeStep {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t parent = 0;
};

using MergeTree = std::vector<MergeStep>;

/// Uniform random agglomeration over n leaves.
MergeTree random_merge_tree(std::size_t n_leaves, Rng& rng);

/// Depth of every node (root = 0), indexed by node id, size 2n-1.
std::vector<std::size_t> node_depths(const MergeTree& tree,
                                     std::size_t n_leaves);

/// Restriction of `tree` to a subset of its leaves. `kept` holds original
/// leaf ids in the order they will appear in the restricted record; the
/// result is re-indexed so leaves are 0..k-1 (positions in `kept`) and
/// internal nodes k..2k-2, preserving the original merge order.
MergeTree induce_subtree(const MergeTree& tree, std::size_t n_leaves,
                         const std::vector<std::size_t>& kept);

/// Converts a planted merge order into an explicit-hierarchy script.
HierarchyTrace tree_to_trace(const MergeTree& tree, Branch branch);

/// Fraction of the trace's merges whose leaf-set equals the leaf-set of some
/// internal node of the planted tree. Trace leaf ids are 0..n-1 positions.
double trace_fidelity(const HierarchyTrace& trace, const MergeTree& planted,
                      std::size_t n_leaves);

enum class DetailLevel { full, coarse, coarse_pp };

const char* detail_level_name(DetailLevel level);
DetailLevel parse_detail_level(const std::string& s);

/// Generation settings for the synthetic cross-modal benchmark. Features are
/// compositional: every leaf is the sum of per-node contributions along its
/// root path, with amplitudes decaying by `detail_decay` per depth, so
/// shallow structure carries the identity signal and deep leaves add detail.
struct SyntheticSpec {
  std::size_t n_identities = 100;
  std::size_t d_raw = 32;
  std::size_t n_regions_photo = 16;
  std::size_t n_strokes_min = 10;  // sketch leaf count range (shallowest kept)
  std::size_t n_strokes_max = 16;
  DetailLevel detail_level = DetailLevel::full;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
  double train_fraction = 0.5;
  double detail_decay = 1.3;
  double root_scale = 1.0;
  // Rescale every identity's prototypes so the mean squared entry is
  // feature_scale^2; keeps compatibility logits and triplet distances in a
  // workable range regardless of tree depth. 0 disables.
  double feature_scale = 1.0;
};

/// Parses a `key = value` spec file (same syntax as the model config).
SyntheticSpec parse_synthetic_spec_file(const std::string& path);
SyntheticSpec parse_synthetic_spec_string(const std::string& text);

}  // namespace hiermatch
