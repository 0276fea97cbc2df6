#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hiermatch/rng.hpp"
#include "hiermatch/tensor.hpp"

namespace hiermatch {

enum class Branch { sketch, photo };

const char* branch_name(Branch b);
Branch parse_branch(const std::string& s);

/// One hierarchy level of one branch: N node feature rows plus stable ids.
struct FeatureSet {
  Tensor nodes;                       // N x d
  std::vector<std::int64_t> node_ids;  // unique, fresh ids for fused nodes
  Branch branch = Branch::sketch;

  std::size_t count() const { return node_ids.size(); }
};

enum class SelectionMode { sample, greedy };

struct GumbelConfig {
  double temperature = 1.0;
  SelectionMode mode = SelectionMode::sample;
};

/// Learnable weights of the hierarchical parsing module; one instance is
/// shared by the sketch and photo branches.
struct HierarchyParams {
  Tensor compat_proj;  // d x d_h
  Tensor fuse_weight;  // d x 2d
};

struct TraceEntry {
  std::size_t level = 0;
  Branch branch = Branch::sketch;
  std::size_t a_index = 0;  // positions in the node list at merge time, a < b
  std::size_t b_index = 0;
  std::int64_t a_id = 0;
  std::int64_t b_id = 0;
  std::int64_t new_id = 0;
  std::vector<double> soft;  // optional diagnostic copy of the soft weights
};

/// Record of which pair merged at each level; also the input script for
/// explicit-hierarchy mode. Serialized one merge per line as
/// `level,branch,a_id,b_id,new_id`.
struct HierarchyTrace {
  std::vector<TraceEntry> entries;

  std::string serialize() const;
  static HierarchyTrace parse(std::istream& in);
  static HierarchyTrace parse_string(const std::string& text);
};

/// Checks that `trace` is a full binary merge tree over `original_ids`:
/// every original id consumed exactly once, every internal id produced once
/// and consumed at most once, ending at a single root.
/// Returns an error message, or nullopt if valid.
std::optional<std::string> validate_trace(
    const HierarchyTrace& trace, const std::vector<std::int64_t>& original_ids);

std::size_t pair_index_count(std::size_t n);
std::size_t flatten_pair_index(std::size_t a, std::size_t b, std::size_t n);
std::pair<std::size_t, std::size_t> unflatten_pair_index(std::size_t h,
                                                         std::size_t n);

/// Strict upper-triangular entries of the compatibility Gram matrix of the
/// projected nodes, flattened row-major into a 1xH tensor, H = N(N-1)/2.
Tensor compatibility_scores(const FeatureSet& x, const HierarchyParams& params);

struct GumbelSelection {
  Tensor soft;        // 1xH differentiable relaxation
  Tensor selection;   // 1xH straight-through tensor: one-hot forward, soft backward
  std::size_t index;  // argmax position (lowest index wins ties)
  std::vector<double> one_hot;
};

/// Draws Gumbel noise from `rng` (zero noise in greedy mode) and forms the
/// straight-through sample over the given logits.
GumbelSelection gumbel_st_select(const Tensor& logits, const GumbelConfig& cfg,
                                 Rng* rng);
/// Same, with caller-supplied noise; the entry point tests use to hold the
/// noise fixed.
GumbelSelection gumbel_st_select_with_noise(const Tensor& logits, double tau,
                                            const std::vector<double>& noise);

/// 0/1 selector constants mapping a flat pair index to the first (`first`)
/// and second (`second`) member of the pair: both HxN, row h one-hot.
struct PairSelectors {
  Tensor first;
  Tensor second;
};
PairSelectors pair_selector_constants(std::size_t n);

/// ReLU(W_F . [x_a, x_b]) for two 1xd rows.
Tensor fuse_vectors(const Tensor& xa, const Tensor& xb,
                    const HierarchyParams& params);

/// Hard pairwise fusion: fused node placed at position a, node b removed,
/// all other rows unchanged.
FeatureSet fuse_pair(const FeatureSet& x, std::size_t a, std::size_t b,
                     const HierarchyParams& params, std::int64_t new_id);

struct StepResult {
  FeatureSet next;
  TraceEntry entry;
};

/// One full level: score all pairs, select one via straight-through
/// Gumbel-softmax, fuse it. In sample mode the fused inputs are gathered
/// through the straight-through tensor so the selection influences
/// gradients; greedy mode selects the argmax with zero noise.
StepResult hierarchy_step(const FeatureSet& x, const GumbelConfig& cfg,
                          const HierarchyParams& params, Rng* rng,
                          std::size_t level, std::int64_t new_id,
                          bool keep_soft = false);

/// Replays one scripted merge (explicit-hierarchy mode). The entry's a_id
/// and b_id must name current nodes; positions are resolved here and the
/// lower position supplies the first fusion operand.
StepResult hierarchy_replay_step(const FeatureSet& x, const TraceEntry& entry,
                                 const HierarchyParams& params,
                                 std::size_t level);

}  // namespace hiermatch
