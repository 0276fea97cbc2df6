#pragma once

#include <memory>
#include <optional>

#include "hiermatch/coattention.hpp"
#include "hiermatch/config.hpp"
#include "hiermatch/hierarchy.hpp"
#include "hiermatch/param_store.hpp"

namespace hiermatch {

struct ProjectionParams {
  Tensor weight;  // d_raw x d
  Tensor bias;    // 1 x d
};

/// All learnable weights of the model, with named access through `store`
/// and typed views for each module. The views alias the store's tensors.
struct ModelParams {
  ParamStore store;
  ProjectionParams proj;
  HierarchyParams hier;
  CoattnParams coattn;
  std::size_t d_raw = 0;
  std::size_t d = 0;
  std::size_t d_h = 0;
};

/// Creates the full parameter set: weights uniform in +/- sqrt(1/fan_in),
/// gate and transform biases zero.
ModelParams make_model_params(std::size_t d_raw, const ModelConfig& cfg,
                              Rng& rng);
/// Rebuilds the typed views after the store's tensors were replaced
/// (checkpoint restore).
void rebind_param_views(ModelParams& params);

/// Affine projection of raw region features to the d-dimensional node space;
/// node ids are the region positions 0..N-1.
FeatureSet project_regions(const Tensor& raw, Branch branch,
                           const ProjectionParams& proj);

struct PairEmbedding {
  Tensor sketch_final;  // 1 x d
  Tensor photo_final;   // 1 x d
  HierarchyTrace sketch_trace;
  HierarchyTrace photo_trace;
  std::size_t loop_iterations = 0;
};

/// Joint pairwise embedding: project both branches, then alternate
/// co-attention and one hierarchy step per branch until both reach a single
/// node. A branch that reaches one node first keeps joining co-attention but
/// stops fusing. Mode flags: no_coattn skips the co-attention calls,
/// no_hierarchy replaces the loop with one co-attention pass plus mean
/// pooling, explicit_hierarchy replays the supplied per-branch scripts
/// instead of Gumbel selection.
PairEmbedding embed_pair(const Tensor& sketch_raw, const Tensor& photo_raw,
                         const ModelParams& params, const ModelConfig& cfg,
                         SelectionMode mode, Rng* rng,
                         const HierarchyTrace* sketch_script = nullptr,
                         const HierarchyTrace* photo_script = nullptr,
                         bool keep_soft = false);

struct SingleEmbedding {
  Tensor final;  // 1 x d
  HierarchyTrace trace;
};

/// Partner-free embedding for gallery indexing and queries: projection plus
/// the hierarchy loop with co-attention replaced by the identity. Greedy
/// selection, so repeated calls are bit-identical.
SingleEmbedding embed_single(const Tensor& raw, const ModelParams& params,
                             const ModelConfig& cfg,
                             Branch branch = Branch::sketch,
                             const HierarchyTrace* script = nullptr,
                             bool keep_soft = false);

/// Paired triplet objective: max(0, margin + D(S+,P+) - D(S-,P-)) with
/// squared Euclidean D. Both embeddings must come from the same sketch
/// anchor, paired with the positive and negative photo respectively.
Tensor triplet_loss(const PairEmbedding& positive, const PairEmbedding& negative,
                    double margin);

}  // namespace hiermatch
