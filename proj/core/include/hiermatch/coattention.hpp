#pragma once

#include <utility>

#include "hiermatch/hierarchy.hpp"
#include "hiermatch/tensor.hpp"

namespace hiermatch {

/// Learnable weights of the cross-modal co-attention module; one instance is
/// reused at every hierarchical level.
struct CoattnParams {
  Tensor affinity_sketch;  // W_S: d x d_h
  Tensor affinity_photo;   // W_P: d x d_h
  Tensor gate_sketch;      // W_GS: 2d x d
  Tensor gate_photo;       // W_GP: 2d x d
  Tensor transform_sketch_w;  // Z_S linear: d x d
  Tensor transform_sketch_b;  // Z_S bias: 1 x d
  Tensor transform_photo_w;   // Z_P linear: d x d
  Tensor transform_photo_b;   // Z_P bias: 1 x d
  std::size_t d_h = 0;  // projection width, used to scale the softmax
};

/// Stroke-region affinity matrix A[i][j] = <S_i W_S, P_j W_P>, N_S x N_P.
Tensor affinity(const FeatureSet& sketch, const FeatureSet& photo,
                const CoattnParams& params);

struct Aggregated {
  Tensor sketch_to_photo;  // N_P x d convex combinations of sketch rows
  Tensor photo_to_sketch;  // N_S x d convex combinations of photo rows
};

/// Normalizes the affinity by sqrt(d_h) row-wise in both directions and
/// aggregates each branch's features for the other.
Aggregated aggregate(const FeatureSet& sketch, const FeatureSet& photo,
                     const Tensor& affinity_matrix, const CoattnParams& params);

struct EnrichedPair {
  Tensor sketch;  // N_S x d
  Tensor photo;   // N_P x d
};

/// Gated residual fusion of each branch with the other branch's aggregate.
EnrichedPair gated_fuse(const FeatureSet& sketch, const FeatureSet& photo,
                        const Aggregated& agg, const CoattnParams& params);

/// Full co-attention pass; node counts and identifiers are preserved.
/// With `enabled` false this is the identity (ablation mode).
std::pair<FeatureSet, FeatureSet> coattend(const FeatureSet& sketch,
                                           const FeatureSet& photo,
                                           const CoattnParams& params,
                                           bool enabled = true);

}  // namespace hiermatch
