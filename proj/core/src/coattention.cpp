#include "hiermatch/coattention.hpp"

#include <cmath>

namespace hiermatch {

Tensor affinity(const FeatureSet& sketch, const FeatureSet& photo,
                const CoattnParams& params) {
  if (sketch.count() == 0 || photo.count() == 0)
    throw ShapeError("affinity: both branches must be nonempty");
  const Tensor s_proj = matmul(sketch.nodes, params.affinity_sketch);
  const Tensor p_proj = matmul(photo.nodes, params.affinity_photo);
  return matmul_nt(s_proj, p_proj);
}

Aggregated aggregate(const FeatureSet& sketch, const FeatureSet& photo,
                     const Tensor& affinity_matrix,
                     const CoattnParams& params) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_h));
  // Sketch-specific attention normalizes A^T: each photo row attends over
  // all sketch nodes, and vice versa for the photo-specific attention.
  const Tensor attn_sketch =
      softmax_rows(scalar_mul(transpose(affinity_matrix), scale));
  const Tensor attn_photo = softmax_rows(scalar_mul(affinity_matrix, scale));
  Aggregated agg;
  agg.sketch_to_photo = matmul(attn_sketch, sketch.nodes);
  agg.photo_to_sketch = matmul(attn_photo, photo.nodes);
  return agg;
}

namespace {

Tensor fuse_branch(const Tensor& own, const Tensor& aggregated,
                   const Tensor& gate_w, const Tensor& transform_w,
                   const Tensor& transform_b) {
  const Tensor gate = sigmoid(matmul(concat_last_dim(own, aggregated), gate_w));
  const Tensor mixed = hadamard(gate, add(own, aggregated));
  const Tensor transformed =
      relu(add_row_bias(matmul(mixed, transform_w), transform_b));
  return add(transformed, own);
}

}  // namespace

EnrichedPair gated_fuse(const FeatureSet& sketch, const FeatureSet& photo,
                        const Aggregated& agg, const CoattnParams& params) {
  EnrichedPair out;
  out.sketch = fuse_branch(sketch.nodes, agg.photo_to_sketch,
                           params.gate_sketch, params.transform_sketch_w,
                           params.transform_sketch_b);
  out.photo = fuse_branch(photo.nodes, agg.sketch_to_photo, params.gate_photo,
                          params.transform_photo_w, params.transform_photo_b);
  return out;
}

std::pair<FeatureSet, FeatureSet> coattend(const FeatureSet& sketch,
                                           const FeatureSet& photo,
                                           const CoattnParams& params,
                                           bool enabled) {
  if (!enabled) return {sketch, photo};
  const Tensor a = affinity(sketch, photo, params);
  const Aggregated agg = aggregate(sketch, photo, a, params);
  const EnrichedPair enriched = gated_fuse(sketch, photo, agg, params);
  FeatureSet s_out{enriched.sketch, sketch.node_ids, sketch.branch};
  FeatureSet p_out{enriched.photo, photo.node_ids, photo.branch};
  return {std::move(s_out), std::move(p_out)};
}

}  // namespace hiermatch
