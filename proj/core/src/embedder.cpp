#include "hiermatch/embedder.hpp"

#include <string>

namespace hiermatch {

ModelParams make_model_params(std::size_t d_raw, const ModelConfig& cfg,
                              Rng& rng) {
  if (d_raw == 0) throw ConfigError("d_raw must be positive");
  ModelParams p;
  p.d_raw = d_raw;
  p.d = cfg.d;
  p.d_h = cfg.d_h;
  const std::size_t d = cfg.d, d_h = cfg.d_h;
  p.store.create_uniform("proj.weight", d_raw, d, rng);
  p.store.create_zeros("proj.bias", 1, d);
  p.store.create_uniform("hier.compat_proj", d, d_h, rng);
  p.store.create_uniform("hier.fuse_weight", d, 2 * d, rng);
  p.store.create_uniform("coattn.affinity_sketch", d, d_h, rng);
  p.store.create_uniform("coattn.affinity_photo", d, d_h, rng);
  p.store.create_uniform("coattn.gate_sketch", 2 * d, d, rng);
  p.store.create_uniform("coattn.gate_photo", 2 * d, d, rng);
  p.store.create_uniform("coattn.transform_sketch_w", d, d, rng);
  p.store.create_zeros("coattn.transform_sketch_b", 1, d);
  p.store.create_uniform("coattn.transform_photo_w", d, d, rng);
  p.store.create_zeros("coattn.transform_photo_b", 1, d);
  rebind_param_views(p);
  return p;
}

void rebind_param_views(ModelParams& p) {
  p.proj.weight = p.store.at("proj.weight");
  p.proj.bias = p.store.at("proj.bias");
  p.hier.compat_proj = p.store.at("hier.compat_proj");
  p.hier.fuse_weight = p.store.at("hier.fuse_weight");
  p.coattn.affinity_sketch = p.store.at("coattn.affinity_sketch");
  p.coattn.affinity_photo = p.store.at("coattn.affinity_photo");
  p.coattn.gate_sketch = p.store.at("coattn.gate_sketch");
  p.coattn.gate_photo = p.store.at("coattn.gate_photo");
  p.coattn.transform_sketch_w = p.store.at("coattn.transform_sketch_w");
  p.coattn.transform_sketch_b = p.store.at("coattn.transform_sketch_b");
  p.coattn.transform_photo_w = p.store.at("coattn.transform_photo_w");
  p.coattn.transform_photo_b = p.store.at("coattn.transform_photo_b");
  p.coattn.d_h = p.d_h;
}

FeatureSet project_regions(const Tensor& raw, Branch branch,
                           const ProjectionParams& proj) {
  if (!raw.defined() || raw.rows() == 0)
    throw DataError("empty region set");
  FeatureSet fs;
  fs.nodes = add_row_bias(matmul(raw, proj.weight), proj.bias);
  fs.node_ids.resize(raw.rows());
  for (std::size_t i = 0; i < fs.node_ids.size(); ++i)
    fs.node_ids[i] = static_cast<std::int64_t>(i);
  fs.branch = branch;
  return fs;
}

namespace {

struct BranchState {
  FeatureSet set;
  HierarchyTrace trace;
  std::int64_t next_id = 0;
  const HierarchyTrace* script = nullptr;
  std::size_t script_pos = 0;
};

void check_script(const BranchState& st, const char* which) {
  if (st.script == nullptr)
    throw ConfigError(std::string("explicit hierarchy mode requires a ") +
                      which + " trace script");
  const std::size_t needed = st.set.count() - 1;
  if (st.script->entries.size() != needed)
    throw DataError(std::string(which) + " trace has " +
                    std::to_string(st.script->entries.size()) +
                    " merges, expected " + std::to_string(needed));
}

void fuse_once(BranchState& st, const ModelConfig& cfg, SelectionMode mode,
               const HierarchyParams& hier, Rng* rng, std::size_t level,
               bool keep_soft) {
  StepResult step;
  if (cfg.explicit_hierarchy) {
    step = hierarchy_replay_step(st.set, st.script->entries[st.script_pos],
                                 hier, level);
    ++st.script_pos;
  } else {
    GumbelConfig gcfg{cfg.tau, mode};
    step = hierarchy_step(st.set, gcfg, hier, rng, level, st.next_id++,
                          keep_soft);
  }
  st.set = std::move(step.next);
  st.trace.entries.push_back(std::move(step.entry));
}

}  // namespace

PairEmbedding embed_pair(const Tensor& sketch_raw, const Tensor& photo_raw,
                         const ModelParams& params, const ModelConfig& cfg,
                         SelectionMode mode, Rng* rng,
                         const HierarchyTrace* sketch_script,
                         const HierarchyTrace* photo_script, bool keep_soft) {
  BranchState s;
  s.set = project_regions(sketch_raw, Branch::sketch, params.proj);
  BranchState p;
  p.set = project_regions(photo_raw, Branch::photo, params.proj);
  s.next_id = static_cast<std::int64_t>(s.set.count());
  p.next_id = static_cast<std::int64_t>(p.set.count());

  PairEmbedding out;

  if (cfg.no_hierarchy) {
    auto [se, pe] = coattend(s.set, p.set, params.coattn, !cfg.no_coattn);
    out.sketch_final = mean_rows(se.nodes);
    out.photo_final = mean_rows(pe.nodes);
    return out;
  }

  if (cfg.explicit_hierarchy) {
    s.script = sketch_script;
    p.script = photo_script;
    check_script(s, "sketch");
    check_script(p, "photo");
  }

  std::size_t level = 0;
  do {
    auto [se, pe] = coattend(s.set, p.set, params.coattn, !cfg.no_coattn);
    s.set = std::move(se);
    p.set = std::move(pe);
    if (s.set.count() > 1)
      fuse_once(s, cfg, mode, params.hier, rng, level, keep_soft);
    if (p.set.count() > 1)
      fuse_once(p, cfg, mode, params.hier, rng, level, keep_soft);
    ++level;
  } while (s.set.count() > 1 || p.set.count() > 1);

  out.sketch_final = select_row(s.set.nodes, 0);
  out.photo_final = select_row(p.set.nodes, 0);
  out.sketch_trace = std::move(s.trace);
  out.photo_trace = std::move(p.trace);
  out.loop_iterations = level;
  return out;
}

SingleEmbedding embed_single(const Tensor& raw, const ModelParams& params,
                             const ModelConfig& cfg, Branch branch,
                             const HierarchyTrace* script, bool keep_soft) {
  BranchState st;
  st.set = project_regions(raw, branch, params.proj);
  st.next_id = static_cast<std::int64_t>(st.set.count());

  SingleEmbedding out;
  if (cfg.no_hierarchy) {
    out.final = mean_rows(st.set.nodes);
    return out;
  }
  if (cfg.explicit_hierarchy) {
    st.script = script;
    check_script(st, "record");
  }
  std::size_t level = 0;
  while (st.set.count() > 1) {
    fuse_once(st, cfg, SelectionMode::greedy, params.hier, nullptr, level,
              keep_soft);
    ++level;
  }
  out.final = select_row(st.set.nodes, 0);
  out.trace = std::move(st.trace);
  return out;
}

Tensor triplet_loss(const PairEmbedding& positive,
                    const PairEmbedding& negative, double margin) {
  const Tensor d_pos =
      sq_euclidean(positive.sketch_final, positive.photo_final);
  const Tensor d_neg =
      sq_euclidean(negative.sketch_final, negative.photo_final);
  return relu(add(Tensor::scalar(margin), sub(d_pos, d_neg)));
}

}  // namespace hiermatch
