#include "hiermatch/trainer.hpp"

#include <cmath>
#include <string>

namespace hiermatch {

TrainState init_train_state(std::size_t d_raw, const RunConfig& cfg) {
  TrainState state;
  Rng rng(mix_seed(cfg.train.seed, 0));
  state.params = make_model_params(d_raw, cfg.model, rng);
  AdamOptimizer::Hyper hyper;
  hyper.lr = cfg.train.lr;
  state.opt = AdamOptimizer(state.params.store, hyper);
  return state;
}

namespace {

struct TripletSource {
  std::vector<const RegionRecord*> sketches;
  std::vector<const RegionRecord*> photos;  // aligned with sketches by identity
};

TripletSource collect_train_records(const Dataset& data) {
  TripletSource src;
  for (const auto id : data.train_identities) {
    src.sketches.push_back(&data.get(id, Modality::sketch));
    src.photos.push_back(&data.get(id, Modality::photo));
  }
  if (src.sketches.size() < 2)
    throw DataError("training needs at least two identities with records");
  return src;
}

}  // namespace

TrainSummary train_model(TrainState& state, const Dataset& data,
                         const RunConfig& cfg,
                         const std::function<void(const TrainState&,
                                                  const EpochStats&)>& on_epoch) {
  const TripletSource src = collect_train_records(data);
  const std::size_t n_train = src.sketches.size();

  std::vector<HierarchyTrace> sketch_scripts(n_train), photo_scripts(n_train);
  if (cfg.model.explicit_hierarchy) {
    for (std::size_t i = 0; i < n_train; ++i) {
      if (src.sketches[i]->tree.empty() || src.photos[i]->tree.empty())
        throw DataError("explicit hierarchy mode needs planted merge trees "
                        "in the dataset");
      sketch_scripts[i] = tree_to_trace(src.sketches[i]->tree, Branch::sketch);
      photo_scripts[i] = tree_to_trace(src.photos[i]->tree, Branch::photo);
    }
  }

  TrainSummary summary;
  for (std::size_t epoch = state.next_epoch; epoch < cfg.train.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.train.seed, 1000 + epoch));
    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
    rng.shuffle(order);

    double loss_total = 0.0;
    std::size_t done = 0;
    while (done < n_train) {
      const std::size_t batch =
          std::min(cfg.train.batch, n_train - done);
      state.params.store.zero_grad();
      Tensor batch_sum;
      for (std::size_t k = 0; k < batch; ++k) {
        const std::size_t item = order[done + k];
        std::size_t neg = static_cast<std::size_t>(
            rng.uniform_index(n_train - 1));
        if (neg >= item) ++neg;

        const Tensor sketch_raw = record_tensor(data, *src.sketches[item]);
        const Tensor photo_pos = record_tensor(data, *src.photos[item]);
        const Tensor photo_neg = record_tensor(data, *src.photos[neg]);
        const HierarchyTrace* s_script =
            cfg.model.explicit_hierarchy ? &sketch_scripts[item] : nullptr;
        const HierarchyTrace* p_pos_script =
            cfg.model.explicit_hierarchy ? &photo_scripts[item] : nullptr;
        const HierarchyTrace* p_neg_script =
            cfg.model.explicit_hierarchy ? &photo_scripts[neg] : nullptr;

        const PairEmbedding pos =
            embed_pair(sketch_raw, photo_pos, state.params, cfg.model,
                       SelectionMode::sample, &rng, s_script, p_pos_script);
        const PairEmbedding negp =
            embed_pair(sketch_raw, photo_neg, state.params, cfg.model,
                       SelectionMode::sample, &rng, s_script, p_neg_script);
        const Tensor loss = triplet_loss(pos, negp, cfg.model.margin);
        batch_sum = k == 0 ? loss : add(batch_sum, loss);
      }
      const Tensor batch_loss =
          scalar_mul(batch_sum, 1.0 / static_cast<double>(batch));
      const double loss_value = batch_loss.item();
      if (!std::isfinite(loss_value))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           " after " + std::to_string(done) + " triplets");
      backward(batch_loss);
      state.opt.step(state.params.store);
      loss_total += loss_value * static_cast<double>(batch);
      done += batch;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.triplets = n_train;
    stats.mean_loss = loss_total / static_cast<double>(n_train);
    summary.log.push_back(stats);

    if (stats.mean_loss < state.best_loss - 1e-9) {
      state.best_loss = stats.mean_loss;
      state.plateau = 0;
    } else {
      ++state.plateau;
    }
    state.next_epoch = epoch + 1;
    if (on_epoch) on_epoch(state, stats);
    if (state.plateau >= cfg.train.patience) {
      summary.early_stopped = true;
      break;
    }
  }
  return summary;
}

}  // namespace hiermatch
