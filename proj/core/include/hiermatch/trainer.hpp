#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "hiermatch/dataset.hpp"
#include "hiermatch/embedder.hpp"
#include "hiermatch/optimizer.hpp"

namespace hiermatch {

/// Everything that must survive a checkpoint round-trip for training to
/// resume bit-exactly: parameters, optimizer moments, epoch cursor, and the
/// early-stop bookkeeping. Per-epoch randomness is derived from (seed,
/// epoch), so no generator state needs to be stored.
struct TrainState {
  ModelParams params;
  AdamOptimizer opt;
  std::size_t next_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t plateau = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t triplets = 0;
};

struct TrainSummary {
  std::vector<EpochStats> log;
  bool early_stopped = false;
};

/// Fresh state with parameters drawn from the run seed.
TrainState init_train_state(std::size_t d_raw, const RunConfig& cfg);

/// Trains on (sketch, own photo, random other-identity photo) triplets until
/// the epoch budget or a `patience`-epoch loss plateau. The callback fires
/// after every epoch (checkpointing, logging). Throws NumericError on a
/// non-finite loss.
TrainSummary train_model(TrainState& state, const Dataset& data,
                         const RunConfig& cfg,
                         const std::function<void(const TrainState&,
                                                  const EpochStats&)>& on_epoch
                         = nullptr);

}  // namespace hiermatch
