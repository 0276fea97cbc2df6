#pragma once

#include <cstdint>
#include <vector>

#include "hiermatch/param_store.hpp"

namespace hiermatch {

/// Adam over a ParamStore. Moment buffers follow the store's entry order;
/// both moments and the step counter round-trip through checkpoints.
class AdamOptimizer {
 public:
  struct Hyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  AdamOptimizer() = default;
  AdamOptimizer(ParamStore& store, Hyper hyper);

  void step(ParamStore& store);

  std::uint64_t step_count() const { return step_count_; }
  const Hyper& hyper() const { return hyper_; }

  // Checkpoint plumbing: flat per-parameter buffers in store order.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v, std::uint64_t step_count);

 private:
  Hyper hyper_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_count_ = 0;
};

}  // namespace hiermatch
