#pragma once

#include <string>
#include <vector>

#include "hiermatch/rng.hpp"
#include "hiermatch/tensor.hpp"

namespace hiermatch {

/// Named collection of learnable tensors. Insertion order is stable, so every
/// walk over the store (optimizer updates, checkpointing, finite-difference
/// sweeps) is deterministic.
class ParamStore {
 public:
  /// Uniform init in +/- sqrt(1/fan_in); fan_in is the row count.
  Tensor& create_uniform(const std::string& name, std::size_t rows,
                         std::size_t cols, Rng& rng);
  Tensor& create_zeros(const std::string& name, std::size_t rows,
                       std::size_t cols);
  /// Registers an existing leaf tensor (used when restoring checkpoints).
  Tensor& put(const std::string& name, Tensor t);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  /// Total number of scalar parameters.
  std::size_t parameter_count() const;

  struct Entry {
    std::string name;
    Tensor tensor;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

}  // namespace hiermatch
