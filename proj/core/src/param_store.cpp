#include "hiermatch/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace hiermatch {

Tensor& ParamStore::create_uniform(const std::string& name, std::size_t rows,
                                   std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(rows));
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return put(name, Tensor::from_values(rows, cols, std::move(values), true));
}

Tensor& ParamStore::create_zeros(const std::string& name, std::size_t rows,
                                 std::size_t cols) {
  return put(name, Tensor::zeros(rows, cols, true));
}

Tensor& ParamStore::put(const std::string& name, Tensor t) {
  if (contains(name))
    throw std::logic_error("parameter already registered: " + name);
  entries_.push_back({name, std::move(t)});
  return entries_.back().tensor;
}

Tensor& ParamStore::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

}  // namespace hiermatch
