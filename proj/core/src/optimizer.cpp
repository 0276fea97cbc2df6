#include "hiermatch/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace hiermatch {

AdamOptimizer::AdamOptimizer(ParamStore& store, Hyper hyper) : hyper_(hyper) {
  m_.reserve(store.size());
  v_.reserve(store.size());
  for (const auto& e : store.entries()) {
    m_.emplace_back(e.tensor.size(), 0.0);
    v_.emplace_back(e.tensor.size(), 0.0);
  }
}

void AdamOptimizer::step(ParamStore& store) {
  if (m_.size() != store.size())
    throw std::logic_error("optimizer state does not match parameter store");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_count_));
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& tensor = store.entries()[p].tensor;
    const auto grad = tensor.grad();
    auto values = tensor.mutable_values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = hyper_.beta1 * m[i] + (1.0 - hyper_.beta1) * g;
      v[i] = hyper_.beta2 * v[i] + (1.0 - hyper_.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= hyper_.lr * m_hat / (std::sqrt(v_hat) + hyper_.epsilon);
    }
  }
}

void AdamOptimizer::restore(std::vector<std::vector<double>> m,
                            std::vector<std::vector<double>> v,
                            std::uint64_t step_count) {
  m_ = std::move(m);
  v_ = std::move(v);
  step_count_ = step_count;
}

}  // namespace hiermatch
