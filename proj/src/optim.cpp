// SPDX-License-Identifier: Apache-2.0
#include "iocf/optim.hpp"

#include <cmath>

namespace iocf {

AdamW::AdamW(nn::ParameterStore& store, AdamOptions options) : store_(&store), options_(options) {
  for (const auto& [name, p] : store.entries()) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const auto& entries = store_->entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor p = entries[k].second;
    if (!p.has_grad()) continue;
    const auto& g = p.grad();
    auto theta = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
      theta[i] -= options_.lr * (update + options_.weight_decay * theta[i]);
    }
  }
}

}  // namespace iocf
