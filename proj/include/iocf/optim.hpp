// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "iocf/nn.hpp"

namespace iocf {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: theta -= lr * wd * theta
};

/// Adam with decoupled weight decay over every entry of a ParameterStore.
/// Parameters without a gradient this step are left untouched.
class AdamW {
 public:
  AdamW(nn::ParameterStore& store, AdamOptions options);

  void step();
  std::size_t steps_taken() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  nn::ParameterStore* store_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace iocf
