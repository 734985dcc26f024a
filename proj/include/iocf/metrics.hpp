// SPDX-License-Identifier: Apache-2.0
//
// Count extraction and split-level count-error metrics.

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>

#include "iocf/tensor.hpp"

namespace iocf {

/// Count ranges: [0, 50], [51, 100], [101, 200], [201, inf).
using CountHistogram = std::array<std::size_t, 4>;

struct CountReport {
  double mae = 0.0;
  double mse = 0.0;  // root-mean-square error, the crowd-counting convention
  double nae = 0.0;
  std::size_t images_evaluated = 0;
  std::size_t images_skipped_nae = 0;  // ground truth 0
  CountHistogram histogram{};
};

/// Number of scores strictly above `threshold`.
std::size_t threshold_count(std::span<const double> scores, double threshold);

/// Entrywise L1 norm of a density map, unrounded.
double density_count(const Tensor& density);

CountReport evaluate(std::span<const double> predicted, std::span<const std::size_t> ground_truth);

std::size_t histogram_bin(std::size_t count);
CountHistogram histogram_counts(std::span<const std::size_t> counts);

/// `key=value` lines.
std::string to_text(const CountReport& report);
std::string to_json(const CountReport& report);

}  // namespace iocf
