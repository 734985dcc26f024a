// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive minimum over all injective row -> column maps. Sums each
// candidate in ascending row order so totals compare exactly with
// assignment_cost.

#pragma once

#include <limits>
#include <vector>

namespace iocf::testing {

inline double brute_force_min_assignment(const std::vector<double>& cost, std::size_t rows, std::size_t cols) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(rows);
  std::vector<bool> used(cols, false);
  auto recurse = [&](auto&& self, std::size_t row) -> void {
    if (row == rows) {
      double total = 0.0;
      for (std::size_t r = 0; r < rows; ++r) total += cost[r * cols + pick[r]];
      if (total < best) best = total;
      return;
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c]) continue;
      used[c] = true;
      pick[row] = c;
      self(self, row + 1);
      used[c] = false;
    }
  };
  recurse(recurse, 0);
  return best;
}

}  // namespace iocf::testing
