// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace iocf {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct ScoredPoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
  friend bool operator==(const ScoredPoint&, const ScoredPoint&) = default;
};

}  // namespace iocf
