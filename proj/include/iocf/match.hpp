// SPDX-License-Identifier: Apache-2.0
//
// Bipartite matching of point predictions to ground truth, and the training
// losses: count (density) loss, classification loss, localization loss and
// their weighted sum.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "iocf/geometry.hpp"
#include "iocf/model.hpp"
#include "iocf/tensor.hpp"

namespace iocf {

struct MatchWeights {
  double distance = 1.0;  // weight of ||p_i - g_j||
  double score = 1.0;     // weight of (1 - s_i)
  double knn = 1.0;       // weight of |a_i - b_j|
  std::size_t k = 4;      // neighbours in the average-distance term
  double lambda = 0.5;    // density-loss weight in the total

  void validate() const;
  friend bool operator==(const MatchWeights&, const MatchWeights&) = default;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (gt, pred), ascending gt
  std::vector<std::size_t> unmatched_preds;                // ascending
};

/// | sum(D) - K |.
Tensor density_loss(const Tensor& density, std::int64_t count);

/// Mean distance from each point to its min(k, m - 1) nearest neighbours in
/// the same set; 0 for a single point.
std::vector<double> avg_knn_distance(std::span<const Point> points, std::size_t k);

/// [K x n] cost: C[j, i] = w_dist |p_i - g_j| + w_score (1 - s_i) + w_knn |a_i - b_j|.
/// Throws InfeasibleError when n < K.
Tensor build_cost_matrix(std::span<const ScoredPoint> preds, std::span<const Point> gts, const MatchWeights& weights);

/// Minimum-cost injective assignment of every row (ground truth) to a
/// column (prediction). Shortest-augmenting-path Hungarian method, O(K^2 n).
/// Among equal-cost augmenting choices the lowest column index is taken.
Assignment hungarian_assign(const Tensor& cost);

/// Sum of matched entries in ascending row order.
double assignment_cost(const Tensor& cost, const Assignment& assignment);

/// Mean BCE over all n scores; matched predictions target 1, the rest 0.
Tensor classification_loss(const Tensor& scores, const Assignment& assignment);

/// Mean over matched pairs of |dx| + |dy|; 0 when there is no ground truth.
Tensor localization_loss(const Tensor& points, std::span<const Point> gts, const Assignment& assignment);

/// lambda * L_D + L_c + L_l. Undefined terms are left out.
Tensor total_loss(const Tensor& density, const Tensor& classification, const Tensor& localization, double lambda);

struct LossTerms {
  Tensor density;         // undefined without a density branch
  Tensor classification;  // undefined without a regression branch
  Tensor localization;
  Tensor total;
  Assignment assignment;
};

/// All losses of one model output against ground-truth points given in the
/// output's normalized [0, 1]^2 frame. The density-only variant's total is
/// L_D alone; the regression-only total omits it.
LossTerms compute_losses(const ModelOutput& output, std::span<const Point> gts, Variant variant,
                         const MatchWeights& weights);

}  // namespace iocf
