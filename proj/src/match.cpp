// SPDX-License-Identifier: Apache-2.0
#include "iocf/match.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iocf/error.hpp"
#include "iocf/ops.hpp"

namespace iocf {

void MatchWeights::validate() const {
  for (double w : {distance, score, knn, lambda}) {
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("match weights must be finite and non-negative");
  }
  if (k < 1) throw ConfigError("k must be >= 1");
}

Tensor density_loss(const Tensor& density, std::int64_t count) {
  if (count < 0) throw UsageError("density_loss: negative count " + std::to_string(count));
  return ops::abs(ops::add_scalar(ops::sum(density), -static_cast<double>(count)));
}

std::vector<double> avg_knn_distance(std::span<const Point> points, std::size_t k) {
  if (k < 1) throw UsageError("avg_knn_distance: k must be >= 1");
  const std::size_t m = points.size();
  std::vector<double> out(m, 0.0);
  if (m < 2) return out;
  const std::size_t take = std::min(k, m - 1);
  std::vector<double> dist;
  dist.reserve(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) dist.push_back(std::hypot(points[i].x - points[j].x, points[i].y - points[j].y));
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
    double total = 0.0;
    for (std::size_t t = 0; t < take; ++t) total += dist[t];
    out[i] = total / static_cast<double>(take);
  }
  return out;
}

Tensor build_cost_matrix(std::span<const ScoredPoint> preds, std::span<const Point> gts, const MatchWeights& weights) {
  weights.validate();
  const std::size_t n = preds.size(), K = gts.size();
  if (n < K) {
    throw InfeasibleError("cannot match " + std::to_string(K) + " ground-truth points with only " +
                          std::to_string(n) + " predictions");
  }
  if (K == 0) throw UsageError("build_cost_matrix: no ground-truth points");
  std::vector<Point> pred_xy(n);
  std::transform(preds.begin(), preds.end(), pred_xy.begin(), [](const ScoredPoint& p) { return Point{p.x, p.y}; });
  const auto a = avg_knn_distance(pred_xy, weights.k);
  const auto b = avg_knn_distance(gts, weights.k);

  std::vector<double> cost(K * n);
  for (std::size_t j = 0; j < K; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      cost[j * n + i] = weights.distance * std::hypot(preds[i].x - gts[j].x, preds[i].y - gts[j].y) +
                        weights.score * (1.0 - preds[i].score) + weights.knn * std::fabs(a[i] - b[j]);
    }
  }
  return Tensor::from_data({K, n}, std::move(cost));
}

Assignment hungarian_assign(const Tensor& cost) {
  if (cost.rank() != 2) throw DimensionError("cost matrix must be rank 2, got " + to_string(cost.shape()));
  const std::size_t rows = cost.dim(0), cols = cost.dim(1);
  if (cols < rows) {
    throw InfeasibleError("cannot assign " + std::to_string(rows) + " rows to " + std::to_string(cols) + " columns");
  }
  const auto c = cost.data();
  for (double v : c) {
    if (std::isnan(v)) throw UsageError("cost matrix contains NaN");
    if (!std::isfinite(v)) throw UsageError("cost matrix contains an infinite entry");
  }

  // 1-based potentials; column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<std::size_t> owner(cols + 1, 0), way(cols + 1, 0);
  for (std::size_t row = 1; row <= rows; ++row) {
    owner[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<bool> used(cols + 1, false);
    do {
      used[col0] = true;
      const std::size_t r = owner[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = c[(r - 1) * cols + (j - 1)] - u[r] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = col0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          col1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      col0 = col1;
    } while (owner[col0] != 0);
    do {
      const std::size_t prev = way[col0];
      owner[col0] = owner[prev];
      col0 = prev;
    } while (col0 != 0);
  }

  Assignment out;
  std::vector<std::size_t> pred_of_row(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (owner[j] != 0) {
      pred_of_row[owner[j] - 1] = j - 1;
    } else {
      out.unmatched_preds.push_back(j - 1);
    }
  }
  for (std::size_t r = 0; r < rows; ++r) out.pairs.emplace_back(r, pred_of_row[r]);
  return out;
}

double assignment_cost(const Tensor& cost, const Assignment& assignment) {
  const std::size_t cols = cost.dim(1);
  double total = 0.0;
  for (const auto& [gt, pred] : assignment.pairs) total += cost.data()[gt * cols + pred];
  return total;
}

Tensor classification_loss(const Tensor& scores, const Assignment& assignment) {
  std::vector<double> targets(scores.numel(), 0.0);
  for (const auto& [gt, pred] : assignment.pairs) {
    if (pred >= targets.size()) throw UsageError("assignment refers to prediction " + std::to_string(pred));
    targets[pred] = 1.0;
  }
  return ops::binary_cross_entropy(scores, targets, 1e-7);
}

Tensor localization_loss(const Tensor& points, std::span<const Point> gts, const Assignment& assignment) {
  if (assignment.pairs.empty()) return Tensor::scalar(0.0);
  if (points.rank() != 2 || points.dim(1) != 2) {
    throw DimensionError("points must be [n x 2], got " + to_string(points.shape()));
  }
  std::vector<std::size_t> rows;
  std::vector<double> target;
  for (const auto& [gt, pred] : assignment.pairs) {
    if (gt >= gts.size()) throw UsageError("assignment refers to ground truth " + std::to_string(gt));
    rows.push_back(pred);
    target.push_back(gts[gt].x);
    target.push_back(gts[gt].y);
  }
  const Tensor matched = ops::select_rows(points, rows);
  const Tensor diff = ops::sub(matched, Tensor::from_data({rows.size(), 2}, std::move(target)));
  return ops::scale(ops::sum(ops::abs(diff)), 1.0 / static_cast<double>(rows.size()));
}

Tensor total_loss(const Tensor& density, const Tensor& classification, const Tensor& localization, double lambda) {
  Tensor total;
  auto accumulate = [&total](const Tensor& term) { total = total.defined() ? ops::add(total, term) : term; };
  if (density.defined()) accumulate(ops::scale(density, lambda));
  if (classification.defined()) accumulate(classification);
  if (localization.defined()) accumulate(localization);
  if (!total.defined()) throw UsageError("total_loss: no loss terms");
  return total;
}

LossTerms compute_losses(const ModelOutput& output, std::span<const Point> gts, Variant variant,
                         const MatchWeights& weights) {
  LossTerms terms;
  const auto count = static_cast<std::int64_t>(gts.size());
  if (has_density_branch(variant)) {
    if (!output.density) throw UsageError("model output has no density map");
    terms.density = density_loss(*output.density, count);
  }
  if (!has_regression_branch(variant)) {
    terms.total = terms.density;
    return terms;
  }
  if (!output.scores || !output.points) throw UsageError("model output has no point predictions");

  const Tensor& scores = *output.scores;
  const Tensor& points = *output.points;
  const std::size_t n = scores.numel();
  if (!gts.empty()) {
    std::vector<ScoredPoint> preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      preds[i] = {points.data()[2 * i], points.data()[2 * i + 1], scores.data()[i]};
    }
    terms.assignment = hungarian_assign(build_cost_matrix(preds, gts, weights));
  } else {
    for (std::size_t i = 0; i < n; ++i) terms.assignment.unmatched_preds.push_back(i);
  }
  terms.classification = classification_loss(scores, terms.assignment);
  terms.localization = localization_loss(points, gts, terms.assignment);
  if (variant == Variant::kRegressionOnly) {
    terms.total = total_loss({}, terms.classification, terms.localization, weights.lambda);
  } else {
    terms.total = total_loss(terms.density, terms.classification, terms.localization, weights.lambda);
  }
  return terms;
}

}  // namespace iocf
