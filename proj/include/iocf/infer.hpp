// SPDX-License-Identifier: Apache-2.0
//
// Tiled inference over whole images and split-level count evaluation.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iocf/dataset.hpp"
#include "iocf/metrics.hpp"
#include "iocf/model.hpp"

namespace iocf {

struct TileOutput {
  std::vector<ScoredPoint> points;  // tile-local, normalized to [0, 1]^2
  std::optional<Tensor> density;    // [h x w] cells covering the tile
};

/// Anything that maps a crop-sized tile to scored points and/or a density map.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual TileOutput predict_tile(const Image& tile) const = 0;
  /// Counts from density (true) or from thresholded points (false).
  virtual bool counts_by_density() const = 0;
};

class ModelPredictor final : public Predictor {
 public:
  explicit ModelPredictor(const IocFormer& model) : model_(&model) {}
  TileOutput predict_tile(const Image& tile) const override;
  bool counts_by_density() const override { return !has_regression_branch(model_->config().variant); }

 private:
  const IocFormer* model_;
};

struct ImagePrediction {
  TilePlan plan;
  MergedPredictions merged;
  double count = 0.0;
};

/// Reflect-pads to a multiple of `crop`, predicts every tile, merges.
/// Density counting sums the cells whose centers fall inside the original
/// image; point counting keeps scores strictly above `threshold`.
ImagePrediction predict_image(const Predictor& predictor, const Image& image, std::size_t crop, double threshold);

struct SplitEvaluation {
  CountReport report;
  std::vector<double> predicted;
  std::vector<std::size_t> truth;
};

SplitEvaluation evaluate_samples(const Predictor& predictor, std::span<const Sample> samples, std::size_t crop,
                                 double threshold);

}  // namespace iocf
