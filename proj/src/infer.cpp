// SPDX-License-Identifier: Apache-2.0
#include "iocf/infer.hpp"

#include <cmath>

#include "iocf/error.hpp"

namespace iocf {

TileOutput ModelPredictor::predict_tile(const Image& tile) const {
  NoGradGuard no_grad;
  const ModelOutput out = model_->forward(tile.to_tensor());
  TileOutput result;
  if (out.scores) {
    const auto s = out.scores->data();
    const auto p = out.points->data();
    for (std::size_t i = 0; i < s.size(); ++i) result.points.push_back({p[2 * i], p[2 * i + 1], s[i]});
  }
  if (out.density) result.density = out.density->detach();
  return result;
}

ImagePrediction predict_image(const Predictor& predictor, const Image& image, std::size_t crop, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0, 1]");
  ImagePrediction result;
  result.plan = plan_tiles(image.width, image.height, crop);
  const Image padded = pad_reflect(image, result.plan.padded_width, result.plan.padded_height);
  std::vector<TilePrediction> tiles;
  double density_total = 0.0;
  for (const auto& origin : result.plan.origins) {
    TileOutput out = predictor.predict_tile(iocf::crop(padded, origin.x, origin.y, crop, crop));
    if (out.density) {
      const auto& d = *out.density;
      const std::size_t rows = d.dim(0), cols = d.dim(1);
      const double cell_h = static_cast<double>(crop) / static_cast<double>(rows);
      const double cell_w = static_cast<double>(crop) / static_cast<double>(cols);
      const auto v = d.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double cy = static_cast<double>(origin.y) + (static_cast<double>(r) + 0.5) * cell_h;
        if (cy >= static_cast<double>(image.height)) continue;
        for (std::size_t c = 0; c < cols; ++c) {
          const double cx = static_cast<double>(origin.x) + (static_cast<double>(c) + 0.5) * cell_w;
          if (cx < static_cast<double>(image.width)) density_total += std::abs(v[r * cols + c]);
        }
      }
    }
    tiles.push_back({origin, std::move(out.points)});
  }
  result.merged = merge_tile_predictions(tiles, result.plan, threshold);
  result.count = predictor.counts_by_density() ? density_total : static_cast<double>(result.merged.points.size());
  return result;
}

SplitEvaluation evaluate_samples(const Predictor& predictor, std::span<const Sample> samples, std::size_t crop,
                                 double threshold) {
  SplitEvaluation ev;
  for (const auto& s : samples) {
    ev.predicted.push_back(predict_image(predictor, s.image, crop, threshold).count);
    ev.truth.push_back(s.points.size());
  }
  ev.report = evaluate(ev.predicted, ev.truth);
  return ev;
}

}  // namespace iocf
