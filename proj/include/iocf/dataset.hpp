// SPDX-License-Identifier: Apache-2.0
//
// Point-annotation documents, split manifests, dataset layout on disk,
// count statistics, training augmentation and tiled-inference geometry.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "iocf/geometry.hpp"
#include "iocf/image.hpp"
#include "iocf/metrics.hpp"

namespace iocf {

struct AnnotatedPoint {
  double x = 0.0;
  double y = 0.0;
  bool difficult = false;
  friend bool operator==(const AnnotatedPoint&, const AnnotatedPoint&) = default;
};

struct AnnotationDoc {
  std::string image;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<AnnotatedPoint> points;

  /// Throws ValidationError naming the first offending field.
  void validate() const;
  std::vector<Point> centers() const;

  friend bool operator==(const AnnotationDoc&, const AnnotationDoc&) = default;
};

nlohmann::ordered_json to_json(const AnnotationDoc& doc);
/// Parses and validates. Structural problems raise ParseError, data
/// invariant violations ValidationError; both name the field path.
AnnotationDoc annotation_from_json(const nlohmann::json& j);
/// Canonical serialization (fixed key order, two-space indent).
std::string canonical_json(const AnnotationDoc& doc);

AnnotationDoc read_annotations(const std::filesystem::path& path);
/// Validates, then commits through a temp file and rename.
void write_annotations(const AnnotationDoc& doc, const std::filesystem::path& path);

/// Annotation schema plus a per-point "score".
void write_predictions(const std::string& image, std::size_t width, std::size_t height,
                       std::span<const ScoredPoint> points, const std::filesystem::path& path);
std::vector<ScoredPoint> read_predictions(const std::filesystem::path& path);

/// Writes `contents` next to `path`, then renames over it.
void atomic_write(const std::filesystem::path& path, const std::string& contents);

struct SplitManifest {
  std::vector<std::string> train, val, test;

  /// Throws ValidationError when a filename appears twice.
  void validate() const;
  /// nullptr for an unknown split name.
  const std::vector<std::string>* split(std::string_view name) const;
  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

SplitManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path);

/// <root>/manifest.json, <root>/images/<file>, <root>/annotations/<stem>.json
struct DatasetLayout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path images_dir() const { return root / "images"; }
  std::filesystem::path annotations_dir() const { return root / "annotations"; }
  std::filesystem::path image(const std::string& filename) const { return images_dir() / filename; }
  std::filesystem::path annotation(const std::string& image_filename) const;
};

struct Sample {
  std::string filename;
  Image image;
  std::vector<Point> points;  // pixel coordinates
};

/// Loads every image and annotation of one split. Throws UsageError when the
/// split is not in the manifest.
std::vector<Sample> load_split(const DatasetLayout& layout, std::string_view split);

struct DatasetStats {
  std::size_t images = 0;
  std::size_t total_points = 0;
  std::size_t min_count = 0;
  std::size_t max_count = 0;
  double average = 0.0;
  CountHistogram histogram{};
};

DatasetStats dataset_stats(std::span<const AnnotationDoc> docs);
nlohmann::ordered_json to_json(const DatasetStats& stats);

struct TileOrigin {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

struct TilePlan {
  std::size_t crop = 256;
  std::size_t width = 0, height = 0;                 // original
  std::size_t padded_width = 0, padded_height = 0;   // multiples of crop
  std::vector<TileOrigin> origins;                   // row-major, x fastest
};

TilePlan plan_tiles(std::size_t width, std::size_t height, std::size_t crop = 256);

struct TilePrediction {
  TileOrigin origin;
  std::vector<ScoredPoint> points;  // tile-local, normalized to [0, 1]^2
};

struct MergedPredictions {
  std::vector<ScoredPoint> points;      // global pixels, above threshold, inside the image
  std::size_t above_threshold = 0;      // summed over tiles before clipping
  std::size_t dropped_in_padding = 0;   // above threshold but outside W x H
};

/// Scales tile-local points by the crop size, offsets them by the tile
/// origin, keeps scores strictly above `threshold` and drops points that
/// land in the padded margin. Throws UsageError for an origin not in `plan`.
MergedPredictions merge_tile_predictions(std::span<const TilePrediction> tiles, const TilePlan& plan, double threshold);

struct AugmentParams {
  double scale = 1.0;
  bool flip = false;
  std::size_t crop = 256;
  std::size_t crop_x = 0, crop_y = 0;
  // Geometry of the resized image before cropping (after any padding).
  std::size_t resized_width = 0, resized_height = 0;
};

struct AugmentRanges {
  double min_scale = 0.75;
  double max_scale = 1.25;
  double flip_probability = 0.5;
};

/// Draws resize factor, flip and crop window for a `width x height` input.
AugmentParams sample_augment(std::size_t width, std::size_t height, std::size_t crop, std::uint64_t seed,
                             const AugmentRanges& ranges = {});

struct Augmented {
  Image image;
  std::vector<Point> points;
};

/// Resize, then optional horizontal flip (x -> w - 1 - x), then crop. An
/// image smaller than the crop after resizing is reflect-padded first.
/// Points leaving the crop window are removed.
Augmented apply_augment(const Image& image, std::span<const Point> points, const AugmentParams& params);
Augmented augment(const Image& image, std::span<const Point> points, std::size_t crop, std::uint64_t seed,
                  const AugmentRanges& ranges = {});

/// Maps an augmented (crop-space) point back to the original image frame.
Point invert_augment(const Point& p, const AugmentParams& params);

}  // namespace iocf
