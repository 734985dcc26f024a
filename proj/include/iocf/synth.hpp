// SPDX-License-Identifier: Apache-2.0
//
// Procedural camouflage scenes: value-noise backgrounds with elliptical
// blobs whose fill blends toward the surrounding texture.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "iocf/dataset.hpp"
#include "iocf/geometry.hpp"
#include "iocf/image.hpp"

namespace iocf {

struct SceneSpec {
  std::size_t width = 256;
  std::size_t height = 256;
  std::size_t count = 20;
  double indiscernibility = 0.5;  // 0 high contrast, 1 texture-matched
  double radius_min = 4.0;
  double radius_max = 8.0;
  double min_separation = 4.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range or the blobs cannot fit.
  void validate() const;
};

struct Scene {
  Image image;
  std::vector<Point> points;  // blob centroids, pixel coordinates
  Image background;           // the texture before blobs were painted
  std::vector<std::vector<std::size_t>> blob_pixels;  // y * width + x per blob
};

/// Deterministic in `spec.seed`. Throws InfeasibleError when a blob cannot be
/// placed after 1000 attempts.
Scene generate_scene(const SceneSpec& spec);

struct SplitSizes {
  std::size_t train = 32;
  std::size_t val = 8;
  std::size_t test = 16;
};

struct SynthOptions {
  SceneSpec scene;  // count and seed are overridden per image
  std::size_t count_min = 0;
  std::size_t count_max = 20;
  SplitSizes sizes;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 picks the hardware concurrency
  bool png_previews = false;
};

/// Object counts for one split: evenly spread quantiles of
/// [count_min, count_max], shuffled.
std::vector<std::size_t> split_counts(std::size_t size, std::size_t count_min, std::size_t count_max,
                                      std::uint64_t seed);

/// Writes images/, annotations/ and manifest.json under `root`. Existing files
/// with the same names are replaced.
SplitManifest generate_split(const SynthOptions& options, const std::filesystem::path& root);

}  // namespace iocf
