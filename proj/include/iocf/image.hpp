// SPDX-License-Identifier: Apache-2.0
//
// RGB images with channel values in [0, 1], stored row-major HWC. Pixel
// (x, y) has its center at coordinate (x, y).

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "iocf/tensor.hpp"

namespace iocf {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), rgb(w * h * 3, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }

  /// [height x width x 3] without gradient.
  Tensor to_tensor() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Binary PPM (P6, maxval <= 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);
/// 8-bit RGB PNG, zlib-compressed.
std::string encode_png(const Image& image);
void write_png(const Image& image, const std::filesystem::path& path);
/// Rounds every channel to the nearest 1/255 step, as a PPM round trip would.
Image quantize8(const Image& image);

/// Mirror-pads on the right and bottom to the requested size (reflection
/// without repeating the edge pixel; repeated as needed for large pads).
Image pad_reflect(const Image& image, std::size_t width, std::size_t height);
/// Bilinear resampling by `scale`; output pixel (x, y) samples the input at
/// (x / scale, y / scale). Output size is round(size * scale), at least 1.
Image resize(const Image& image, double scale);
Image flip_horizontal(const Image& image);
Image crop(const Image& image, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height);

}  // namespace iocf
