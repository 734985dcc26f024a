// SPDX-License-Identifier: Apache-2.0
#include "iocf/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iocf/error.hpp"

namespace iocf {

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void append_chunk(std::string& out, const char* type, const std::string& payload) {
  append_be32(out, static_cast<std::uint32_t>(payload.size()));
  std::string body(type, 4);
  body += payload;
  out += body;
  append_be32(out, static_cast<std::uint32_t>(
                       crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

Tensor Image::to_tensor() const { return Tensor::from_data({height, width, 3}, rgb); }

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  auto next_token = [&in, &path]() {
    std::string tok;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    if (tok.empty()) throw ParseError(path.string() + ": truncated PPM header");
    return tok;
  };
  if (next_token() != "P6") throw ParseError(path.string() + ": only binary PPM (P6) is supported");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token());
    h = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::logic_error&) {
    throw ParseError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw ParseError(path.string() + ": unsupported PPM geometry or maxval");
  }
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw ParseError(path.string() + ": truncated pixel data");
  Image img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / static_cast<double>(maxval);
  return img;
}

void write_ppm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::string bytes(image.rgb.size(), '\0');
  std::transform(image.rgb.begin(), image.rgb.end(), bytes.begin(), [](double v) { return static_cast<char>(to_byte(v)); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

std::string encode_png(const Image& image) {
  std::string raw;
  raw.reserve(image.height * (image.width * 3 + 1));
  for (std::size_t y = 0; y < image.height; ++y) {
    raw.push_back('\0');  // filter: none
    for (std::size_t i = 0; i < image.width * 3; ++i) raw.push_back(static_cast<char>(to_byte(image.rgb[y * image.width * 3 + i])));
  }
  uLongf packed_size = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("png compression failed");
  }
  packed.resize(packed_size);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string header;
  append_be32(header, static_cast<std::uint32_t>(image.width));
  append_be32(header, static_cast<std::uint32_t>(image.height));
  header += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
  append_chunk(png, "IHDR", header);
  append_chunk(png, "IDAT", packed);
  append_chunk(png, "IEND", "");
  return png;
}

void write_png(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  const std::string bytes = encode_png(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Image quantize8(const Image& image) {
  Image out = image;
  for (double& v : out.rgb) v = to_byte(v) / 255.0;
  return out;
}

Image pad_reflect(const Image& image, std::size_t width, std::size_t height) {
  if (width < image.width || height < image.height) throw UsageError("pad_reflect cannot shrink an image");
  Image out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y), image.height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = reflect_index(static_cast<std::ptrdiff_t>(x), image.width);
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return out;
}

Image resize(const Image& image, double scale) {
  if (!(scale > 0.0)) throw UsageError("resize scale must be positive");
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(image.width * scale)));
  const auto h = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(image.height * scale)));
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const double sy = std::clamp(y / scale, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double sx = std::clamp(x / scale, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(x0, y0, c) * (1 - fx) + image.at(x1, y0, c) * fx;
        const double bottom = image.at(x0, y1, c) * (1 - fx) + image.at(x1, y1, c) * fx;
        out.at(x, y, c) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(image.width - 1 - x, y, c) = image.at(x, y, c);
  return out;
}

Image crop(const Image& image, std::size_t x0, std::size_t y0, std::size_t width, std::size_t height) {
  if (x0 + width > image.width || y0 + height > image.height) throw UsageError("crop window exceeds image");
  Image out(width, height);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x0 + x, y0 + y, c);
  return out;
}

}  // namespace iocf
