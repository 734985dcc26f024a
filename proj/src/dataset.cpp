// SPDX-License-Identifier: Apache-2.0
#include "iocf/dataset.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "iocf/error.hpp"

namespace iocf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json parse_document(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw ParseError(origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

const json& require_field(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + (path.empty() ? "" : ".") + key + ": missing field");
  return *it;
}

std::size_t require_extent(const json& obj, const char* key) {
  const json& v = require_field(obj, key, "");
  if (!v.is_number_integer() || v.get<std::int64_t>() <= 0) {
    throw ValidationError(key, "must be a positive integer");
  }
  return v.get<std::size_t>();
}

double require_number(const json& obj, const char* key, const std::string& path) {
  const json& v = require_field(obj, key, path);
  if (!v.is_number()) throw ParseError(path + "." + key + ": expected a number");
  return v.get<double>();
}

std::vector<std::string> require_string_list(const json& obj, const char* key) {
  const json& v = require_field(obj, key, "");
  if (!v.is_array()) throw ParseError(std::string(key) + ": expected an array of filenames");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ParseError(std::string(key) + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

}  // namespace

void AnnotationDoc::validate() const {
  if (image.empty()) throw ValidationError("image", "must be a non-empty filename");
  if (width == 0) throw ValidationError("width", "must be positive");
  if (height == 0) throw ValidationError("height", "must be positive");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string base = "points[" + std::to_string(i) + "]";
    const auto& p = points[i];
    if (!std::isfinite(p.x) || p.x < 0.0 || p.x >= static_cast<double>(width)) {
      throw ValidationError(base + ".x", "must lie in [0, " + std::to_string(width) + ")");
    }
    if (!std::isfinite(p.y) || p.y < 0.0 || p.y >= static_cast<double>(height)) {
      throw ValidationError(base + ".y", "must lie in [0, " + std::to_string(height) + ")");
    }
  }
}

std::vector<Point> AnnotationDoc::centers() const {
  std::vector<Point> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({p.x, p.y});
  return out;
}

nlohmann::ordered_json to_json(const AnnotationDoc& doc) {
  nlohmann::ordered_json j;
  j["image"] = doc.image;
  j["width"] = doc.width;
  j["height"] = doc.height;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : doc.points) {
    j["points"].push_back({{"x", p.x}, {"y", p.y}, {"difficult", p.difficult}});
  }
  return j;
}

AnnotationDoc annotation_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("document: expected a JSON object");
  AnnotationDoc doc;
  const json& image = require_field(j, "image", "");
  if (!image.is_string()) throw ParseError("image: expected a string");
  doc.image = image.get<std::string>();
  doc.width = require_extent(j, "width");
  doc.height = require_extent(j, "height");
  const json& points = require_field(j, "points", "");
  if (!points.is_array()) throw ParseError("points: expected an array");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string path = "points[" + std::to_string(i) + "]";
    const json& p = points[i];
    if (!p.is_object()) throw ParseError(path + ": expected an object");
    AnnotatedPoint ap;
    ap.x = require_number(p, "x", path);
    ap.y = require_number(p, "y", path);
    if (auto it = p.find("difficult"); it != p.end()) {
      if (!it->is_boolean()) throw ParseError(path + ".difficult: expected a boolean");
      ap.difficult = it->get<bool>();
    }
    doc.points.push_back(ap);
  }
  doc.validate();
  return doc;
}

std::string canonical_json(const AnnotationDoc& doc) { return to_json(doc).dump(2) + "\n"; }

AnnotationDoc read_annotations(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return annotation_from_json(parse_document(text, path.string()));
  } catch (const ValidationError& e) {
    throw ValidationError(e.field(), path.string() + ": " + e.what());
  } catch (const ParseError& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw ParseError(path.string() + ": " + what);
  }
}

void atomic_write(const fs::path& path, const std::string& contents) {
  static std::atomic<std::uint64_t> counter{0};
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot commit " + path.string() + ": " + ec.message());
  }
}

void write_annotations(const AnnotationDoc& doc, const fs::path& path) {
  doc.validate();
  atomic_write(path, canonical_json(doc));
}

void write_predictions(const std::string& image, std::size_t width, std::size_t height,
                       std::span<const ScoredPoint> points, const fs::path& path) {
  nlohmann::ordered_json j;
  j["image"] = image;
  j["width"] = width;
  j["height"] = height;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : points) {
    j["points"].push_back({{"x", p.x}, {"y", p.y}, {"difficult", false}, {"score", p.score}});
  }
  atomic_write(path, j.dump(2) + "\n");
}

std::vector<ScoredPoint> read_predictions(const fs::path& path) {
  const json j = parse_document(read_file(path), path.string());
  const AnnotationDoc doc = annotation_from_json(j);
  std::vector<ScoredPoint> out;
  for (std::size_t i = 0; i < doc.points.size(); ++i) {
    const std::string where = "points[" + std::to_string(i) + "]";
    out.push_back({doc.points[i].x, doc.points[i].y, require_number(j["points"][i], "score", where)});
  }
  return out;
}

void SplitManifest::validate() const {
  std::set<std::string> seen;
  for (const auto* list : {&train, &val, &test}) {
    for (const auto& name : *list) {
      if (!seen.insert(name).second) throw ValidationError(name, "listed in more than one split entry");
    }
  }
}

const std::vector<std::string>* SplitManifest::split(std::string_view name) const {
  if (name == "train") return &train;
  if (name == "val") return &val;
  if (name == "test") return &test;
  return nullptr;
}

SplitManifest read_manifest(const fs::path& path) {
  const json j = parse_document(read_file(path), path.string());
  if (!j.is_object()) throw ParseError(path.string() + ": expected a JSON object");
  SplitManifest m;
  m.train = require_string_list(j, "train");
  m.val = require_string_list(j, "val");
  m.test = require_string_list(j, "test");
  m.validate();
  return m;
}

void write_manifest(const SplitManifest& manifest, const fs::path& path) {
  manifest.validate();
  nlohmann::ordered_json j;
  j["train"] = manifest.train;
  j["val"] = manifest.val;
  j["test"] = manifest.test;
  atomic_write(path, j.dump(2) + "\n");
}

fs::path DatasetLayout::annotation(const std::string& image_filename) const {
  return annotations_dir() / (fs::path(image_filename).stem().string() + ".json");
}

std::vector<Sample> load_split(const DatasetLayout& layout, std::string_view split) {
  const SplitManifest manifest = read_manifest(layout.manifest());
  const auto* names = manifest.split(split);
  if (names == nullptr) throw UsageError("unknown split '" + std::string(split) + "' (expected train, val or test)");
  std::vector<Sample> out;
  out.reserve(names->size());
  for (const auto& name : *names) {
    Sample s;
    s.filename = name;
    s.image = read_ppm(layout.image(name));
    const AnnotationDoc doc = read_annotations(layout.annotation(name));
    if (doc.width != s.image.width || doc.height != s.image.height) {
      throw ValidationError("width", name + ": annotation size differs from the image");
    }
    s.points = doc.centers();
    out.push_back(std::move(s));
  }
  return out;
}

DatasetStats dataset_stats(std::span<const AnnotationDoc> docs) {
  if (docs.empty()) throw UsageError("dataset_stats: no documents");
  DatasetStats s;
  s.images = docs.size();
  s.min_count = docs.front().points.size();
  std::vector<std::size_t> counts;
  for (const auto& d : docs) {
    const std::size_t c = d.points.size();
    counts.push_back(c);
    s.total_points += c;
    s.min_count = std::min(s.min_count, c);
    s.max_count = std::max(s.max_count, c);
  }
  s.average = static_cast<double>(s.total_points) / static_cast<double>(s.images);
  s.histogram = histogram_counts(counts);
  return s;
}

nlohmann::ordered_json to_json(const DatasetStats& s) {
  nlohmann::ordered_json j;
  j["images"] = s.images;
  j["total"] = s.total_points;
  j["min"] = s.min_count;
  j["average"] = s.average;
  j["max"] = s.max_count;
  j["histogram"] = {{"0-50", s.histogram[0]}, {"51-100", s.histogram[1]}, {"101-200", s.histogram[2]},
                    {">200", s.histogram[3]}};
  return j;
}

TilePlan plan_tiles(std::size_t width, std::size_t height, std::size_t crop) {
  if (width == 0 || height == 0) throw UsageError("plan_tiles: empty image");
  if (crop == 0) throw UsageError("plan_tiles: crop must be positive");
  TilePlan plan;
  plan.crop = crop;
  plan.width = width;
  plan.height = height;
  const std::size_t cols = (width + crop - 1) / crop;
  const std::size_t rows = (height + crop - 1) / crop;
  plan.padded_width = cols * crop;
  plan.padded_height = rows * crop;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) plan.origins.push_back({c * crop, r * crop});
  return plan;
}

MergedPredictions merge_tile_predictions(std::span<const TilePrediction> tiles, const TilePlan& plan,
                                         double threshold) {
  MergedPredictions out;
  const auto crop = static_cast<double>(plan.crop);
  for (const auto& tile : tiles) {
    if (std::find(plan.origins.begin(), plan.origins.end(), tile.origin) == plan.origins.end()) {
      throw UsageError("tile origin (" + std::to_string(tile.origin.x) + ", " + std::to_string(tile.origin.y) +
                       ") is not part of the plan");
    }
    for (const auto& p : tile.points) {
      if (!(p.score > threshold)) continue;
      ++out.above_threshold;
      const double gx = static_cast<double>(tile.origin.x) + p.x * crop;
      const double gy = static_cast<double>(tile.origin.y) + p.y * crop;
      if (gx >= static_cast<double>(plan.width) || gy >= static_cast<double>(plan.height)) {
        ++out.dropped_in_padding;
        continue;
      }
      out.points.push_back({gx, gy, p.score});
    }
  }
  return out;
}

AugmentParams sample_augment(std::size_t width, std::size_t height, std::size_t crop, std::uint64_t seed,
                             const AugmentRanges& ranges) {
  std::mt19937_64 rng(seed);
  AugmentParams p;
  p.crop = crop;
  p.scale = std::uniform_real_distribution<double>(ranges.min_scale, ranges.max_scale)(rng);
  p.flip = std::bernoulli_distribution(ranges.flip_probability)(rng);
  p.resized_width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(width * p.scale)));
  p.resized_height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(height * p.scale)));
  const std::size_t span_x = std::max(p.resized_width, crop) - crop;
  const std::size_t span_y = std::max(p.resized_height, crop) - crop;
  p.crop_x = std::uniform_int_distribution<std::size_t>(0, span_x)(rng);
  p.crop_y = std::uniform_int_distribution<std::size_t>(0, span_y)(rng);
  return p;
}

Augmented apply_augment(const Image& image, std::span<const Point> points, const AugmentParams& params) {
  Image img = params.scale == 1.0 ? image : resize(image, params.scale);
  const double rw = static_cast<double>(img.width), rh = static_cast<double>(img.height);
  if (params.flip) img = flip_horizontal(img);
  if (img.width < params.crop || img.height < params.crop) {
    img = pad_reflect(img, std::max(img.width, params.crop), std::max(img.height, params.crop));
  }
  Augmented out;
  out.image = crop(img, params.crop_x, params.crop_y, params.crop, params.crop);
  const auto x0 = static_cast<double>(params.crop_x), y0 = static_cast<double>(params.crop_y);
  const auto side = static_cast<double>(params.crop);
  for (const auto& p : points) {
    double x = p.x * params.scale, y = p.y * params.scale;
    if (x >= rw || y >= rh) continue;
    if (params.flip) x = rw - 1.0 - x;
    if (x < x0 || x >= x0 + side || y < y0 || y >= y0 + side) continue;
    out.points.push_back({x - x0, y - y0});
  }
  return out;
}

Augmented augment(const Image& image, std::span<const Point> points, std::size_t crop, std::uint64_t seed,
                  const AugmentRanges& ranges) {
  return apply_augment(image, points, sample_augment(image.width, image.height, crop, seed, ranges));
}

Point invert_augment(const Point& p, const AugmentParams& params) {
  double x = p.x + static_cast<double>(params.crop_x);
  const double y = p.y + static_cast<double>(params.crop_y);
  if (params.flip) x = static_cast<double>(params.resized_width) - 1.0 - x;
  return {x / params.scale, y / params.scale};
}

}  // namespace iocf
