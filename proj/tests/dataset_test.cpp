// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "iocf/dataset.hpp"
#include "iocf/error.hpp"

using namespace iocf;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("iocf_dataset_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

AnnotationDoc sample_doc() {
  AnnotationDoc d;
  d.image = "scene_00001.ppm";
  d.width = 64;
  d.height = 48;
  d.points = {{1.5, 2.25, false}, {63.999, 0.0, true}, {0.1 + 0.2, 47.5, false}};
  return d;
}

Image gradient_image(std::size_t w, std::size_t h) {
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<double>(x) / static_cast<double>(w);
      img.at(x, y, 1) = static_cast<double>(y) / static_cast<double>(h);
      img.at(x, y, 2) = static_cast<double>((x * 7 + y * 3) % 11) / 10.0;
    }
  return img;
}

}  // namespace

TEST(AnnotationTest, RoundTripIsBitExact) {
  const auto dir = scratch_dir("roundtrip");
  const auto doc = sample_doc();
  write_annotations(doc, dir / "a.json");
  const auto back = read_annotations(dir / "a.json");
  EXPECT_EQ(back, doc);
  write_annotations(back, dir / "b.json");
  std::ifstream a(dir / "a.json"), b(dir / "b.json");
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  fs::remove_all(dir);
}

TEST(AnnotationTest, RandomRoundTrips) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    AnnotationDoc d;
    d.image = "img" + std::to_string(trial) + ".ppm";
    d.width = 1 + rng() % 500;
    d.height = 1 + rng() % 500;
    std::uniform_real_distribution<double> ux(0.0, static_cast<double>(d.width));
    std::uniform_real_distribution<double> uy(0.0, static_cast<double>(d.height));
    const std::size_t n = rng() % 40;
    for (std::size_t i = 0; i < n; ++i) d.points.push_back({ux(rng), uy(rng), (rng() & 1) != 0});
    const auto parsed = annotation_from_json(nlohmann::json::parse(canonical_json(d)));
    EXPECT_EQ(parsed, d);
  }
}

TEST(AnnotationTest, MissingDifficultDefaultsToFalse) {
  auto j = nlohmann::json::parse(R"({"image":"a.ppm","width":4,"height":4,"points":[{"x":1,"y":2}]})");
  const auto doc = annotation_from_json(j);
  ASSERT_EQ(doc.points.size(), 1u);
  EXPECT_FALSE(doc.points[0].difficult);
}

TEST(AnnotationTest, ValidationNamesField) {
  auto j = nlohmann::json::parse(
      R"({"image":"a.ppm","width":10,"height":10,"points":[{"x":1,"y":2},{"x":1,"y":2},{"x":10,"y":2}]})");
  try {
    annotation_from_json(j);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "points[2].x");
  }
  j["points"][2]["x"] = -0.5;
  EXPECT_THROW(annotation_from_json(j), ValidationError);
  j["points"][2]["x"] = 3;
  j["points"][1]["y"] = 10.0;
  try {
    annotation_from_json(j);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "points[1].y");
  }
  j["points"][1]["y"] = 1;
  j["width"] = 0;
  EXPECT_THROW(annotation_from_json(j), ValidationError);
}

TEST(AnnotationTest, StructuralErrors) {
  EXPECT_THROW(annotation_from_json(nlohmann::json::array()), ParseError);
  EXPECT_THROW(annotation_from_json(nlohmann::json::parse(R"({"image":"a","width":4,"height":4})")), ParseError);
  EXPECT_THROW(annotation_from_json(nlohmann::json::parse(R"({"image":"a","width":4,"height":4,"points":[{"x":"1","y":0}]})")),
               ParseError);
  const auto dir = scratch_dir("malformed");
  {
    std::ofstream out(dir / "bad.json");
    out << "{\n  \"image\": \"a\",\n  \"width\": 4,\n  oops\n}\n";
  }
  try {
    read_annotations(dir / "bad.json");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.json:4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(read_annotations(dir / "absent.json"), IoError);
  fs::remove_all(dir);
}

TEST(AnnotationTest, WriteRejectsInvalidAndLeavesFileIntact) {
  const auto dir = scratch_dir("reject");
  auto doc = sample_doc();
  write_annotations(doc, dir / "a.json");
  auto bad = doc;
  bad.points.push_back({100.0, 1.0, false});
  EXPECT_THROW(write_annotations(bad, dir / "a.json"), ValidationError);
  EXPECT_EQ(read_annotations(dir / "a.json"), doc);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  EXPECT_EQ(files, 1u);
  fs::remove_all(dir);
}

TEST(AnnotationTest, ConcurrentWritersNeverTearTheFile) {
  const auto dir = scratch_dir("concurrent");
  std::vector<AnnotationDoc> docs;
  for (int t = 0; t < 4; ++t) {
    auto d = sample_doc();
    d.points.resize(1 + t);
    for (auto& p : d.points) p.x = t;
    docs.push_back(d);
  }
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int k = 0; k < 25; ++k) write_annotations(docs[t], dir / "shared.json");
    });
  }
  for (auto& th : threads) th.join();
  const auto final_doc = read_annotations(dir / "shared.json");
  EXPECT_NE(std::find(docs.begin(), docs.end(), final_doc), docs.end());
  fs::remove_all(dir);
}

TEST(PredictionsTest, RoundTrip) {
  const auto dir = scratch_dir("pred");
  std::vector<ScoredPoint> pts{{1.0, 2.0, 0.9}, {3.5, 4.25, 0.36}};
  write_predictions("x.ppm", 10, 10, pts, dir / "p.json");
  EXPECT_EQ(read_predictions(dir / "p.json"), pts);
  fs::remove_all(dir);
}

TEST(ManifestTest, RoundTripAndDisjointness) {
  const auto dir = scratch_dir("manifest");
  SplitManifest m{{"a.ppm", "b.ppm"}, {"c.ppm"}, {"d.ppm"}};
  write_manifest(m, dir / "manifest.json");
  EXPECT_EQ(read_manifest(dir / "manifest.json"), m);
  EXPECT_EQ(m.split("val")->front(), "c.ppm");
  EXPECT_EQ(m.split("holdout"), nullptr);
  SplitManifest dup{{"a.ppm"}, {"a.ppm"}, {}};
  EXPECT_THROW(dup.validate(), ValidationError);
  fs::remove_all(dir);
}

TEST(LayoutTest, LoadSplit) {
  const auto dir = scratch_dir("layout");
  DatasetLayout layout{dir};
  fs::create_directories(layout.images_dir());
  fs::create_directories(layout.annotations_dir());
  const Image img = quantize8(gradient_image(12, 8));
  write_ppm(img, layout.image("s1.ppm"));
  AnnotationDoc doc{"s1.ppm", 12, 8, {{2, 3, false}, {5, 5, true}}};
  write_annotations(doc, layout.annotation("s1.ppm"));
  EXPECT_EQ(layout.annotation("s1.ppm"), layout.annotations_dir() / "s1.json");
  write_manifest({{"s1.ppm"}, {}, {}}, layout.manifest());
  const auto train = load_split(layout, "train");
  ASSERT_EQ(train.size(), 1u);
  EXPECT_EQ(train[0].image, img);
  EXPECT_EQ(train[0].points, doc.centers());
  EXPECT_TRUE(load_split(layout, "val").empty());
  EXPECT_THROW(load_split(layout, "holdout"), UsageError);
  fs::remove_all(dir);
}

TEST(StatsTest, Summary) {
  std::vector<AnnotationDoc> docs(3);
  const std::size_t counts[] = {10, 60, 250};
  for (std::size_t i = 0; i < 3; ++i) {
    docs[i] = {"i.ppm", 300, 300, {}};
    for (std::size_t k = 0; k < counts[i]; ++k) docs[i].points.push_back({static_cast<double>(k), 1.0, false});
  }
  const auto s = dataset_stats(docs);
  EXPECT_EQ(s.images, 3u);
  EXPECT_EQ(s.total_points, 320u);
  EXPECT_EQ(s.min_count, 10u);
  EXPECT_EQ(s.max_count, 250u);
  EXPECT_NEAR(s.average, 320.0 / 3.0, 1e-12);
  EXPECT_EQ(s.histogram, (CountHistogram{1, 1, 0, 1}));
  EXPECT_EQ(to_json(s)["histogram"][">200"].get<int>(), 1);
  EXPECT_THROW(dataset_stats({}), UsageError);
}

TEST(TilingTest, Plan) {
  const auto p = plan_tiles(600, 400);
  EXPECT_EQ(p.padded_width, 768u);
  EXPECT_EQ(p.padded_height, 512u);
  ASSERT_EQ(p.origins.size(), 6u);
  EXPECT_EQ(p.origins[1], (TileOrigin{256, 0}));
  EXPECT_EQ(p.origins[3], (TileOrigin{0, 256}));
  const auto exact = plan_tiles(256, 256);
  EXPECT_EQ(exact.origins.size(), 1u);
  EXPECT_EQ(exact.padded_width, 256u);
  EXPECT_THROW(plan_tiles(0, 10), UsageError);
}

TEST(TilingTest, MergeOffsetsAndThreshold) {
  const auto plan = plan_tiles(600, 400);
  std::vector<TilePrediction> tiles{{{256, 0}, {{10.0 / 256, 10.0 / 256, 0.9}, {0.5, 0.5, 0.2}}},
                                    {{512, 256}, {{0.5, 0.5, 0.8}, {0.1, 0.1, 0.7}}}};
  const auto merged = merge_tile_predictions(tiles, plan, 0.35);
  EXPECT_EQ(merged.above_threshold, 3u);
  // (512 + 128, 256 + 128) lies beyond 600 x 400.
  EXPECT_EQ(merged.dropped_in_padding, 1u);
  ASSERT_EQ(merged.points.size(), 2u);
  EXPECT_NEAR(merged.points[0].x, 266.0, 1e-12);
  EXPECT_NEAR(merged.points[0].y, 10.0, 1e-12);
  EXPECT_NEAR(merged.points[1].x, 512.0 + 25.6, 1e-9);
  std::vector<TilePrediction> stray{{{100, 0}, {}}};
  EXPECT_THROW(merge_tile_predictions(stray, plan, 0.35), UsageError);
}

TEST(AugmentTest, IdentityParamsKeepEverything) {
  const Image img = gradient_image(32, 32);
  std::vector<Point> pts{{3, 4}, {31, 0}};
  AugmentParams p;
  p.crop = 32;
  p.resized_width = p.resized_height = 32;
  const auto out = apply_augment(img, pts, p);
  EXPECT_EQ(out.image, img);
  EXPECT_EQ(out.points, pts);
}

TEST(AugmentTest, FlipMapsColumns) {
  const Image img = gradient_image(16, 8);
  std::vector<Point> pts{{2, 3}};
  AugmentParams p;
  p.crop = 8;
  p.flip = true;
  p.crop_x = 8;
  p.resized_width = 16;
  p.resized_height = 8;
  const auto out = apply_augment(img, pts, p);
  // x -> 15 - 2 = 13, then minus crop origin 8.
  ASSERT_EQ(out.points.size(), 1u);
  EXPECT_EQ(out.points[0], (Point{5, 3}));
  EXPECT_EQ(out.image.at(5, 3, 0), img.at(2, 3, 0));
}

TEST(AugmentTest, PointsStayInsideAndInvert) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t w = 40 + rng() % 60, h = 40 + rng() % 60;
    const Image img = gradient_image(w, h);
    std::vector<Point> pts;
    std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w) - 1.0), uy(0.0, static_cast<double>(h) - 1.0);
    for (int i = 0; i < 30; ++i) pts.push_back({ux(rng), uy(rng)});
    const std::size_t crop = 32 + 8 * (rng() % 4);
    const auto params = sample_augment(w, h, crop, rng());
    EXPECT_GE(params.scale, 0.75);
    EXPECT_LE(params.scale, 1.25);
    const auto out = apply_augment(img, pts, params);
    EXPECT_EQ(out.image.width, crop);
    EXPECT_EQ(out.image.height, crop);
    for (const auto& q : out.points) {
      EXPECT_GE(q.x, 0.0);
      EXPECT_LT(q.x, static_cast<double>(crop));
      EXPECT_GE(q.y, 0.0);
      EXPECT_LT(q.y, static_cast<double>(crop));
      const Point back = invert_augment(q, params);
      const bool found = std::any_of(pts.begin(), pts.end(), [&](const Point& o) {
        return std::abs(o.x - back.x) < 1e-9 && std::abs(o.y - back.y) < 1e-9;
      });
      EXPECT_TRUE(found);
    }
  }
}

TEST(AugmentTest, SmallImageIsReflectPadded) {
  const Image img = gradient_image(20, 20);
  const auto out = augment(img, std::vector<Point>{{5, 5}}, 64, 3, {1.0, 1.0, 0.0});
  EXPECT_EQ(out.image.width, 64u);
  EXPECT_EQ(out.image.at(20, 0, 0), img.at(18, 0, 0));
  ASSERT_EQ(out.points.size(), 1u);
  EXPECT_EQ(out.points[0], (Point{5, 5}));
}

TEST(AugmentTest, Deterministic) {
  const Image img = gradient_image(50, 50);
  std::vector<Point> pts{{10, 10}, {40, 30}};
  const auto a = augment(img, pts, 32, 99);
  const auto b = augment(img, pts, 32, 99);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.points, b.points);
}
