// SPDX-License-Identifier: Apache-2.0
#include "iocf/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>

#include "iocf/error.hpp"

namespace iocf {

namespace fs = std::filesystem;

namespace {

constexpr int kPlacementAttempts = 1000;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// One channel of multi-octave value noise in roughly [0, 1].
std::vector<double> value_noise(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> field(w * h, 0.0);
  const double cells[] = {24.0, 10.0, 4.0};
  const double weights[] = {0.55, 0.3, 0.15};
  for (int o = 0; o < 3; ++o) {
    const double cell = cells[o];
    const std::size_t gw = static_cast<std::size_t>(static_cast<double>(w) / cell) + 2;
    const std::size_t gh = static_cast<std::size_t>(static_cast<double>(h) / cell) + 2;
    std::vector<double> lattice(gw * gh);
    for (double& v : lattice) v = u(rng);
    for (std::size_t y = 0; y < h; ++y) {
      const double fy = static_cast<double>(y) / cell;
      const auto y0 = static_cast<std::size_t>(fy);
      const double ty = smoothstep(fy - static_cast<double>(y0));
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x) / cell;
        const auto x0 = static_cast<std::size_t>(fx);
        const double tx = smoothstep(fx - static_cast<double>(x0));
        const double a = lattice[y0 * gw + x0], b = lattice[y0 * gw + x0 + 1];
        const double c = lattice[(y0 + 1) * gw + x0], d = lattice[(y0 + 1) * gw + x0 + 1];
        field[y * w + x] += weights[o] * ((a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty);
      }
    }
  }
  return field;
}

Image render_background(std::size_t w, std::size_t h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> base(0.3, 0.7);
  Image bg(w, h);
  for (std::size_t c = 0; c < 3; ++c) {
    const double b = base(rng);
    const auto noise = value_noise(w, h, rng);
    for (std::size_t i = 0; i < w * h; ++i) bg.rgb[i * 3 + c] = std::clamp(b + 0.3 * (noise[i] - 0.5), 0.0, 1.0);
  }
  return bg;
}

struct Blob {
  std::vector<std::size_t> pixels;
  Point centroid;
};

// Pixels whose centers fall inside the rotated ellipse, clipped to the image.
std::vector<std::size_t> ellipse_mask(double cx, double cy, double a, double b, double theta, std::size_t w,
                                      std::size_t h) {
  std::vector<std::size_t> out;
  const double r = std::max(a, b);
  const auto x_lo = static_cast<std::ptrdiff_t>(std::floor(cx - r)), x_hi = static_cast<std::ptrdiff_t>(std::ceil(cx + r));
  const auto y_lo = static_cast<std::ptrdiff_t>(std::floor(cy - r)), y_hi = static_cast<std::ptrdiff_t>(std::ceil(cy + r));
  const double ct = std::cos(theta), st = std::sin(theta);
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, y_lo); y <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1, y_hi); ++y) {
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, x_lo); x <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, x_hi); ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
      if (u * u + v * v <= 1.0) out.push_back(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x));
    }
  }
  return out;
}

void paint_blob(Image& image, const Image& bg, const std::vector<std::size_t>& pixels, double t, std::mt19937_64& rng,
                double reach) {
  const std::size_t w = bg.width, h = bg.height;
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const double phi = angle(rng);
  const auto ox = static_cast<std::ptrdiff_t>(std::lround(reach * std::cos(phi)));
  const auto oy = static_cast<std::ptrdiff_t>(std::lround(reach * std::sin(phi)));
  auto sample = [&](std::size_t idx, std::size_t c) {
    const auto x = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(idx % w) + ox, 0, static_cast<std::ptrdiff_t>(w) - 1);
    const auto y = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(idx / w) + oy, 0, static_cast<std::ptrdiff_t>(h) - 1);
    return bg.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
  };
  const auto n = static_cast<double>(pixels.size());
  for (std::size_t c = 0; c < 3; ++c) {
    double local = 0.0, patch = 0.0;
    for (auto idx : pixels) {
      local += bg.rgb[idx * 3 + c];
      patch += sample(idx, c);
    }
    local /= n;
    patch /= n;
    const double contrast = local > 0.5 ? local - 0.45 : local + 0.45;
    for (auto idx : pixels) {
      const double texture = sample(idx, c) - patch + local;
      image.rgb[idx * 3 + c] = std::clamp((1.0 - t) * contrast + t * texture, 0.0, 1.0);
    }
  }
}

}  // namespace

void SceneSpec::validate() const {
  if (width == 0 || height == 0) throw ConfigError("scene size must be positive");
  if (!(indiscernibility >= 0.0 && indiscernibility <= 1.0)) throw ConfigError("indiscernibility must lie in [0, 1]");
  if (!(radius_min > 0.0) || !(radius_max >= radius_min)) throw ConfigError("object radius range must satisfy 0 < min <= max");
  if (!(min_separation >= 1.0)) throw ConfigError("min_separation must be at least 1 pixel");
  const double area = static_cast<double>(count) * std::numbers::pi * radius_min * radius_min;
  if (area > 0.8 * static_cast<double>(width * height)) {
    throw ConfigError("cannot place " + std::to_string(count) + " objects of radius " + std::to_string(radius_min) +
                      " in a " + std::to_string(width) + "x" + std::to_string(height) + " scene");
  }
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t w = spec.width, h = spec.height;
  std::mt19937_64 rng(spec.seed);
  Scene scene;
  scene.background = quantize8(render_background(w, h, rng));
  scene.image = scene.background;

  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(w) - 1.0), uy(0.0, static_cast<double>(h) - 1.0);
  std::uniform_real_distribution<double> ur(spec.radius_min, spec.radius_max), ut(0.0, std::numbers::pi);
  std::vector<char> blocked(w * h, 0);
  std::vector<Blob> blobs;
  for (std::size_t k = 0; k < spec.count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double cx = ux(rng), cy = uy(rng), a = ur(rng), b = ur(rng), theta = ut(rng);
      auto mask = ellipse_mask(cx, cy, a, b, theta, w, h);
      if (mask.empty()) continue;
      if (std::any_of(mask.begin(), mask.end(), [&](std::size_t i) { return blocked[i] != 0; })) continue;
      double sx = 0.0, sy = 0.0;
      for (auto i : mask) {
        sx += static_cast<double>(i % w);
        sy += static_cast<double>(i / w);
      }
      const Point c{sx / static_cast<double>(mask.size()), sy / static_cast<double>(mask.size())};
      const bool crowded = std::any_of(blobs.begin(), blobs.end(), [&](const Blob& o) {
        return std::hypot(o.centroid.x - c.x, o.centroid.y - c.y) < spec.min_separation;
      });
      if (crowded) continue;
      // Block the mask plus a one-pixel ring so blobs never touch.
      for (auto i : mask) {
        const std::size_t x = i % w, y = i / w;
        for (std::size_t yy = (y == 0 ? 0 : y - 1); yy <= std::min(h - 1, y + 1); ++yy)
          for (std::size_t xx = (x == 0 ? 0 : x - 1); xx <= std::min(w - 1, x + 1); ++xx) blocked[yy * w + xx] = 1;
      }
      blobs.push_back({std::move(mask), c});
      placed = true;
    }
    if (!placed) {
      throw InfeasibleError("could not place object " + std::to_string(k + 1) + " of " + std::to_string(spec.count) +
                            " after " + std::to_string(kPlacementAttempts) + " attempts");
    }
  }

  for (const auto& blob : blobs) {
    paint_blob(scene.image, scene.background, blob.pixels, spec.indiscernibility, rng, 2.0 * spec.radius_max);
    scene.points.push_back(blob.centroid);
    scene.blob_pixels.push_back(blob.pixels);
  }
  scene.image = quantize8(scene.image);
  return scene;
}

std::vector<std::size_t> split_counts(std::size_t size, std::size_t count_min, std::size_t count_max,
                                      std::uint64_t seed) {
  if (count_max < count_min) throw ConfigError("count range is empty");
  const double span = static_cast<double>(count_max - count_min + 1);
  std::vector<std::size_t> out(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(size);
    out[i] = count_min + std::min(count_max - count_min, static_cast<std::size_t>(q * span));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

SplitManifest generate_split(const SynthOptions& options, const fs::path& root) {
  const SplitSizes& sizes = options.sizes;
  if (sizes.train == 0 || sizes.val == 0 || sizes.test == 0) throw ConfigError("every split needs at least one image");
  SceneSpec probe = options.scene;
  probe.count = options.count_max;
  probe.validate();

  const DatasetLayout layout{root};
  std::error_code ec;
  fs::create_directories(layout.images_dir(), ec);
  if (!ec) fs::create_directories(layout.annotations_dir(), ec);
  if (ec) throw IoError("cannot create dataset directory " + root.string() + ": " + ec.message());

  struct Job {
    std::string filename;
    std::size_t count;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  SplitManifest manifest;
  std::vector<std::string>* lists[] = {&manifest.train, &manifest.val, &manifest.test};
  const std::size_t split_sizes[] = {sizes.train, sizes.val, sizes.test};
  for (std::size_t s = 0; s < 3; ++s) {
    const auto counts = split_counts(split_sizes[s], options.count_min, options.count_max, mix_seed(options.seed, s));
    for (std::size_t i = 0; i < split_sizes[s]; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%05zu.ppm", jobs.size());
      lists[s]->push_back(name);
      jobs.push_back({name, counts[i], mix_seed(options.seed, 1000 + jobs.size())});
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        SceneSpec spec = options.scene;
        spec.count = jobs[j].count;
        spec.seed = jobs[j].seed;
        const Scene scene = generate_scene(spec);
        write_ppm(scene.image, layout.image(jobs[j].filename));
        if (options.png_previews) {
          write_png(scene.image, layout.images_dir() / (fs::path(jobs[j].filename).stem().string() + ".png"));
        }
        AnnotationDoc doc{jobs[j].filename, spec.width, spec.height, {}};
        for (const auto& p : scene.points) doc.points.push_back({p.x, p.y, false});
        write_annotations(doc, layout.annotation(jobs[j].filename));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  unsigned threads = options.threads != 0 ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  write_manifest(manifest, layout.manifest());
  return manifest;
}

}  // namespace iocf
