// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "iocf/checkpoint.hpp"
#include "iocf/error.hpp"
#include "iocf/infer.hpp"
#include "iocf/ops.hpp"
#include "iocf/optim.hpp"
#include "iocf/synth.hpp"
#include "iocf/train.hpp"

using namespace iocf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("iocf_train_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<Sample> tiny_scenes(std::size_t n, std::size_t side, std::size_t max_count) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec s;
    s.width = s.height = side;
    s.count = i % (max_count + 1);
    s.radius_min = 2;
    s.radius_max = 4;
    s.min_separation = 5;
    s.seed = 700 + i;
    auto scene = generate_scene(s);
    out.push_back({"scene" + std::to_string(i) + ".ppm", scene.image, scene.points});
  }
  return out;
}

TrainConfig small_config(Variant v) {
  TrainConfig c = desk_train_config();
  c.model.variant = v;
  c.model.queries = 16;
  c.model.channels = 16;
  c.model.encoder_channels = 16;
  c.model.density_channels = 16;
  c.model.ffn_hidden = 16;
  c.model.heads = 2;
  c.model.decoder_layers = 1;
  c.crop = 32;
  c.batch = 2;
  c.steps = 3;
  c.augment = false;
  return c;
}

// Returns a fixed point set per tile regardless of content.
class FixedPredictor final : public Predictor {
 public:
  explicit FixedPredictor(std::vector<ScoredPoint> pts) : pts_(std::move(pts)) {}
  TileOutput predict_tile(const Image&) const override { return {pts_, std::nullopt}; }
  bool counts_by_density() const override { return false; }

 private:
  std::vector<ScoredPoint> pts_;
};

// Perfect oracle: emits the ground-truth points of whichever sample it is
// handed, looked up by image identity.
class OraclePredictor final : public Predictor {
 public:
  OraclePredictor(const std::vector<Sample>& samples, std::size_t crop) : samples_(&samples), crop_(crop) {}
  TileOutput predict_tile(const Image& tile) const override {
    TileOutput out;
    for (const auto& s : *samples_) {
      if (s.image.width == tile.width && s.image.height == tile.height && s.image == tile) {
        for (const auto& p : s.points) out.points.push_back({p.x / crop_, p.y / crop_, 0.9});
      }
    }
    return out;
  }
  bool counts_by_density() const override { return false; }

 private:
  const std::vector<Sample>* samples_;
  double crop_;
};

}  // namespace

TEST(AdamTest, MatchesHandComputedSteps) {
  nn::ParameterStore store;
  Tensor w = store.add("w", Tensor::from_data({2}, {1.0, -2.0}));
  const Tensor c = Tensor::from_data({2}, {0.5, -3.0});
  AdamOptions opt{0.1, 0.9, 0.999, 1e-8, 0.01};
  AdamW adam(store, opt);
  std::vector<double> theta{1.0, -2.0}, m(2, 0.0), v(2, 0.0);
  for (int t = 1; t <= 3; ++t) {
    store.zero_grad();
    backward(ops::sum(ops::mul(w, c)));
    adam.step();
    for (int i = 0; i < 2; ++i) {
      const double g = c.data()[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      theta[i] -= 0.1 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * theta[i]);
    }
  }
  EXPECT_NEAR(w.data()[0], theta[0], 1e-12);
  EXPECT_NEAR(w.data()[1], theta[1], 1e-12);
  EXPECT_EQ(adam.steps_taken(), 3u);
}

TEST(CheckpointTest, RoundTripRestoresOutputs) {
  const auto dir = scratch("ckpt");
  TrainConfig cfg = small_config(Variant::kDualDete);
  IocFormer model(cfg.model, 5);
  save_checkpoint(snapshot(model, {{"note", "x"}}), dir / "m.ckpt");
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.model, cfg.model);
  EXPECT_EQ(back.meta["note"], "x");
  IocFormer restored = restore_model(back);
  const Image img = tiny_scenes(1, 32, 3)[0].image;
  NoGradGuard ng;
  const auto a = model.forward(img.to_tensor()), b = restored.forward(img.to_tensor());
  EXPECT_TRUE(std::equal(a.scores->data().begin(), a.scores->data().end(), b.scores->data().begin()));
  EXPECT_TRUE(std::equal(a.points->data().begin(), a.points->data().end(), b.points->data().begin()));
  fs::remove_all(dir);
}

TEST(CheckpointTest, RejectsCorruptAndMismatched) {
  const auto dir = scratch("ckpt_bad");
  TrainConfig cfg = small_config(Variant::kDualTte);
  IocFormer model(cfg.model, 5);
  Checkpoint c = snapshot(model);
  save_checkpoint(c, dir / "m.ckpt");
  {
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "trunc.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    std::ofstream(dir / "junk.ckpt", std::ios::binary) << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), ParseError);
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), ParseError);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
  Checkpoint wrong = c;
  wrong.model.variant = Variant::kDualDete;
  EXPECT_THROW(restore_model(wrong), ParseError);
  wrong = c;
  wrong.tensors[0].shape.push_back(1);
  EXPECT_THROW(restore_model(wrong), ParseError);
  fs::remove_all(dir);
}

TEST(InferTest, PerfectPredictorGivesZeroMetrics) {
  const auto samples = tiny_scenes(6, 64, 5);
  const OraclePredictor oracle(samples, 64);
  const auto ev = evaluate_samples(oracle, samples, 64, 0.35);
  EXPECT_EQ(ev.report.mae, 0.0);
  EXPECT_EQ(ev.report.mse, 0.0);
  EXPECT_EQ(ev.report.nae, 0.0);
  std::size_t bins = 0;
  for (auto b : ev.report.histogram) bins += b;
  EXPECT_EQ(bins, samples.size());
}

TEST(InferTest, TiledCountIsAdditive) {
  const Image img(300, 300, 0.5);
  const std::vector<ScoredPoint> pts{{0.1, 0.1, 0.9}, {0.5, 0.5, 0.2}, {0.9, 0.9, 0.8}, {0.2, 0.95, 0.4}};
  const FixedPredictor pred(pts);
  const auto r = predict_image(pred, img, 256, 0.35);
  EXPECT_EQ(r.plan.origins.size(), 4u);
  std::size_t above = 0, dropped = 0;
  for (const auto& o : r.plan.origins) {
    for (const auto& p : pts) {
      if (p.score <= 0.35) continue;
      ++above;
      if (o.x + p.x * 256 >= 300 || o.y + p.y * 256 >= 300) ++dropped;
    }
  }
  EXPECT_EQ(r.merged.above_threshold, above);
  EXPECT_EQ(r.merged.dropped_in_padding, dropped);
  EXPECT_EQ(r.count, static_cast<double>(above - dropped));
  EXPECT_EQ(predict_image(pred, img, 256, 1.0).count, 0.0);
}

TEST(InferTest, DensityOnlyCountsDensity) {
  TrainConfig cfg = small_config(Variant::kDensityOnly);
  IocFormer model(cfg.model, 1);
  const ModelPredictor pred(model);
  EXPECT_TRUE(pred.counts_by_density());
  const Image img = tiny_scenes(1, 32, 2)[0].image;
  const auto r = predict_image(pred, img, 32, 0.35);
  NoGradGuard ng;
  EXPECT_NEAR(r.count, density_count(*model.forward(img.to_tensor()).density), 1e-9);
  EXPECT_TRUE(r.merged.points.empty());
}

TEST(InferTest, ModelHandlesOddSizes) {
  TrainConfig cfg = small_config(Variant::kDualDete);
  IocFormer model(cfg.model, 1);
  const ModelPredictor pred(model);
  for (std::size_t side : {17u, 32u, 45u, 70u}) {
    const auto r = predict_image(pred, Image(side, side + 3, 0.3), 32, 0.35);
    for (const auto& p : r.merged.points) {
      EXPECT_LT(p.x, static_cast<double>(side));
      EXPECT_LT(p.y, static_cast<double>(side + 3));
    }
  }
}

TEST(TrainTest, DeterministicGivenSeed) {
  const auto samples = tiny_scenes(4, 32, 3);
  TrainConfig cfg = small_config(Variant::kDualDete);
  cfg.augment = true;
  IocFormer a(cfg.model, 3), b(cfg.model, 3);
  const auto ra = train(a, cfg, samples), rb = train(b, cfg, samples);
  ASSERT_EQ(ra.log.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(ra.log[i].total, rb.log[i].total);
  const auto& ea = a.parameters().entries();
  const auto& eb = b.parameters().entries();
  for (std::size_t i = 0; i < ea.size(); ++i) {
    EXPECT_TRUE(std::equal(ea[i].second.data().begin(), ea[i].second.data().end(), eb[i].second.data().begin()));
  }
}

TEST(TrainTest, LogsTermsPerVariant) {
  const auto samples = tiny_scenes(4, 32, 3);
  for (Variant v : {Variant::kDensityOnly, Variant::kRegressionOnly, Variant::kDualTte, Variant::kDualDete}) {
    TrainConfig cfg = small_config(v);
    cfg.steps = 1;
    IocFormer model(cfg.model, 3);
    const auto r = train(model, cfg, samples);
    const auto& s = r.log.at(0);
    EXPECT_EQ(std::isnan(s.density), !has_density_branch(v));
    EXPECT_EQ(std::isnan(s.classification), !has_regression_branch(v));
    EXPECT_TRUE(std::isfinite(s.total));
  }
}

TEST(TrainTest, LambdaZeroExcludesDensityFromTotal) {
  const auto samples = tiny_scenes(2, 32, 3);
  TrainConfig cfg = small_config(Variant::kDualDete);
  cfg.match.lambda = 0.0;
  cfg.steps = 1;
  IocFormer model(cfg.model, 3);
  const auto s = train(model, cfg, samples).log.at(0);
  EXPECT_TRUE(std::isfinite(s.density));
  EXPECT_NEAR(s.total, s.classification + s.localization, 1e-12);
}

TEST(TrainTest, TooFewQueriesNamesTheCrop) {
  auto samples = tiny_scenes(1, 32, 0);
  for (int i = 0; i < 20; ++i) samples[0].points.push_back({1.0 + i, 1.0});
  TrainConfig cfg = small_config(Variant::kDualDete);
  IocFormer model(cfg.model, 3);
  try {
    train(model, cfg, samples);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("scene0.ppm crop at"), std::string::npos) << e.what();
  }
  cfg.model.variant = Variant::kDensityOnly;
  IocFormer density_model(cfg.model, 3);
  EXPECT_NO_THROW(train(density_model, cfg, samples));
}

TEST(TrainTest, WritesLogAndCheckpoints) {
  const auto dir = scratch("outputs");
  const auto samples = tiny_scenes(4, 32, 3);
  TrainConfig cfg = small_config(Variant::kRegressionOnly);
  cfg.steps = 4;
  cfg.eval_every = 2;
  cfg.checkpoint_every = 2;
  IocFormer model(cfg.model, 3);
  const auto r = train(model, cfg, samples, samples, {dir / "run.ckpt", dir / "loss.csv"});
  std::ifstream log(dir / "loss.csv");
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, "step,L_D,L_c,L_l,total");
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    ++rows;
    EXPECT_EQ(line.rfind(std::to_string(rows) + ",,", 0), 0u) << line;  // no density term without a density branch
  }
  EXPECT_EQ(rows, 4u);
  ASSERT_TRUE(r.best_val_mae.has_value());
  EXPECT_TRUE(fs::exists(dir / "run.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "run.best.ckpt"));
  const auto best = load_checkpoint(dir / "run.best.ckpt");
  EXPECT_EQ(best.meta["val_mae"].get<double>(), *r.best_val_mae);
  EXPECT_EQ(best.meta["step"].get<std::size_t>(), r.best_step);
  fs::remove_all(dir);
}

TEST(TrainTest, EvaluationIsReproducible) {
  const auto samples = tiny_scenes(3, 40, 3);
  TrainConfig cfg = small_config(Variant::kDualDete);
  IocFormer model(cfg.model, 9);
  const ModelPredictor pred(model);
  const auto a = evaluate_samples(pred, samples, 32, 0.35), b = evaluate_samples(pred, samples, 32, 0.35);
  EXPECT_EQ(a.predicted, b.predicted);
  EXPECT_EQ(to_json(a.report), to_json(b.report));
}
