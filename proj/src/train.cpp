// SPDX-License-Identifier: Apache-2.0
#include "iocf/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "iocf/checkpoint.hpp"
#include "iocf/error.hpp"
#include "iocf/infer.hpp"
#include "iocf/match.hpp"
#include "iocf/ops.hpp"
#include "iocf/optim.hpp"

namespace iocf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::string format_term(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

double value_or_nan(const Tensor& t) { return t.defined() ? t.item() : kNaN; }

}  // namespace

std::string csv_header() { return "step,L_D,L_c,L_l,total"; }

std::string to_csv_row(const StepLog& log) {
  return std::to_string(log.step) + "," + format_term(log.density) + "," + format_term(log.classification) + "," +
         format_term(log.localization) + "," + format_term(log.total);
}

TrainingCrop prepare_crop(const Sample& sample, const TrainConfig& cfg, std::uint64_t seed) {
  const AugmentRanges ranges = cfg.augment ? AugmentRanges{} : AugmentRanges{1.0, 1.0, 0.0};
  const AugmentParams params = sample_augment(sample.image.width, sample.image.height, cfg.crop, seed, ranges);
  Augmented aug = apply_augment(sample.image, sample.points, params);
  TrainingCrop out;
  out.source = sample.filename + " crop at (" + std::to_string(params.crop_x) + ", " + std::to_string(params.crop_y) +
               ") scale " + std::to_string(params.scale);
  const auto side = static_cast<double>(cfg.crop);
  for (const auto& p : aug.points) out.points.push_back({p.x / side, p.y / side});
  if (has_regression_branch(cfg.model.variant) && out.points.size() >= cfg.model.queries) {
    throw ConfigError(out.source + " holds " + std::to_string(out.points.size()) + " objects but the model has only " +
                      std::to_string(cfg.model.queries) + " queries; raise queries above the largest crop count");
  }
  out.image = std::move(aug.image);
  return out;
}

BatchLoss batch_loss(const IocFormer& model, std::span<const TrainingCrop> crops, const TrainConfig& cfg) {
  if (crops.empty()) throw UsageError("batch_loss: empty batch");
  BatchLoss out;
  Tensor sum;
  double ld = 0.0, lc = 0.0, ll = 0.0;
  for (const auto& c : crops) {
    const ModelOutput pred = model.forward(c.image.to_tensor());
    const LossTerms terms = compute_losses(pred, c.points, cfg.model.variant, cfg.match);
    sum = sum.defined() ? ops::add(sum, terms.total) : terms.total;
    ld += value_or_nan(terms.density);
    lc += value_or_nan(terms.classification);
    ll += value_or_nan(terms.localization);
  }
  const double inv = 1.0 / static_cast<double>(crops.size());
  out.total = ops::scale(sum, inv);
  out.terms = {0, ld * inv, lc * inv, ll * inv, out.total.item()};
  return out;
}

double dataset_loss(const IocFormer& model, std::span<const Sample> samples, const TrainConfig& cfg) {
  if (samples.empty()) throw UsageError("dataset_loss: no samples");
  NoGradGuard no_grad;
  TrainConfig plain = cfg;
  plain.augment = false;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TrainingCrop crop = prepare_crop(samples[i], plain, stream_seed(cfg.seed, 0xe7a1, i));
    total += batch_loss(model, std::span(&crop, 1), cfg).terms.total;
  }
  return total / static_cast<double>(samples.size());
}

std::filesystem::path best_checkpoint_path(const std::filesystem::path& checkpoint) {
  std::filesystem::path best = checkpoint.parent_path() / (checkpoint.stem().string() + ".best");
  best += checkpoint.extension();
  return best;
}

TrainResult train(IocFormer& model, const TrainConfig& cfg, std::span<const Sample> train_split,
                  std::span<const Sample> val_split, const TrainOutputs& outputs,
                  const std::function<void(const StepLog&)>& on_step) {
  cfg.validate();
  if (model.config() != cfg.model) throw ConfigError("model was built with a different config than the training config");
  if (train_split.empty()) throw UsageError("training split is empty");

  AdamW optimizer(model.parameters(), {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay});
  std::ofstream log_file;
  if (outputs.loss_log) {
    log_file.open(*outputs.loss_log, std::ios::trunc);
    if (!log_file) throw IoError("cannot write loss log " + outputs.loss_log->string());
    log_file << csv_header() << "\n";
  }
  auto meta_for = [&](std::size_t step) {
    return nlohmann::json{{"step", step}, {"train", to_json(cfg)["train"]}};
  };

  TrainResult result;
  const std::size_t total_steps = cfg.total_steps(train_split.size());
  std::vector<std::size_t> order(train_split.size());
  std::size_t cursor = order.size(), epoch = 0;
  for (std::size_t step = 1; step <= total_steps; ++step) {
    std::vector<TrainingCrop> crops;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(stream_seed(cfg.seed, 0x5f0f, epoch++));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      crops.push_back(prepare_crop(train_split[idx], cfg, stream_seed(cfg.seed, step, idx)));
    }
    model.parameters().zero_grad();
    BatchLoss loss = batch_loss(model, crops, cfg);
    if (!std::isfinite(loss.terms.total)) {
      throw std::runtime_error("training diverged at step " + std::to_string(step) + " (non-finite loss)");
    }
    backward(loss.total);
    optimizer.step();

    loss.terms.step = step;
    result.log.push_back(loss.terms);
    if (log_file.is_open()) log_file << to_csv_row(loss.terms) << "\n" << std::flush;
    if (on_step) on_step(loss.terms);

    if (cfg.eval_every != 0 && !val_split.empty() && (step % cfg.eval_every == 0 || step == total_steps)) {
      const double mae = evaluate_samples(ModelPredictor(model), val_split, cfg.crop, cfg.threshold).report.mae;
      if (!result.best_val_mae || mae < *result.best_val_mae) {
        result.best_val_mae = mae;
        result.best_step = step;
        if (outputs.checkpoint) {
          auto meta = meta_for(step);
          meta["val_mae"] = mae;
          save_checkpoint(snapshot(model, meta), best_checkpoint_path(*outputs.checkpoint));
        }
      }
    }
    if (outputs.checkpoint && cfg.checkpoint_every != 0 && step % cfg.checkpoint_every == 0) {
      save_checkpoint(snapshot(model, meta_for(step)), *outputs.checkpoint);
    }
  }
  if (outputs.checkpoint) save_checkpoint(snapshot(model, meta_for(total_steps)), *outputs.checkpoint);
  return result;
}

}  // namespace iocf
