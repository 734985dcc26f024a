// SPDX-License-Identifier: Apache-2.0
//
// Training loop: crop preparation, batched losses, AdamW updates, loss log
// and checkpoints with best-on-validation selection.

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iocf/config.hpp"
#include "iocf/dataset.hpp"
#include "iocf/model.hpp"

namespace iocf {

/// Loss components averaged over a batch. Terms the variant lacks are NaN.
struct StepLog {
  std::size_t step = 0;
  double density = 0.0;
  double classification = 0.0;
  double localization = 0.0;
  double total = 0.0;
};

std::string csv_header();
std::string to_csv_row(const StepLog& log);

struct TrainingCrop {
  std::string source;  // filename plus crop origin, for error messages
  Image image;
  std::vector<Point> points;  // normalized by the crop side
};

/// Random resize/flip/crop when `cfg.augment`, otherwise a plain random
/// crop (the identity for crop-sized images). Throws ConfigError naming the
/// crop when a regression variant has no more queries than objects in it.
TrainingCrop prepare_crop(const Sample& sample, const TrainConfig& cfg, std::uint64_t seed);

struct BatchLoss {
  Tensor total;  // mean over the batch
  StepLog terms;
};

BatchLoss batch_loss(const IocFormer& model, std::span<const TrainingCrop> crops, const TrainConfig& cfg);

/// Mean total loss over crop-sized views of `samples` without recording a graph.
double dataset_loss(const IocFormer& model, std::span<const Sample> samples, const TrainConfig& cfg);

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint;  // best-on-val goes to <stem>.best<ext>
  std::optional<std::filesystem::path> loss_log;    // CSV
};

struct TrainResult {
  std::vector<StepLog> log;
  std::optional<double> best_val_mae;
  std::size_t best_step = 0;
};

/// Runs cfg.total_steps(train.size()) AdamW steps on `model`. Deterministic
/// given cfg.seed and the model's initial weights.
TrainResult train(IocFormer& model, const TrainConfig& cfg, std::span<const Sample> train_split,
                  std::span<const Sample> val_split = {}, const TrainOutputs& outputs = {},
                  const std::function<void(const StepLog&)>& on_step = {});

/// The best-checkpoint path derived from a checkpoint path.
std::filesystem::path best_checkpoint_path(const std::filesystem::path& checkpoint);

}  // namespace iocf
