// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint: "IOCFCKPT", u32 version, u32 header length, JSON header
// (model config plus free-form metadata), u32 tensor count, then per tensor
// a u32-length name, u32 rank, u64 dims and little-endian f64 values.

#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "iocf/model.hpp"

namespace iocf {

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig model;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;
};

Checkpoint snapshot(const IocFormer& model, nlohmann::json meta = nlohmann::json::object());
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Builds a model from the checkpoint's config and copies every tensor in.
/// Throws ParseError when names or shapes disagree with the config.
IocFormer restore_model(const Checkpoint& ckpt);

}  // namespace iocf
