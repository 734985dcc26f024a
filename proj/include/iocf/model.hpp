// SPDX-License-Identifier: Apache-2.0
//
// The counting network: a convolutional image encoder feeding a density
// branch (decoder + ReLU density head) and a regression branch (transformer
// encoder + query decoder + score/point heads). Four variants switch the
// branches on and off for ablation.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "iocf/nn.hpp"
#include "iocf/tensor.hpp"

namespace iocf {

enum class Variant {
  kDensityOnly,     // encoder -> density branch
  kRegressionOnly,  // encoder -> plain transformer encoder -> decoder
  kDualTte,         // both branches, no density merging in the transformer
  kDualDete,        // both branches, density features merged before every layer
};

std::string_view to_string(Variant v);
/// Accepts "density-only", "regression-only", "dual-tte", "dual-dete".
Variant parse_variant(std::string_view name);

bool has_density_branch(Variant v);
bool has_regression_branch(Variant v);

struct ModelConfig {
  Variant variant = Variant::kDualDete;
  std::size_t layers = 2;           // transformer layers in the encoder
  std::size_t encoder_channels = 64;
  std::size_t density_channels = 64;
  std::size_t channels = 32;        // common transformer width
  std::size_t queries = 128;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t downsample = 8;
  std::size_t ffn_hidden = 64;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Small defaults for CPU-scale runs.
ModelConfig desk_model_config();
/// Six transformer layers and 700 queries; widths as in the desk preset.
ModelConfig paper_model_config();

/// Fixed 2-D sinusoidal embedding, one row per position in row-major
/// (y, x) order. The first c/2 channels encode y, the rest x.
Tensor positional_embedding(std::size_t height, std::size_t width, std::size_t channels);

struct ModelOutput {
  std::optional<Tensor> density;  // [h x w], >= 0
  std::optional<Tensor> scores;   // [n], in [0, 1]
  std::optional<Tensor> points;   // [n x 2] as (x, y), in [0, 1]^2 of the input
};

/// Plain conv stack: a stride-1 stem, then one stride-2 stage per factor of
/// two in `downsample`, doubling width up to `encoder_channels`.
class ImageEncoder {
 public:
  ImageEncoder(nn::ParameterStore& store, const ModelConfig& cfg, nn::Initializer& init);
  /// [H x W x 3] -> [H/ds x W/ds x c1]. H and W must be multiples of ds.
  Tensor operator()(const Tensor& image) const;

 private:
  std::vector<nn::Conv2d> blocks_;
  std::size_t downsample_;
};

/// Two 3x3 convolutions, then a 1x1 ReLU head for the density map.
class DensityBranch {
 public:
  DensityBranch(nn::ParameterStore& store, const ModelConfig& cfg, nn::Initializer& init);
  struct Output {
    Tensor features;  // [h x w x c2]
    Tensor density;   // [h x w]
  };
  Output operator()(const Tensor& features) const;

 private:
  nn::Conv2d conv1_, conv2_, head_;
};

/// Transformer encoder over flattened features with optional density merging.
class DensityEnhancedEncoder {
 public:
  /// `with_density` builds the density projection and the conv chain that
  /// refines density features between layers.
  DensityEnhancedEncoder(nn::ParameterStore& store, const ModelConfig& cfg, bool with_density, nn::Initializer& init);

  /// Density-enhanced path. Layer 1 sees Rs(F^) + Rs(F^d) + E; each later
  /// layer i sees its predecessor's output plus Rs(Convs^(i-1)(F^d)).
  /// `ablate_merges` replaces every merged density term with zeros.
  Tensor dete(const Tensor& features, const Tensor& density_features, bool ablate_merges = false) const;
  /// Plain path: Rs(F^) + E followed by the same layers.
  Tensor tte(const Tensor& features) const;

  /// Transformer-layer applications since construction or the last reset.
  std::size_t layer_applications() const noexcept { return applications_; }
  void reset_layer_applications() noexcept { applications_ = 0; }

 private:
  Tensor project(const nn::Linear& proj, const Tensor& map) const;
  Tensor apply_layer(std::size_t i, const Tensor& x) const;

  std::size_t channels_;
  nn::Linear proj_features_;
  std::optional<nn::Linear> proj_density_;
  std::vector<std::pair<nn::Conv2d, nn::Conv2d>> convs_;
  std::vector<nn::TransformerEncoderLayer> layers_;
  mutable std::size_t applications_ = 0;
};

/// Learned queries decoded against the encoder memory into scores and points.
class QueryDecoder {
 public:
  QueryDecoder(nn::ParameterStore& store, const ModelConfig& cfg, nn::Initializer& init);
  struct Output {
    Tensor scores;  // [n]
    Tensor points;  // [n x 2]
  };
  Output operator()(const Tensor& memory) const;

 private:
  Tensor queries_;
  std::vector<nn::TransformerDecoderLayer> layers_;
  nn::Linear score_head_;
  nn::Linear point_hidden_, point_out_;
};

class IocFormer {
 public:
  IocFormer(const ModelConfig& cfg, std::uint64_t seed);

  IocFormer(const IocFormer&) = delete;
  IocFormer& operator=(const IocFormer&) = delete;
  IocFormer(IocFormer&&) = default;

  ModelOutput forward(const Tensor& image) const;

  const ModelConfig& config() const noexcept { return cfg_; }
  nn::ParameterStore& parameters() noexcept { return params_; }
  const nn::ParameterStore& parameters() const noexcept { return params_; }

  const ImageEncoder& image_encoder() const { return *encoder_; }
  const DensityBranch* density_branch() const { return density_ ? &*density_ : nullptr; }
  const DensityEnhancedEncoder* transformer() const { return transformer_ ? &*transformer_ : nullptr; }
  const QueryDecoder* decoder() const { return decoder_ ? &*decoder_ : nullptr; }

 private:
  ModelConfig cfg_;
  nn::ParameterStore params_;
  std::optional<ImageEncoder> encoder_;
  std::optional<DensityBranch> density_;
  std::optional<DensityEnhancedEncoder> transformer_;
  std::optional<QueryDecoder> decoder_;
};

}  // namespace iocf
