// SPDX-License-Identifier: Apache-2.0
#include "iocf/model.hpp"

#include <cmath>

#include "iocf/error.hpp"
#include "iocf/ops.hpp"

namespace iocf {

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
  std::size_t n = 0;
  while (v > 1) {
    v >>= 1;
    ++n;
  }
  return n;
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kDensityOnly:
      return "density-only";
    case Variant::kRegressionOnly:
      return "regression-only";
    case Variant::kDualTte:
      return "dual-tte";
    case Variant::kDualDete:
      return "dual-dete";
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kDensityOnly, Variant::kRegressionOnly, Variant::kDualTte, Variant::kDualDete}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected density-only, regression-only, dual-tte or dual-dete)");
}

bool has_density_branch(Variant v) { return v != Variant::kRegressionOnly; }
bool has_regression_branch(Variant v) { return v != Variant::kDensityOnly; }

void ModelConfig::validate() const {
  if (layers < 2) throw ConfigError("layers must be >= 2, got " + std::to_string(layers));
  if (queries < 1) throw ConfigError("queries must be >= 1");
  if (!is_power_of_two(downsample)) throw ConfigError("downsample must be a power of two, got " + std::to_string(downsample));
  if (encoder_channels == 0 || density_channels == 0 || channels == 0 || ffn_hidden == 0) {
    throw ConfigError("channel counts must be positive");
  }
  if (heads == 0 || channels % heads != 0) {
    throw ConfigError("channels (" + std::to_string(channels) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (channels % 2 != 0) throw ConfigError("channels must be even for the positional embedding");
  if (decoder_layers < 1) throw ConfigError("decoder_layers must be >= 1");
}

ModelConfig desk_model_config() { return ModelConfig{}; }

ModelConfig paper_model_config() {
  ModelConfig cfg;
  cfg.layers = 6;
  cfg.queries = 700;
  return cfg;
}

Tensor positional_embedding(std::size_t height, std::size_t width, std::size_t channels) {
  if (channels == 0 || channels % 2 != 0) {
    throw ConfigError("positional embedding needs an even channel count, got " + std::to_string(channels));
  }
  const std::size_t half = channels / 2;
  std::vector<double> data(height * width * channels);
  auto encode = [half](double pos, std::size_t j) {
    const double freq = std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(half));
    return j % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
  };
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      double* row = data.data() + (y * width + x) * channels;
      for (std::size_t j = 0; j < half; ++j) {
        row[j] = encode(static_cast<double>(y), j);
        row[half + j] = encode(static_cast<double>(x), j);
      }
    }
  }
  return Tensor::from_data({height * width, channels}, std::move(data));
}

ImageEncoder::ImageEncoder(nn::ParameterStore& store, const ModelConfig& cfg, nn::Initializer& init)
    : downsample_(cfg.downsample) {
  const std::size_t stages = log2_exact(cfg.downsample);
  std::size_t width = std::max<std::size_t>(cfg.encoder_channels >> stages, 4);
  if (stages == 0) width = cfg.encoder_channels;
  blocks_.emplace_back(store, "encoder.block0", 3, 3, width, init, 1);
  for (std::size_t s = 0; s < stages; ++s) {
    const std::size_t next = s + 1 == stages ? cfg.encoder_channels : std::min(width * 2, cfg.encoder_channels);
    blocks_.emplace_back(store, "encoder.block" + std::to_string(s + 1), 3, width, next, init, 2);
    width = next;
  }
}

Tensor ImageEncoder::operator()(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("encoder expects an [H x W x 3] image, got " + to_string(image.shape()));
  }
  if (image.dim(0) % downsample_ != 0 || image.dim(1) % downsample_ != 0) {
    throw DimensionError("image " + to_string(image.shape()) + " is not a multiple of the encoder stride " +
                         std::to_string(downsample_) + "; pad it first");
  }
  Tensor x = image;
  for (const auto& block : blocks_) x = ops::relu(block(x));
  return x;
}

DensityBranch::DensityBranch(nn::ParameterStore& store, const ModelConfig& cfg, nn::Initializer& init)
    : conv1_(store, "density.conv1", 3, cfg.encoder_channels, cfg.density_channels, init),
      conv2_(store, "density.conv2", 3, cfg.density_channels, cfg.density_channels, init),
      head_(store, "density.head", 1, cfg.density_channels, 1, init) {}

DensityBranch::Output DensityBranch::operator()(const Tensor& features) const {
  Tensor fd = ops::relu(conv2_(ops::relu(conv1_(features))));
  Tensor d = ops::relu(head_(fd));
  return {fd, ops::reshape(d, {d.dim(0), d.dim(1)})};
}

DensityEnhancedEncoder::DensityEnhancedEncoder(nn::ParameterStore& store, const ModelConfig& cfg, bool with_density,
                                               nn::Initializer& init)
    : channels_(cfg.channels), proj_features_(store, "transformer.proj_features", cfg.encoder_channels, cfg.channels, init) {
  if (with_density) {
    proj_density_.emplace(store, "transformer.proj_density", cfg.density_channels, cfg.channels, init);
    for (std::size_t i = 1; i < cfg.layers; ++i) {
      const std::string name = "transformer.convs" + std::to_string(i);
      convs_.emplace_back(nn::Conv2d(store, name + ".a", 3, cfg.channels, cfg.channels, init),
                          nn::Conv2d(store, name + ".b", 3, cfg.channels, cfg.channels, init));
    }
  }
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    layers_.emplace_back(store, "transformer.layer" + std::to_string(i), cfg.channels, cfg.heads, cfg.ffn_hidden, init);
  }
}

Tensor DensityEnhancedEncoder::project(const nn::Linear& proj, const Tensor& map) const {
  const std::size_t h = map.dim(0), w = map.dim(1);
  return proj(ops::reshape(map, {h * w, map.dim(2)}));
}

Tensor DensityEnhancedEncoder::apply_layer(std::size_t i, const Tensor& x) const {
  ++applications_;
  return layers_[i](x);
}

Tensor DensityEnhancedEncoder::dete(const Tensor& features, const Tensor& density_features, bool ablate_merges) const {
  if (!proj_density_) throw UsageError("transformer was built without density merging");
  if (features.rank() != 3 || density_features.rank() != 3 || features.dim(0) != density_features.dim(0) ||
      features.dim(1) != density_features.dim(1)) {
    throw DimensionError("feature maps differ spatially: " + to_string(features.shape()) + " vs " +
                         to_string(density_features.shape()));
  }
  const std::size_t h = features.dim(0), w = features.dim(1);
  const Tensor pos = positional_embedding(h, w, channels_);
  const Tensor zeros = Tensor::zeros({h * w, channels_});

  // F^d_1 as a map so the conv chain can refine it between layers.
  Tensor fd = ops::reshape(project(*proj_density_, density_features), {h, w, channels_});
  auto merge_term = [&](const Tensor& map) { return ablate_merges ? zeros : ops::reshape(map, {h * w, channels_}); };

  Tensor x = apply_layer(0, ops::add(ops::add(project(proj_features_, features), merge_term(fd)), pos));
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    const auto& [conv_a, conv_b] = convs_[i - 1];
    fd = ops::relu(conv_b(ops::relu(conv_a(fd))));
    x = apply_layer(i, ops::add(x, merge_term(fd)));
  }
  return x;
}

Tensor DensityEnhancedEncoder::tte(const Tensor& features) const {
  if (features.rank() != 3) throw DimensionError("expected an [h x w x c] map, got " + to_string(features.shape()));
  const std::size_t h = features.dim(0), w = features.dim(1);
  Tensor x = apply_layer(0, ops::add(project(proj_features_, features), positional_embedding(h, w, channels_)));
  for (std::size_t i = 1; i < layers_.size(); ++i) x = apply_layer(i, x);
  return x;
}

QueryDecoder::QueryDecoder(nn::ParameterStore& store, const ModelConfig& cfg, nn::Initializer& init)
    : score_head_(store, "decoder.score_head", cfg.channels, 1, init),
      point_hidden_(store, "decoder.point_hidden", cfg.channels, cfg.channels, init),
      point_out_(store, "decoder.point_out", cfg.channels, 2, init) {
  queries_ = store.add("decoder.queries", init.normal({cfg.queries, cfg.channels}, 1.0));
  for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
    layers_.emplace_back(store, "decoder.layer" + std::to_string(i), cfg.channels, cfg.heads, cfg.ffn_hidden, init);
  }
}

QueryDecoder::Output QueryDecoder::operator()(const Tensor& memory) const {
  Tensor q = queries_;
  for (const auto& layer : layers_) q = layer(q, memory);
  const std::size_t n = q.dim(0);
  Tensor scores = ops::reshape(ops::sigmoid(score_head_(q)), {n});
  Tensor points = ops::sigmoid(point_out_(ops::relu(point_hidden_(q))));
  return {scores, points};
}

IocFormer::IocFormer(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Initializer init(seed);
  encoder_.emplace(params_, cfg_, init);
  if (has_density_branch(cfg_.variant)) density_.emplace(params_, cfg_, init);
  if (has_regression_branch(cfg_.variant)) {
    transformer_.emplace(params_, cfg_, cfg_.variant == Variant::kDualDete, init);
    decoder_.emplace(params_, cfg_, init);
  }
}

ModelOutput IocFormer::forward(const Tensor& image) const {
  ModelOutput out;
  const Tensor features = (*encoder_)(image);
  std::optional<DensityBranch::Output> dens;
  if (density_) {
    dens = (*density_)(features);
    out.density = dens->density;
  }
  if (!transformer_) return out;

  const Tensor memory =
      cfg_.variant == Variant::kDualDete ? transformer_->dete(features, dens->features) : transformer_->tte(features);
  auto decoded = (*decoder_)(memory);
  out.scores = decoded.scores;
  out.points = decoded.points;
  return out;
}

}  // namespace iocf
