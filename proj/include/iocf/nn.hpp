// SPDX-License-Identifier: Apache-2.0
//
// Parameterized layers over the autodiff ops. Layers hold Tensor handles
// that alias entries of a ParameterStore, so the optimizer and checkpoint
// code see the same storage the forward pass reads.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iocf/tensor.hpp"

namespace iocf::nn {

class ParameterStore {
 public:
  /// Registers `value` under a unique name and marks it trainable.
  Tensor add(std::string name, Tensor value);

  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;
  /// nullptr when absent.
  const Tensor* find(std::string_view name) const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Seeded weight initialization.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Tensor uniform(Shape shape, double bound);
  Tensor normal(Shape shape, double stddev);

 private:
  std::mt19937_64 rng_;
};

/// y = x W + b for x [m x in].
struct Linear {
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Initializer& init);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

/// Same-padded convolution over an [h x w x cin] map.
struct Conv2d {
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, std::size_t kernel, std::size_t cin, std::size_t cout,
         Initializer& init, std::size_t stride = 1);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;  // [k x k x cin x cout]
  Tensor bias;    // [cout]
  std::size_t stride = 1;
};

/// Row-wise normalization with learned gain and offset.
struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);
  Tensor operator()(const Tensor& x) const;

  Tensor gain;
  Tensor offset;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                     Initializer& init);
  Tensor operator()(const Tensor& query, const Tensor& key, const Tensor& value) const;

 private:
  Linear q_, k_, v_, out_;
  std::size_t heads_ = 1;
};

struct FeedForward {
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden,
              Initializer& init);
  Tensor operator()(const Tensor& x) const;

  Linear expand, contract;
};

/// Post-norm encoder layer: x = LN(x + SelfAttn(x)); x = LN(x + FFN(x)).
class TransformerEncoderLayer {
 public:
  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                          std::size_t hidden, Initializer& init);
  Tensor operator()(const Tensor& x) const;

 private:
  MultiHeadAttention attn_;
  LayerNorm norm1_, norm2_;
  FeedForward ffn_;
};

/// Post-norm decoder layer: self-attention over the queries, cross-attention
/// into the encoder memory, then the feed-forward block.
class TransformerDecoderLayer {
 public:
  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParameterStore& store, const std::string& name, std::size_t width, std::size_t heads,
                          std::size_t hidden, Initializer& init);
  Tensor operator()(const Tensor& target, const Tensor& memory) const;

 private:
  MultiHeadAttention self_attn_, cross_attn_;
  LayerNorm norm1_, norm2_, norm3_;
  FeedForward ffn_;
};

}  // namespace iocf::nn
