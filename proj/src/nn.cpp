// SPDX-License-Identifier: Apache-2.0
#include "iocf/nn.hpp"

#include <cmath>

#include "iocf/error.hpp"
#include "iocf/ops.hpp"

namespace iocf::nn {

Tensor ParameterStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw UsageError("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), value);
  return value;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : entries_) total += t.numel();
  return total;
}

const Tensor* ParameterStore::find(std::string_view name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return &t;
  }
  return nullptr;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Tensor Initializer::uniform(Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> data(numel(shape));
  for (double& v : data) v = dist(rng_);
  return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor Initializer::normal(Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(numel(shape));
  for (double& v : data) v = dist(rng_);
  return Tensor::from_data(std::move(shape), std::move(data));
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Initializer& init) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight = store.add(name + ".weight", init.uniform({in, out}, bound));
  bias = store.add(name + ".bias", Tensor::zeros({out}));
}

Tensor Linear::operator()(const Tensor& x) const { return ops::add_rowvec(ops::matmul(x, weight), bias); }

Conv2d::Conv2d(ParameterStore& store, const std::string& name, std::size_t kernel, std::size_t cin, std::size_t cout,
               Initializer& init, std::size_t stride_)
    : stride(stride_) {
  const double bound = std::sqrt(6.0 / static_cast<double>(kernel * kernel * cin));
  weight = store.add(name + ".weight", init.uniform({kernel, kernel, cin, cout}, bound));
  bias = store.add(name + ".bias", Tensor::zeros({cout}));
}

Tensor Conv2d::operator()(const Tensor& x) const { return ops::conv2d(x, weight, bias, stride); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width) {
  gain = store.add(name + ".gain", Tensor::full({width}, 1.0));
  offset = store.add(name + ".offset", Tensor::zeros({width}));
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return ops::add_rowvec(ops::mul_rowvec(ops::layer_norm_rows(x, 1e-6), gain), offset);
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t width,
                                       std::size_t heads, Initializer& init)
    : q_(store, name + ".q", width, width, init),
      k_(store, name + ".k", width, width, init),
      v_(store, name + ".v", width, width, init),
      out_(store, name + ".out", width, width, init),
      heads_(heads) {
  if (heads == 0 || width % heads != 0) {
    throw ConfigError("attention width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& query, const Tensor& key, const Tensor& value) const {
  const Tensor q = q_(query), k = k_(key), v = v_(value);
  const std::size_t head_width = q.dim(1) / heads_;
  std::vector<Tensor> parts;
  parts.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    const std::size_t start = h * head_width;
    parts.push_back(ops::attention(ops::slice_cols(q, start, head_width), ops::slice_cols(k, start, head_width),
                                   ops::slice_cols(v, start, head_width)));
  }
  return out_(heads_ == 1 ? parts.front() : ops::concat_cols(parts));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden,
                         Initializer& init)
    : expand(store, name + ".expand", width, hidden, init), contract(store, name + ".contract", hidden, width, init) {}

Tensor FeedForward::operator()(const Tensor& x) const { return contract(ops::relu(expand(x))); }

TransformerEncoderLayer::TransformerEncoderLayer(ParameterStore& store, const std::string& name, std::size_t width,
                                                 std::size_t heads, std::size_t hidden, Initializer& init)
    : attn_(store, name + ".attn", width, heads, init),
      norm1_(store, name + ".norm1", width),
      norm2_(store, name + ".norm2", width),
      ffn_(store, name + ".ffn", width, hidden, init) {}

Tensor TransformerEncoderLayer::operator()(const Tensor& x) const {
  const Tensor h = norm1_(ops::add(x, attn_(x, x, x)));
  return norm2_(ops::add(h, ffn_(h)));
}

TransformerDecoderLayer::TransformerDecoderLayer(ParameterStore& store, const std::string& name, std::size_t width,
                                                 std::size_t heads, std::size_t hidden, Initializer& init)
    : self_attn_(store, name + ".self_attn", width, heads, init),
      cross_attn_(store, name + ".cross_attn", width, heads, init),
      norm1_(store, name + ".norm1", width),
      norm2_(store, name + ".norm2", width),
      norm3_(store, name + ".norm3", width),
      ffn_(store, name + ".ffn", width, hidden, init) {}

Tensor TransformerDecoderLayer::operator()(const Tensor& target, const Tensor& memory) const {
  Tensor t = norm1_(ops::add(target, self_attn_(target, target, target)));
  t = norm2_(ops::add(t, cross_attn_(t, memory, memory)));
  return norm3_(ops::add(t, ffn_(t)));
}

}  // namespace iocf::nn
