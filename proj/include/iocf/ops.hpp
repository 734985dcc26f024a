// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every op validates extents and throws
// DimensionError naming the offending shapes.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "iocf/tensor.hpp"

namespace iocf::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

// Row-vector broadcast over a [m x c] matrix with a [c] vector.
Tensor add_rowvec(const Tensor& x, const Tensor& row);
Tensor mul_rowvec(const Tensor& x, const Tensor& row);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

/// Cross-correlation of an [h x w x cin] map with [kh x kw x cin x cout]
/// weights, zero padding of kh/2 and kw/2. With stride 1 the output keeps
/// the input's spatial size; with stride s it is ceil(h/s) x ceil(w/s).
/// `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias = {}, std::size_t stride = 1);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor log(const Tensor& x);

/// Row-wise softmax of an [m x n] matrix.
Tensor softmax_rows(const Tensor& x);
/// Row-wise standardization (zero mean, unit variance), no affine terms.
Tensor layer_norm_rows(const Tensor& x, double eps = 1e-8);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Same values, new extents; sizes must agree.
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
/// Gathers rows of an [m x c] matrix.
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Mean binary cross-entropy of probabilities against 0/1 targets. Inputs
/// are clamped to [eps, 1 - eps]; the gradient is zero where clamping bites.
Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets, double eps = 1e-7);

/// softmax(q k^T / sqrt(c)) for q [nq x c], k [nk x c].
Tensor attention_weights(const Tensor& q, const Tensor& k);
/// attention_weights(q, k) v.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace iocf::ops
