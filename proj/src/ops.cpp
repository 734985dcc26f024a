// SPDX-License-Identifier: Apache-2.0
#include "iocf/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "iocf/error.hpp"
#include "node.hpp"

namespace iocf::ops {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using Vec = std::vector<double>;

const NodePtr& node_of(const Tensor& t) {
  const auto& n = TensorAccess::node(t);
  if (!n) throw UsageError("operation on an undefined tensor");
  return n;
}

Tensor emit(Shape shape, Vec value, const char* op, std::vector<NodePtr> inputs, std::function<void(Node&)> adjoint) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value = std::move(value);
  const bool track = !NoGradGuard::enabled() &&
                     std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& n) { return n->requires_grad; });
  if (track) {
    out->requires_grad = true;
    out->op = op;
    out->inputs = std::move(inputs);
    out->adjoint = std::move(adjoint);
  }
  return TensorAccess::wrap(std::move(out));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                       to_string(b.shape()));
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         to_string(x.shape()));
  }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

template <typename F>
Tensor unary(const Tensor& x, const char* op, F&& forward, std::function<double(double, double)> derivative) {
  const NodePtr& xn = node_of(x);
  Vec y(xn->value.size());
  std::transform(xn->value.begin(), xn->value.end(), y.begin(), forward);
  return emit(xn->shape, std::move(y), op, {xn}, [derivative = std::move(derivative)](Node& out) {
    Node& in = *out.inputs[0];
    if (!in.requires_grad) return;
    double* g = in.grad_buffer();
    for (std::size_t i = 0; i < out.value.size(); ++i) g[i] += out.grad[i] * derivative(in.value[i], out.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  const NodePtr& an = node_of(a);
  const NodePtr& bn = node_of(b);
  Vec y(an->value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = an->value[i] + bn->value[i];
  return emit(an->shape, std::move(y), "add", {an, bn}, [](Node& out) {
    for (auto& in : out.inputs) {
      if (!in->requires_grad) continue;
      double* g = in->grad_buffer();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  const NodePtr& an = node_of(a);
  const NodePtr& bn = node_of(b);
  Vec y(an->value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = an->value[i] - bn->value[i];
  return emit(an->shape, std::move(y), "sub", {an, bn}, [](Node& out) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& in = *out.inputs[k];
      if (!in.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      double* g = in.grad_buffer();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += sign * out.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  const NodePtr& an = node_of(a);
  const NodePtr& bn = node_of(b);
  Vec y(an->value.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = an->value[i] * bn->value[i];
  return emit(an->shape, std::move(y), "mul", {an, bn}, [](Node& out) {
    Node& a = *out.inputs[0];
    Node& b = *out.inputs[1];
    if (a.requires_grad) {
      double* g = a.grad_buffer();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * b.value[i];
    }
    if (b.requires_grad) {
      double* g = b.grad_buffer();
      for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i] * a.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, "add_scalar", [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  require_rank("add_rowvec", x, 2);
  require_rank("add_rowvec", row, 1);
  if (x.dim(1) != row.dim(0)) shape_error("add_rowvec", x, row);
  const NodePtr& xn = node_of(x);
  const NodePtr& rn = node_of(row);
  const std::size_t m = x.dim(0), c = x.dim(1);
  Vec y(xn->value);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] += rn->value[j];
  return emit(xn->shape, std::move(y), "add_rowvec", {xn, rn}, [m, c](Node& out) {
    Node& x = *out.inputs[0];
    Node& r = *out.inputs[1];
    if (x.requires_grad) {
      double* g = x.grad_buffer();
      for (std::size_t i = 0; i < m * c; ++i) g[i] += out.grad[i];
    }
    if (r.requires_grad) {
      double* g = r.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * c + j];
    }
  });
}

Tensor mul_rowvec(const Tensor& x, const Tensor& row) {
  require_rank("mul_rowvec", x, 2);
  require_rank("mul_rowvec", row, 1);
  if (x.dim(1) != row.dim(0)) shape_error("mul_rowvec", x, row);
  const NodePtr& xn = node_of(x);
  const NodePtr& rn = node_of(row);
  const std::size_t m = x.dim(0), c = x.dim(1);
  Vec y(m * c);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xn->value[i * c + j] * rn->value[j];
  return emit(xn->shape, std::move(y), "mul_rowvec", {xn, rn}, [m, c](Node& out) {
    Node& x = *out.inputs[0];
    Node& r = *out.inputs[1];
    if (x.requires_grad) {
      double* g = x.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[i * c + j] * r.value[j];
    }
    if (r.requires_grad) {
      double* g = r.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * c + j] * x.value[i * c + j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
  const NodePtr& an = node_of(a);
  const NodePtr& bn = node_of(b);
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto p = static_cast<Eigen::Index>(b.dim(1));
  Vec y(static_cast<std::size_t>(m * p));
  MutMap(y.data(), m, p).noalias() = ConstMap(an->value.data(), m, k) * ConstMap(bn->value.data(), k, p);
  return emit({a.dim(0), b.dim(1)}, std::move(y), "matmul", {an, bn}, [m, k, p](Node& out) {
    Node& a = *out.inputs[0];
    Node& b = *out.inputs[1];
    ConstMap g(out.grad.data(), m, p);
    if (a.requires_grad) {
      MutMap(a.grad_buffer(), m, k).noalias() += g * ConstMap(b.value.data(), k, p).transpose();
    }
    if (b.requires_grad) {
      MutMap(b.grad_buffer(), k, p).noalias() += ConstMap(a.value.data(), m, k).transpose() * g;
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const NodePtr& xn = node_of(x);
  const std::size_t m = x.dim(0), n = x.dim(1);
  Vec y(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = xn->value[i * n + j];
  return emit({n, m}, std::move(y), "transpose", {xn}, [m, n](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += out.grad[j * m + i];
  });
}

Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, std::size_t stride) {
  require_rank("conv2d", x, 3);
  require_rank("conv2d", weights, 4);
  if (stride == 0) throw UsageError("conv2d: stride must be positive");
  const std::size_t h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t kh = weights.dim(0), kw = weights.dim(1), cout = weights.dim(3);
  if (weights.dim(2) != cin) shape_error("conv2d", x, weights);
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw DimensionError("conv2d: kernel extents must be odd, got " + to_string(weights.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) shape_error("conv2d", weights, bias);

  const std::size_t pad_y = kh / 2, pad_x = kw / 2;
  const std::size_t ho = (h + 2 * pad_y - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad_x - kw) / stride + 1;
  const std::size_t patch = kh * kw * cin;
  const std::size_t rows = ho * wo;

  const NodePtr& xn = node_of(x);
  const NodePtr& wn = node_of(weights);
  auto cols = std::make_shared<Vec>(rows * patch, 0.0);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* dst = cols->data() + (oy * wo + ox) * patch;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad_y);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad_x);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* src = xn->value.data() + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          std::copy(src, src + cin, dst + (ky * kw + kx) * cin);
        }
      }
    }
  }

  const auto er = static_cast<Eigen::Index>(rows);
  const auto ep = static_cast<Eigen::Index>(patch);
  const auto ec = static_cast<Eigen::Index>(cout);
  Vec y(rows * cout);
  MutMap ym(y.data(), er, ec);
  ym.noalias() = ConstMap(cols->data(), er, ep) * ConstMap(wn->value.data(), ep, ec);

  std::vector<NodePtr> inputs{xn, wn};
  if (bias.defined()) {
    const NodePtr& bn = node_of(bias);
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bn->value.data(), ec);
    inputs.push_back(bn);
  }

  auto adjoint = [=](Node& out) {
    Node& xin = *out.inputs[0];
    Node& win = *out.inputs[1];
    ConstMap g(out.grad.data(), er, ec);
    if (win.requires_grad) {
      MutMap(win.grad_buffer(), ep, ec).noalias() += ConstMap(cols->data(), er, ep).transpose() * g;
    }
    if (out.inputs.size() > 2 && out.inputs[2]->requires_grad) {
      Eigen::Map<Eigen::RowVectorXd>(out.inputs[2]->grad_buffer(), ec) += g.colwise().sum();
    }
    if (!xin.requires_grad) return;
    RowMat gcols = g * ConstMap(win.value.data(), ep, ec).transpose();
    double* gx = xin.grad_buffer();
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const double* src = gcols.data() + (oy * wo + ox) * patch;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad_y);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad_x);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            double* dst = gx + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
            const double* s = src + (ky * kw + kx) * cin;
            for (std::size_t c = 0; c < cin; ++c) dst[c] += s[c];
          }
        }
      }
    }
  };
  return emit({ho, wo, cout}, std::move(y), "conv2d", std::move(inputs), std::move(adjoint));
}

Tensor relu(const Tensor& x) {
  return unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw UsageError("log: non-positive input");
  }
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Tensor softmax_rows(const Tensor& x) {
  require_rank("softmax_rows", x, 2);
  const NodePtr& xn = node_of(x);
  const std::size_t m = x.dim(0), n = x.dim(1);
  Vec y(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xn->value.data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (y[i * n + j] = std::exp(row[j] - peak));
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] /= total;
  }
  return emit(xn->shape, std::move(y), "softmax_rows", {xn}, [m, n](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* yr = out.value.data() + i * n;
      const double* gr = out.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += yr[j] * (gr[j] - dot);
    }
  });
}

Tensor layer_norm_rows(const Tensor& x, double eps) {
  require_rank("layer_norm_rows", x, 2);
  const NodePtr& xn = node_of(x);
  const std::size_t m = x.dim(0), n = x.dim(1);
  Vec y(m * n);
  auto inv_std = std::make_shared<Vec>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xn->value.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double s = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = s;
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = (row[j] - mu) * s;
  }
  return emit(xn->shape, std::move(y), "layer_norm_rows", {xn}, [m, n, inv_std](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      const double* yr = out.value.data() + i * n;
      const double* gr = out.grad.data() + i * n;
      double gmean = 0.0, gymean = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        gmean += gr[j];
        gymean += gr[j] * yr[j];
      }
      gmean *= inv_n;
      gymean *= inv_n;
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (*inv_std)[i] * (gr[j] - gmean - yr[j] * gymean);
    }
  });
}

Tensor sum(const Tensor& x) {
  const NodePtr& xn = node_of(x);
  double total = 0.0;
  for (double v : xn->value) total += v;
  return emit({}, {total}, "sum", {xn}, [](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    for (std::size_t i = 0; i < x.value.size(); ++i) g[i] += out.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (iocf::numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const NodePtr& xn = node_of(x);
  return emit(std::move(shape), xn->value, "reshape", {xn}, [](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    for (std::size_t i = 0; i < out.grad.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank("slice_cols", x, 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + to_string(x.shape()));
  }
  const NodePtr& xn = node_of(x);
  Vec y(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xn->value.data() + i * n + start, count, y.data() + i * count);
  return emit({m, count}, std::move(y), "slice_cols", {xn}, [m, n, start, count](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += out.grad[i * count + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::size_t total = 0;
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    require_rank("concat_cols", p, 2);
    if (p.dim(0) != m) shape_error("concat_cols", parts.front(), p);
    widths.push_back(p.dim(1));
    total += p.dim(1);
    inputs.push_back(node_of(p));
  }
  Vec y(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(inputs[k]->value.data() + i * widths[k], widths[k], y.data() + i * total + offset);
    offset += widths[k];
  }
  return emit({m, total}, std::move(y), "concat_cols", std::move(inputs), [m, total, widths](Node& out) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < out.inputs.size(); ++k) {
      Node& in = *out.inputs[k];
      if (in.requires_grad) {
        double* g = in.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += out.grad[i * total + offset + j];
      }
      offset += widths[k];
    }
  });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank("select_rows", x, 2);
  const std::size_t m = x.dim(0), c = x.dim(1);
  if (rows.empty()) throw UsageError("select_rows: empty row list");
  for (std::size_t r : rows) {
    if (r >= m) throw DimensionError("select_rows: row " + std::to_string(r) + " out of range for " + to_string(x.shape()));
  }
  const NodePtr& xn = node_of(x);
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  Vec y(picked.size() * c);
  for (std::size_t i = 0; i < picked.size(); ++i) std::copy_n(xn->value.data() + picked[i] * c, c, y.data() + i * c);
  return emit({picked.size(), c}, std::move(y), "select_rows", {xn}, [picked, c](Node& out) {
    Node& x = *out.inputs[0];
    if (!x.requires_grad) return;
    double* g = x.grad_buffer();
    for (std::size_t i = 0; i < picked.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[picked[i] * c + j] += out.grad[i * c + j];
  });
}

Tensor binary_cross_entropy(const Tensor& probs, std::span<const double> targets, double eps) {
  if (probs.numel() != targets.size()) {
    throw DimensionError("binary_cross_entropy: " + std::to_string(targets.size()) + " targets for probabilities of shape " +
                         to_string(probs.shape()));
  }
  const NodePtr& pn = node_of(probs);
  Vec t(targets.begin(), targets.end());
  const double n = static_cast<double>(t.size());
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double p = std::clamp(pn->value[i], eps, 1.0 - eps);
    total -= t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p);
  }
  return emit({}, {total / n}, "binary_cross_entropy", {pn}, [t = std::move(t), eps, n](Node& out) {
    Node& p = *out.inputs[0];
    if (!p.requires_grad) return;
    double* g = p.grad_buffer();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double v = p.value[i];
      if (v < eps || v > 1.0 - eps) continue;
      g[i] += out.grad[0] * (-t[i] / v + (1.0 - t[i]) / (1.0 - v)) / n;
    }
  });
}

Tensor attention_weights(const Tensor& q, const Tensor& k) {
  require_rank("attention", q, 2);
  require_rank("attention", k, 2);
  if (q.dim(1) != k.dim(1)) shape_error("attention", q, k);
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  return softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_c));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_rank("attention", v, 2);
  if (k.dim(0) != v.dim(0) || v.dim(1) != q.dim(1)) shape_error("attention", k, v);
  return matmul(attention_weights(q, k), v);
}

}  // namespace iocf::ops
