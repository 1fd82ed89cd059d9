#include "zrigf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "zrigf/error.hpp"

namespace zrigf {

namespace {

using detail::BackwardFn;
using detail::ImplPtr;
using detail::TensorImpl;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<ImplPtr> parents, BackwardFn fn,
                   const char* op) {
  if (precision() == Precision::kFloat32) {
    for (double& v : data) v = round_to_precision(v);
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  const bool track = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                   [](const ImplPtr& p) { return p->requires_grad; });
  if (track) {
    impl->requires_grad = true;
    impl->node = std::make_shared<detail::Node>();
    impl->node->parents = std::move(parents);
    impl->node->backward = std::move(fn);
    impl->node->op = op;
  }
  return Tensor(std::move(impl));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(x.shape()));
  }
}

void require_axis(const Tensor& x, std::size_t axis, const char* op) {
  if (axis >= x.rank()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_to_string(x.shape()));
  }
}

// outer x axis x inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv, const char* op) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result(x.shape(), std::move(out), {x.impl()},
                     [deriv](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += o.grad[i] * deriv(p[0]->data[i], o.data[i]);
                       }
                     },
                     op);
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()},
                     [](const TensorImpl& o, std::span<const ImplPtr> p) {
                       for (const auto& parent : p) {
                         if (!parent->requires_grad) continue;
                         auto g = parent->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                       }
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()},
                     [](const TensorImpl& o, std::span<const ImplPtr> p) {
                       if (p[0]->requires_grad) {
                         auto g = p[0]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                       }
                       if (p[1]->requires_grad) {
                         auto g = p[1]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
                       }
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a.impl(), b.impl()},
                     [](const TensorImpl& o, std::span<const ImplPtr> p) {
                       if (p[0]->requires_grad) {
                         auto g = p[0]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * p[1]->data[i];
                       }
                       if (p[1]->requires_grad) {
                         auto g = p[1]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * p[0]->data[i];
                       }
                     },
                     "mul");
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; }, "add_scalar");
}

Tensor mul_scalar(const Tensor& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; }, "mul_scalar");
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale: factor must hold one value, got " + shape_to_string(s.shape()));
  const double factor = s.item();
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return make_result(x.shape(), std::move(out), {x.impl(), s.impl()},
                     [](const TensorImpl& o, std::span<const ImplPtr> p) {
                       const double f = p[1]->data[0];
                       if (p[0]->requires_grad) {
                         auto g = p[0]->grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * f;
                       }
                       if (p[1]->requires_grad) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * p[0]->data[i];
                         p[1]->grad_buffer()[0] += acc;
                       }
                     },
                     "scale");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a.impl(), b.impl()},
                     [m, k, n](const TensorImpl& o, std::span<const ImplPtr> p) {
                       if (p[0]->requires_grad) {
                         gemm_nt(o.grad.data(), p[1]->data.data(), p[0]->grad_buffer().data(), m, n, k);
                       }
                       if (p[1]->requires_grad) {
                         gemm_tn(p[0]->data.data(), o.grad.data(), p[1]->grad_buffer().data(), m, k, n);
                       }
                     },
                     "matmul");
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_transposed");
  require_rank(b, 2, "matmul_transposed");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  if (b.extent(1) != k) {
    throw DimensionError("matmul_transposed: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a.impl(), b.impl()},
                     [m, k, n](const TensorImpl& o, std::span<const ImplPtr> p) {
                       // dA = dC * B, dB = dC^T * A
                       if (p[0]->requires_grad) {
                         gemm_nn(o.grad.data(), p[1]->data.data(), p[0]->grad_buffer().data(), m, n, k);
                       }
                       if (p[1]->requires_grad) {
                         gemm_tn(o.grad.data(), p[0]->data.data(), p[1]->grad_buffer().data(), m, n, k);
                       }
                     },
                     "matmul_transposed");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t m = x.extent(0), k = x.extent(1), n = w.extent(1);
  if (w.extent(0) != k) {
    throw DimensionError("linear: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                         shape_to_string(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != n) {
    throw DimensionError("linear: bias " + shape_to_string(bias.shape()) + " does not match width " +
                         std::to_string(n));
  }
  std::vector<double> out(m * n, 0.0);
  if (has_bias) {
    const auto b = bias.data();
    for (std::size_t i = 0; i < m; ++i) std::copy(b.begin(), b.end(), out.begin() + static_cast<long>(i * n));
  }
  gemm_nn(x.data().data(), w.data().data(), out.data(), m, k, n);
  std::vector<ImplPtr> parents{x.impl(), w.impl()};
  if (has_bias) parents.push_back(bias.impl());
  return make_result({m, n}, std::move(out), std::move(parents),
                     [m, k, n](const TensorImpl& o, std::span<const ImplPtr> p) {
                       if (p[0]->requires_grad) {
                         gemm_nt(o.grad.data(), p[1]->data.data(), p[0]->grad_buffer().data(), m, n, k);
                       }
                       if (p[1]->requires_grad) {
                         gemm_tn(p[0]->data.data(), o.grad.data(), p[1]->grad_buffer().data(), m, k, n);
                       }
                       if (p.size() > 2 && p[2]->requires_grad) {
                         auto g = p[2]->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
                         }
                       }
                     },
                     "linear");
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.extent(0), n = x.extent(1);
  std::vector<std::size_t> source(m * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) source[i * m + j] = j * n + i;
  }
  return rearrange(x, {n, m}, std::move(source));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x.impl()},
                     [](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                     },
                     "reshape");
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; }, "log");
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }, "abs");
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor gelu(const Tensor& x) {
  // Exact erf form.
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      },
      "gelu");
}

namespace {

// Writes softmax (or log-softmax) of every lane along the split axis.
void softmax_lanes(std::span<const double> in, std::span<double> out, const AxisSplit& s, bool log_space) {
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) hi = std::max(hi, in[base + e * s.inner]);
      if (hi == -std::numeric_limits<double>::infinity()) {
        for (std::size_t e = 0; e < s.extent; ++e) {
          out[base + e * s.inner] = log_space ? -std::numeric_limits<double>::infinity() : 0.0;
        }
        continue;
      }
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) total += std::exp(in[base + e * s.inner] - hi);
      const double log_total = std::log(total);
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double shifted = in[base + e * s.inner] - hi;
        out[base + e * s.inner] = log_space ? shifted - log_total : std::exp(shifted) / total;
      }
    }
  }
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_axis(x, axis, "softmax");
  const AxisSplit s = split_axis(x.shape(), axis);
  std::vector<double> out(x.numel());
  softmax_lanes(x.data(), out, s, false);
  return make_result(x.shape(), std::move(out), {x.impl()},
                     [s](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t a = 0; a < s.outer; ++a) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t base = a * s.extent * s.inner + i;
                           double dot = 0.0;
                           for (std::size_t e = 0; e < s.extent; ++e) {
                             const std::size_t idx = base + e * s.inner;
                             dot += o.grad[idx] * o.data[idx];
                           }
                           for (std::size_t e = 0; e < s.extent; ++e) {
                             const std::size_t idx = base + e * s.inner;
                             g[idx] += o.data[idx] * (o.grad[idx] - dot);
                           }
                         }
                       }
                     },
                     "softmax");
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  require_axis(x, axis, "log_softmax");
  const AxisSplit s = split_axis(x.shape(), axis);
  std::vector<double> out(x.numel());
  softmax_lanes(x.data(), out, s, true);
  return make_result(x.shape(), std::move(out), {x.impl()},
                     [s](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t a = 0; a < s.outer; ++a) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const std::size_t base = a * s.extent * s.inner + i;
                           double total = 0.0;
                           for (std::size_t e = 0; e < s.extent; ++e) total += o.grad[base + e * s.inner];
                           for (std::size_t e = 0; e < s.extent; ++e) {
                             const std::size_t idx = base + e * s.inner;
                             const double prob = std::isinf(o.data[idx]) ? 0.0 : std::exp(o.data[idx]);
                             g[idx] += o.grad[idx] - prob * total;
                           }
                         }
                       }
                     },
                     "log_softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm: empty shape");
  const std::size_t width = x.shape().back();
  if (gain.numel() != width || bias.numel() != width) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()) + " do not match last extent of " +
                         shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / width;
  const auto in = x.data();
  const auto gm = gain.data();
  const auto bt = bias.data();
  std::vector<double> out(in.size());
  // Saved per row: normalized values and inverse std.
  auto normalized = std::make_shared<std::vector<double>>(in.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += row[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(width);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < width; ++j) {
      const double nv = (row[j] - mu) * is;
      (*normalized)[r * width + j] = nv;
      out[r * width + j] = nv * gm[j] + bt[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x.impl(), gain.impl(), bias.impl()},
                     [normalized, inv_std, rows, width](const TensorImpl& o, std::span<const ImplPtr> p) {
                       const auto& xn = *normalized;
                       const auto& gm2 = p[1]->data;
                       if (p[1]->requires_grad) {
                         auto g = p[1]->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < width; ++j) g[j] += o.grad[r * width + j] * xn[r * width + j];
                         }
                       }
                       if (p[2]->requires_grad) {
                         auto g = p[2]->grad_buffer();
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t j = 0; j < width; ++j) g[j] += o.grad[r * width + j];
                         }
                       }
                       if (p[0]->requires_grad) {
                         auto g = p[0]->grad_buffer();
                         const double inv_w = 1.0 / static_cast<double>(width);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_dy = 0.0, mean_dy_xn = 0.0;
                           for (std::size_t j = 0; j < width; ++j) {
                             const double dy = o.grad[r * width + j] * gm2[j];
                             mean_dy += dy;
                             mean_dy_xn += dy * xn[r * width + j];
                           }
                           mean_dy *= inv_w;
                           mean_dy_xn *= inv_w;
                           for (std::size_t j = 0; j < width; ++j) {
                             const double dy = o.grad[r * width + j] * gm2[j];
                             g[r * width + j] += (*inv_std)[r] * (dy - mean_dy - xn[r * width + j] * mean_dy_xn);
                           }
                         }
                       }
                     },
                     "layer_norm");
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {x.impl()},
                     [](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (double& v : g) v += o.grad[0];
                     },
                     "sum");
}

Tensor mean(const Tensor& x) { return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis) {
  require_axis(x, axis, "sum_axis");
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<long>(axis));
  if (shape.empty()) shape = {1};
  const auto in = x.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.extent + e) * s.inner + i];
    }
  }
  return make_result(std::move(shape), std::move(out), {x.impl()},
                     [s](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t a = 0; a < s.outer; ++a) {
                         for (std::size_t e = 0; e < s.extent; ++e) {
                           for (std::size_t i = 0; i < s.inner; ++i) {
                             g[(a * s.extent + e) * s.inner + i] += o.grad[a * s.inner + i];
                           }
                         }
                       }
                     },
                     "sum_axis");
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
  require_axis(x, axis, "mean_axis");
  return mul_scalar(sum_axis(x, axis), 1.0 / static_cast<double>(x.extent(axis)));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  require_axis(parts[0], axis, "concat");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != shape.size()) throw DimensionError("concat: rank mismatch " + shape_to_string(t.shape()));
    for (std::size_t d = 0; d < shape.size(); ++d) {
      if (d != axis && t.extent(d) != shape[d]) {
        throw DimensionError("concat: " + shape_to_string(t.shape()) + " incompatible with " +
                             shape_to_string(parts[0].shape()) + " along axis " + std::to_string(axis));
      }
    }
    total += t.extent(axis);
  }
  shape[axis] = total;
  const AxisSplit s = split_axis(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::vector<std::size_t> offsets;
  std::vector<ImplPtr> parents;
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t ext = t.extent(axis);
    const auto in = t.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(in.begin() + static_cast<long>(o * ext * s.inner), ext * s.inner,
                  out.begin() + static_cast<long>((o * total + offset) * s.inner));
    }
    offsets.push_back(offset);
    parents.push_back(t.impl());
    offset += ext;
  }
  return make_result(std::move(shape), std::move(out), std::move(parents),
                     [s, total, offsets, axis](const TensorImpl& o, std::span<const ImplPtr> p) {
                       for (std::size_t k = 0; k < p.size(); ++k) {
                         if (!p[k]->requires_grad) continue;
                         const std::size_t ext = p[k]->shape[axis];
                         auto g = p[k]->grad_buffer();
                         for (std::size_t a = 0; a < s.outer; ++a) {
                           const double* src = o.grad.data() + (a * total + offsets[k]) * s.inner;
                           double* dst = g.data() + a * ext * s.inner;
                           for (std::size_t i = 0; i < ext * s.inner; ++i) dst[i] += src[i];
                         }
                       }
                     },
                     "concat");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_axis(x, axis, "slice");
  if (length == 0 || start + length > x.extent(axis)) {
    throw DimensionError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis " + std::to_string(axis) + " of " + shape_to_string(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  const auto in = x.data();
  std::vector<double> out(shape_numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(in.begin() + static_cast<long>((o * s.extent + start) * s.inner), length * s.inner,
                out.begin() + static_cast<long>(o * length * s.inner));
  }
  return make_result(std::move(shape), std::move(out), {x.impl()},
                     [s, start, length](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t a = 0; a < s.outer; ++a) {
                         const double* src = o.grad.data() + a * length * s.inner;
                         double* dst = g.data() + (a * s.extent + start) * s.inner;
                         for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
                       }
                     },
                     "slice");
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_rank(table, 2, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: empty id sequence");
  const std::size_t rows = table.extent(0), width = table.extent(1);
  std::vector<int> idx(ids.begin(), ids.end());
  for (int id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw DimensionError("gather_rows: row " + std::to_string(id) + " outside table of " + std::to_string(rows));
    }
  }
  const auto in = table.data();
  std::vector<double> out(idx.size() * width);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(in.begin() + static_cast<long>(static_cast<std::size_t>(idx[i]) * width), width,
                out.begin() + static_cast<long>(i * width));
  }
  return make_result({idx.size(), width}, std::move(out), {table.impl()},
                     [idx, width](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                         double* dst = g.data() + static_cast<std::size_t>(idx[i]) * width;
                         for (std::size_t j = 0; j < width; ++j) dst[j] += o.grad[i * width + j];
                       }
                     },
                     "gather_rows");
}

Tensor take_along_rows(const Tensor& x, std::span<const int> index) {
  require_rank(x, 2, "take_along_rows");
  const std::size_t rows = x.extent(0), cols = x.extent(1);
  if (index.size() != rows) {
    throw DimensionError("take_along_rows: " + std::to_string(index.size()) + " indices for " +
                         shape_to_string(x.shape()));
  }
  std::vector<int> idx(index.begin(), index.end());
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw DimensionError("take_along_rows: column " + std::to_string(idx[r]) + " out of range");
    }
    out[r] = x.data()[r * cols + static_cast<std::size_t>(idx[r])];
  }
  return make_result({rows}, std::move(out), {x.impl()},
                     [idx, cols](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         g[r * cols + static_cast<std::size_t>(idx[r])] += o.grad[r];
                       }
                     },
                     "take_along_rows");
}

Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
  const bool vector_shape = v.rank() == 1 || (v.rank() == 2 && v.extent(0) == 1);
  if (!vector_shape || rows == 0) {
    throw DimensionError("broadcast_rows: expected [n] or [1xn], got " + shape_to_string(v.shape()));
  }
  const std::size_t width = v.numel();
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(v.data().begin(), v.data().end(), out.begin() + static_cast<long>(r * width));
  }
  return make_result({rows, width}, std::move(out), {v.impl()},
                     [rows, width](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t j = 0; j < width; ++j) g[j] += o.grad[r * width + j];
                       }
                     },
                     "broadcast_rows");
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t rows = x.extent(0), width = x.extent(1);
  const auto in = x.data();
  std::vector<double> out(in.size());
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < width; ++j) sq += in[r * width + j] * in[r * width + j];
    norms[r] = std::sqrt(sq);
    const double denom = std::max(norms[r], eps);
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = in[r * width + j] / denom;
  }
  return make_result({rows, width}, std::move(out), {x.impl()},
                     [norms, eps, width](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t r = 0; r < norms.size(); ++r) {
                         const double* gy = o.grad.data() + r * width;
                         const double* y = o.data.data() + r * width;
                         if (norms[r] <= eps) {
                           for (std::size_t j = 0; j < width; ++j) g[r * width + j] += gy[j] / eps;
                           continue;
                         }
                         double dot = 0.0;
                         for (std::size_t j = 0; j < width; ++j) dot += gy[j] * y[j];
                         for (std::size_t j = 0; j < width; ++j) {
                           g[r * width + j] += (gy[j] - y[j] * dot) / norms[r];
                         }
                       }
                     },
                     "l2_normalize_rows");
}

Tensor rearrange(const Tensor& x, Shape shape, std::vector<std::size_t> source) {
  if (shape_numel(shape) != source.size()) {
    throw DimensionError("rearrange: index map of " + std::to_string(source.size()) + " entries for shape " +
                         shape_to_string(shape));
  }
  const auto in = x.data();
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i] >= in.size()) throw DimensionError("rearrange: source index out of range");
    out[i] = in[source[i]];
  }
  return make_result(std::move(shape), std::move(out), {x.impl()},
                     [source = std::move(source)](const TensorImpl& o, std::span<const ImplPtr> p) {
                       auto g = p[0]->grad_buffer();
                       for (std::size_t i = 0; i < source.size(); ++i) g[source[i]] += o.grad[i];
                     },
                     "rearrange");
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                    const Tensor& mask) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  const std::size_t lq = q.extent(0), lk = k.extent(0), d = q.extent(1);
  if (k.extent(1) != d || v.extent(1) != d || v.extent(0) != lk) {
    throw DimensionError("attention: q " + shape_to_string(q.shape()) + ", k " + shape_to_string(k.shape()) +
                         ", v " + shape_to_string(v.shape()) + " are inconsistent");
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (mask.defined() && mask.shape() != Shape{lq, lk}) {
    throw DimensionError("attention: mask " + shape_to_string(mask.shape()) + " must be " +
                         shape_to_string({lq, lk}));
  }
  const std::size_t dh = d / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qd = q.data();
  const auto kd = k.data();
  const auto vd = v.data();
  // probs[h][i][j]
  auto probs = std::make_shared<std::vector<double>>(heads * lq * lk, 0.0);
  std::vector<double> out(lq * d, 0.0);
  std::vector<double> row(lk);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < lk; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += qd[i * d + c0 + c] * kd[j * d + c0 + c];
        row[j] = acc * scale_factor + (mask.defined() ? mask.data()[i * lk + j] : 0.0);
        hi = std::max(hi, row[j]);
      }
      double* pr = probs->data() + (h * lq + i) * lk;
      if (hi == -std::numeric_limits<double>::infinity()) continue;
      double total = 0.0;
      for (std::size_t j = 0; j < lk; ++j) {
        pr[j] = std::exp(row[j] - hi);
        total += pr[j];
      }
      for (std::size_t j = 0; j < lk; ++j) {
        pr[j] /= total;
        const double w = pr[j];
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) out[i * d + c0 + c] += w * vd[j * d + c0 + c];
      }
    }
  }
  std::vector<ImplPtr> parents{q.impl(), k.impl(), v.impl()};
  return make_result(
      {lq, d}, std::move(out), std::move(parents),
      [probs, heads, lq, lk, d, dh, scale_factor](const TensorImpl& o, std::span<const ImplPtr> p) {
        const auto& qv = p[0]->data;
        const auto& kv = p[1]->data;
        const auto& vv = p[2]->data;
        std::span<double> gq, gk, gv;
        if (p[0]->requires_grad) gq = p[0]->grad_buffer();
        if (p[1]->requires_grad) gk = p[1]->grad_buffer();
        if (p[2]->requires_grad) gv = p[2]->grad_buffer();
        std::vector<double> dp(lk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < lq; ++i) {
            const double* pr = probs->data() + (h * lq + i) * lk;
            const double* go = o.grad.data() + i * d + c0;
            double dot = 0.0;
            for (std::size_t j = 0; j < lk; ++j) {
              double acc = 0.0;
              for (std::size_t c = 0; c < dh; ++c) acc += go[c] * vv[j * d + c0 + c];
              dp[j] = acc;
              dot += acc * pr[j];
              if (!gv.empty() && pr[j] != 0.0) {
                for (std::size_t c = 0; c < dh; ++c) gv[j * d + c0 + c] += pr[j] * go[c];
              }
            }
            for (std::size_t j = 0; j < lk; ++j) {
              const double ds = pr[j] * (dp[j] - dot) * scale_factor;
              if (ds == 0.0) continue;
              if (!gq.empty()) {
                for (std::size_t c = 0; c < dh; ++c) gq[i * d + c0 + c] += ds * kv[j * d + c0 + c];
              }
              if (!gk.empty()) {
                for (std::size_t c = 0; c < dh; ++c) gk[j * d + c0 + c] += ds * qv[i * d + c0 + c];
              }
            }
          }
        }
      },
      "attention");
}

}  // namespace zrigf
