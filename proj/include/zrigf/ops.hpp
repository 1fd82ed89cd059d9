#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "zrigf/tensor.hpp"

// Differentiable tensor operations. Shapes are explicit: apart from the
// scalar forms (add_scalar, mul_scalar, scale) nothing broadcasts, and
// every mismatch raises DimensionError naming both shapes.
namespace zrigf {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);
// x times the single value held by s; gradients flow to both.
Tensor scale(const Tensor& x, const Tensor& s);

// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x k] * [n x k]^T
Tensor matmul_transposed(const Tensor& a, const Tensor& b);
// x [m x k] * w [k x n] plus bias [n] added to every row; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

// Full reductions return shape [1].
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Removes `axis`; a rank-1 input reduces to shape [1].
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor mean_axis(const Tensor& x, std::size_t axis);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

// Row lookup: out[i] = table[ids[i]]; repeated ids accumulate gradient.
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
// out[i] = x[i, index[i]] for a matrix x; result shape [rows].
Tensor take_along_rows(const Tensor& x, std::span<const int> index);
// Repeats a vector ([n] or [1 x n]) into [rows x n].
Tensor broadcast_rows(const Tensor& v, std::size_t rows);
// Each row divided by max(||row||, eps).
Tensor l2_normalize_rows(const Tensor& x, double eps);
// Pure data movement: out.flat[i] = x.flat[source[i]].
Tensor rearrange(const Tensor& x, Shape shape, std::vector<std::size_t> source);

// Scaled dot-product attention over already projected q [Lq x d], k and
// v [Lk x d], split into `heads` column groups of width d/heads. `mask`
// is additive [Lq x Lk] (0 or -inf) and may be undefined. A query row whose
// keys are all masked produces zeros.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                    const Tensor& mask);

}  // namespace zrigf
