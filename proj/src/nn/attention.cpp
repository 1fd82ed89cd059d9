#include "zrigf/error.hpp"
#include "zrigf/nn.hpp"

namespace zrigf {

Tensor attention(const AttentionParams& params, const Tensor& q_src, const Tensor& kv_src, const Tensor& mask) {
  const Tensor q = params.query(q_src);
  const Tensor k = params.key(kv_src);
  const Tensor v = params.value(kv_src);
  return params.output(scaled_dot_product_attention(q, k, v, params.heads, mask));
}

}  // namespace zrigf
