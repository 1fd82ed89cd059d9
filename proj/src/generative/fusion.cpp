#include <array>

#include "zrigf/contrastive.hpp"
#include "zrigf/error.hpp"
#include "zrigf/generative.hpp"

namespace zrigf {

Tensor fusion_weights(const Tensor& sims) { return softmax(sims, 1); }

FusedStates fuse_images(const Tensor& context_pooled, std::span<const Tensor> image_states,
                        const Tensor& image_pooled) {
  const std::size_t k = image_states.size();
  if (k == 0) throw ContractError("fuse_images: no images");
  if (image_pooled.rank() != 2 || image_pooled.extent(0) != k) {
    throw DimensionError("fuse_images: pooled images " + shape_to_string(image_pooled.shape()) + " for " +
                         std::to_string(k) + " image states");
  }
  const Shape& state_shape = image_states[0].shape();
  std::vector<Tensor> flat;
  for (const auto& s : image_states) {
    if (s.shape() != state_shape) {
      throw DimensionError("fuse_images: image states " + shape_to_string(state_shape) + " vs " +
                           shape_to_string(s.shape()));
    }
    flat.push_back(reshape(s, {1, s.numel()}));
  }
  FusedStates out;
  const Tensor weights = fusion_weights(cosine_matrix(context_pooled, image_pooled));  // [1 x k]
  out.alpha = reshape(weights, {k});
  out.h_i_att = reshape(matmul(weights, concat(flat, 0)), state_shape);
  return out;
}

FusionParams make_fusion(ParameterStore& store, const std::string& group, const EncoderDims& dims, Rng& rng) {
  return {make_transformer_block(store, group + ".image_block", dims.d_model, dims.d_ff, dims.heads, group, rng),
          make_transformer_block(store, group + ".context_block", dims.d_model, dims.d_ff, dims.heads, group, rng)};
}

void cross_fuse(const FusionParams& params, FusedStates& fused, const Tensor& h_c) {
  if (fused.h_i_att.extent(1) != h_c.extent(1)) {
    throw ConfigError("cross_fuse: image width " + std::to_string(fused.h_i_att.extent(1)) + " vs context width " +
                      std::to_string(h_c.extent(1)));
  }
  fused.h_i_c = transformer_block(params.image_block, fused.h_i_att, h_c);
  fused.h_c_i = transformer_block(params.context_block, h_c, fused.h_i_att);
}

}  // namespace zrigf
