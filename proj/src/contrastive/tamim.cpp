#include "zrigf/contrastive.hpp"
#include "zrigf/error.hpp"

namespace zrigf {

TamimHeadParams make_tamim_head(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                                std::size_t patch_size, std::size_t channels, Rng& rng) {
  TamimHeadParams p;
  p.block = make_transformer_block(store, group + ".block", dims.d_model, dims.d_ff, dims.heads, group, rng);
  const std::size_t out = patch_size * patch_size * channels;
  p.kernel = store.create(group + ".mip.kernel", {out, dims.d_model, 1, 1}, Init::kNormal, group, rng);
  p.bias = store.create(group + ".mip.bias", {out}, Init::kZeros, group, rng);
  p.patch_size = patch_size;
  return p;
}

Tensor reconstruct_masked(const TamimHeadParams& params, const HiddenState& masked_image, const HiddenState& text,
                          std::size_t patches_per_side) {
  const std::size_t d = params.kernel.extent(1);
  if (masked_image.width() != d || text.width() != d) {
    throw ConfigError("reconstruct_masked: image width " + std::to_string(masked_image.width()) + ", text width " +
                      std::to_string(text.width()) + ", head expects " + std::to_string(d));
  }
  const std::size_t n = patches_per_side * patches_per_side;
  if (masked_image.length() != n + 1) {
    throw ConfigError("reconstruct_masked: expected " + std::to_string(n + 1) + " image positions, got " +
                      std::to_string(masked_image.length()));
  }
  const Tensor fused = transformer_block(params.block, masked_image.states, text.states);
  const Tensor grid = reshape(transpose(slice(fused, 0, 1, n)), {d, patches_per_side, patches_per_side});
  const Tensor pixels = pixel_shuffle(conv2d(grid, params.kernel, params.bias), {params.patch_size});
  return patchify_tensor(pixels, params.patch_size);
}

ReconLoss recon_loss(const Tensor& target, const Tensor& prediction, const MaskSpec& mask) {
  if (target.shape() != prediction.shape()) {
    throw DimensionError("recon_loss: " + shape_to_string(target.shape()) + " vs " +
                         shape_to_string(prediction.shape()));
  }
  if (target.rank() != 2 || target.extent(0) != mask.keep.size()) {
    throw DimensionError("recon_loss: mask of " + std::to_string(mask.keep.size()) + " patches vs " +
                         shape_to_string(target.shape()));
  }
  std::vector<int> masked;
  for (std::size_t i = 0; i < mask.keep.size(); ++i) {
    if (!mask.keep[i]) masked.push_back(static_cast<int>(i));
  }
  if (masked.empty()) return {Tensor::zeros({1}), true};
  const Tensor diff = abs(sub(gather_rows(target, masked), gather_rows(prediction, masked)));
  // mean over each patch's entries, summed over patches, divided by N_M
  return {mean(diff), false};
}

}  // namespace zrigf
