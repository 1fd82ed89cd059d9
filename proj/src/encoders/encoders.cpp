#include "zrigf/encoders.hpp"

#include <array>
#include <memory>

#include "zrigf/error.hpp"
#include "zrigf/tokenizer.hpp"

namespace zrigf {

namespace {

std::vector<TransformerBlockParams> make_stack(ParameterStore& store, const std::string& prefix,
                                               const std::string& group, const EncoderDims& dims, Rng& rng) {
  std::vector<TransformerBlockParams> blocks;
  for (std::size_t l = 0; l < dims.layers; ++l) {
    blocks.push_back(make_transformer_block(store, prefix + ".block" + std::to_string(l), dims.d_model, dims.d_ff,
                                            dims.heads, group, rng));
  }
  return blocks;
}

}  // namespace

ImageEncoderParams make_image_encoder(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                                      std::size_t patch_dim, std::size_t patch_count, Rng& rng) {
  ImageEncoderParams p;
  p.patch_embed = make_linear(store, group + ".patch_embed", patch_dim, dims.d_model, group, rng);
  p.cls_token = store.create(group + ".cls", {1, dims.d_model}, Init::kNormal, group, rng);
  p.positions = store.create(group + ".positions", {patch_count + 1, dims.d_model}, Init::kNormal, group, rng);
  p.blocks = make_stack(store, group, group, dims, rng);
  p.final_norm = make_layer_norm(store, group + ".final_norm", dims.d_model, group, rng);
  return p;
}

TextEncoderParams make_text_encoder(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                                    const EmbeddingTable& embedding, std::size_t max_len, Rng& rng) {
  TextEncoderParams p;
  p.embedding = embedding;
  p.positions = store.create(group + ".positions", {max_len, dims.d_model}, Init::kNormal, group, rng);
  p.blocks = make_stack(store, group, group, dims, rng);
  p.final_norm = make_layer_norm(store, group + ".final_norm", dims.d_model, group, rng);
  return p;
}

HiddenState encode_patches(const ImageEncoderParams& params, const Tensor& patches) {
  const std::size_t in = params.patch_embed.weight.extent(0);
  const std::size_t expected = params.positions.extent(0) - 1;
  if (patches.rank() != 2 || patches.extent(1) != in || patches.extent(0) != expected) {
    throw ConfigError("image encoder expects [" + std::to_string(expected) + " x " + std::to_string(in) +
                      "] patches, got " + shape_to_string(patches.shape()));
  }
  const std::array<Tensor, 2> rows{params.cls_token, params.patch_embed(patches)};
  Tensor x = add(concat(rows, 0), params.positions);
  for (const auto& block : params.blocks) x = transformer_block(block, x, x);
  return {params.final_norm(x)};
}

HiddenState encode_image(const ImageEncoderParams& params, const ImagePatchGrid& grid) {
  return encode_patches(params, grid.patches);
}

TextEncoding encode_text(const TextEncoderParams& params, std::span<const int> ids) {
  if (ids.empty()) throw ContractError("encode_text: empty token sequence");
  TextEncoding out;
  if (ids.size() > params.max_len()) {
    ids = ids.first(params.max_len());
    out.truncated = true;
  }
  const std::size_t len = ids.size();
  auto flags = std::make_unique<bool[]>(len);
  bool any_pad = false;
  for (std::size_t i = 0; i < len; ++i) any_pad |= (flags[i] = ids[i] == kPadId);
  const Tensor mask = any_pad ? key_padding_mask(len, std::span<const bool>(flags.get(), len)) : Tensor{};

  Tensor x = add(embed(params.embedding, ids), slice(params.positions, 0, 0, len));
  for (const auto& block : params.blocks) x = transformer_block(block, x, x, mask);
  out.hidden = {params.final_norm(x)};
  return out;
}

PooledRepr pool_and_project(const HiddenState& state, Modality modality, const Tensor& projection) {
  if (state.length() < 1) throw ContractError("pool_and_project: empty hidden state");
  return {matmul(slice(state.states, 0, 0, 1), projection), modality};
}

}  // namespace zrigf
