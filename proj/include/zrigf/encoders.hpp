#pragma once

#include <span>
#include <vector>

#include "zrigf/image.hpp"
#include "zrigf/nn.hpp"

namespace zrigf {

enum class Modality { kImage, kText };

// [L x d_model]; row 0 is the class / start-token position.
struct HiddenState {
  Tensor states;
  std::size_t length() const { return states.extent(0); }
  std::size_t width() const { return states.extent(1); }
};

struct PooledRepr {
  Tensor vector;  // [1 x d_shared]
  Modality modality = Modality::kImage;
};

struct ImageEncoderParams {
  Linear patch_embed;  // [patch_dim x d_model]
  Tensor cls_token;    // [1 x d_model]
  Tensor positions;    // [(N + 1) x d_model]
  std::vector<TransformerBlockParams> blocks;
  LayerNormParams final_norm;
};

struct TextEncoderParams {
  EmbeddingTable embedding;  // shared with the decoder
  Tensor positions;          // [max_len x d_model]
  std::vector<TransformerBlockParams> blocks;
  LayerNormParams final_norm;
  std::size_t max_len() const { return positions.extent(0); }
};

struct EncoderDims {
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  std::size_t heads = 4;
  std::size_t layers = 2;
};

ImageEncoderParams make_image_encoder(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                                      std::size_t patch_dim, std::size_t patch_count, Rng& rng);
TextEncoderParams make_text_encoder(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                                    const EmbeddingTable& embedding, std::size_t max_len, Rng& rng);

HiddenState encode_image(const ImageEncoderParams& params, const ImagePatchGrid& grid);
// Same, from an already patchified (possibly masked) [N x patch_dim] matrix.
HiddenState encode_patches(const ImageEncoderParams& params, const Tensor& patches);

struct TextEncoding {
  HiddenState hidden;
  bool truncated = false;
};

// Bidirectional self-attention with <pad> keys masked out. Sequences longer
// than max_len keep their first max_len tokens and set `truncated`.
TextEncoding encode_text(const TextEncoderParams& params, std::span<const int> ids);

// Row 0 through a modality-specific [d_model x d_shared] map.
PooledRepr pool_and_project(const HiddenState& state, Modality modality, const Tensor& projection);

}  // namespace zrigf
