#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "zrigf/encoders.hpp"

namespace zrigf {

// BCE over raw cosines between every context [n x d_shared] and image
// [m x d_shared]; y is row-major n x m. Normalized by 1/m, not 1/(n*m).
Tensor preservation_loss(const Tensor& contexts, const Tensor& images, std::span<const std::uint8_t> y);

struct FusedStates {
  Tensor alpha;      // [k]
  Tensor h_i_att;    // [L_I x d]
  Tensor h_i_c;      // [L_I x d]
  Tensor h_c_i;      // [L_C x d]
};

// Softmax over the image-context similarities [1 x k], unscaled.
Tensor fusion_weights(const Tensor& sims);

// alpha = softmax of cosine(pooled image i, pooled context); h_i_att is the
// alpha-weighted sum of the image hidden states. Fills alpha and h_i_att.
FusedStates fuse_images(const Tensor& context_pooled, std::span<const Tensor> image_states,
                        const Tensor& image_pooled);

struct FusionParams {
  TransformerBlockParams image_block;    // queries from the images
  TransformerBlockParams context_block;  // queries from the context
};

FusionParams make_fusion(ParameterStore& store, const std::string& group, const EncoderDims& dims, Rng& rng);
// Fills h_i_c = block_I(h_i_att, h_c, h_c) and h_c_i = block_C(h_c, h_i_att, h_i_att).
void cross_fuse(const FusionParams& params, FusedStates& fused, const Tensor& h_c);

struct DecoderLayerParams {
  LayerNormParams self_norm;
  AttentionParams self_attention;
  LayerNormParams cross_norm;
  AttentionParams cross_attention;  // applied once per memory
  Linear context_gate;              // [2d -> d]
  Linear image_gate;                // [2d -> d]
  Linear merge;                     // [3d -> d]
  LayerNormParams ffn_norm;
  FeedForwardParams ffn;            // pre-norm residual sublayer on the merge output
};

// sigmoid(gate([h_r; h_star])), one gate vector per position.
Tensor transfer_gate(const Linear& gate, const Tensor& h_r, const Tensor& h_star);

struct DecoderParams {
  EmbeddingTable embedding;  // tied output projection
  Tensor positions;          // [max_len x d]
  std::vector<DecoderLayerParams> layers;
  LayerNormParams final_norm;  // applied before the tied projection
  Tensor output_bias;          // [V]
  std::size_t max_len() const { return positions.extent(0); }
};

DecoderParams make_decoder(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                           const EmbeddingTable& embedding, std::size_t max_len, Rng& rng);

struct DecoderOptions {
  // false: one plain cross-attention over both memories plus a residual
  // FFN instead of the gated transfer.
  bool gated_transfer = true;
};

// Teacher-forced logits [L x V] for every position of `tokens` (which start
// with <s>); row t scores token t+1.
Tensor decode(const DecoderParams& params, std::span<const int> tokens, const Tensor& h_c_i, const Tensor& h_i_c,
              const DecoderOptions& options = {});
// Distribution over the next token given the prefix.
std::vector<double> decode_step(const DecoderParams& params, std::span<const int> prefix, const Tensor& h_c_i,
                                const Tensor& h_i_c, const DecoderOptions& options = {});

// Mean over non-pad gold positions of (1-eps)*NLL(gold) + eps*mean_v NLL(v).
Tensor generation_loss(const Tensor& logits, std::span<const int> gold, double smoothing = 0.1);
Tensor generative_total(const Tensor& gen, const Tensor& preservation, double lambda2 = 0.1);

struct BeamHypothesis {
  std::vector<int> tokens;  // excludes <s>; includes </s> when finished
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamOptions {
  std::size_t beam = 3;
  std::size_t max_len = 20;
  int bos = 1;
  int eos = 2;
};

// Log-probabilities of the next token for each prefix (prefixes start with bos).
using NextTokenScorer = std::function<std::vector<std::vector<double>>(const std::vector<std::vector<int>>&)>;

// Cumulative log-probability, no length penalty. Hypotheses end at eos or
// after max_len tokens; ties prefer the lexicographically smaller sequence.
BeamHypothesis beam_search(const NextTokenScorer& scorer, const BeamOptions& options);

}  // namespace zrigf
