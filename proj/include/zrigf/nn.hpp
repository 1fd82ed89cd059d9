#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "zrigf/ops.hpp"
#include "zrigf/params.hpp"

namespace zrigf {

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], may be undefined
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct FeedForwardParams {
  Linear up;
  Linear down;
};

struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  std::size_t heads = 1;
};

// Pre-norm block: x + attn(norm(x), norm(kv)), then + ffn(norm(.)).
// attn_norm is shared by the query and key/value sources.
struct TransformerBlockParams {
  LayerNormParams attn_norm;
  AttentionParams attention;
  LayerNormParams ffn_norm;
  FeedForwardParams ffn;
};

struct EmbeddingTable {
  Tensor weight;  // [vocab x d_model]
  std::size_t vocab_size() const { return weight.extent(0); }
  std::size_t width() const { return weight.extent(1); }
};

struct PixelShuffleConfig {
  std::size_t upscale_factor = 1;
};

Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                   const std::string& group, Rng& rng, bool bias = true);
LayerNormParams make_layer_norm(ParameterStore& store, const std::string& name, std::size_t width,
                                const std::string& group, Rng& rng);
AttentionParams make_attention(ParameterStore& store, const std::string& name, std::size_t d_model,
                               std::size_t heads, const std::string& group, Rng& rng);
FeedForwardParams make_feed_forward(ParameterStore& store, const std::string& name, std::size_t d_model,
                                    std::size_t d_ff, const std::string& group, Rng& rng);
TransformerBlockParams make_transformer_block(ParameterStore& store, const std::string& name,
                                              std::size_t d_model, std::size_t d_ff, std::size_t heads,
                                              const std::string& group, Rng& rng);

// Additive masks: 0 where attention is allowed, -inf where it is not.
Tensor causal_mask(std::size_t length);
Tensor key_padding_mask(std::size_t queries, std::span<const bool> key_is_padding);

// Multi-head attention with input/output projections.
Tensor attention(const AttentionParams& params, const Tensor& q_src, const Tensor& kv_src,
                 const Tensor& mask = {});
Tensor feed_forward(const FeedForwardParams& params, const Tensor& x);
Tensor transformer_block(const TransformerBlockParams& params, const Tensor& q_src, const Tensor& kv_src,
                         const Tensor& mask = {});

Tensor embed(const EmbeddingTable& table, std::span<const int> ids);

// [C*r*r x H x W] -> [C x H*r x W*r]; out(c, h*r+i, w*r+j) = in(c*r*r + i*r + j, h, w).
Tensor pixel_shuffle(const Tensor& x, const PixelShuffleConfig& cfg);
Tensor pixel_unshuffle(const Tensor& x, const PixelShuffleConfig& cfg);
// 1x1 convolution: x [Cin x H x W], kernel [Cout x Cin x 1 x 1], optional bias [Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias = {});

}  // namespace zrigf
