#include <limits>

#include "zrigf/error.hpp"
#include "zrigf/nn.hpp"

namespace zrigf {

Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                   const std::string& group, Rng& rng, bool bias) {
  Linear l;
  l.weight = store.create(name + ".weight", {in, out}, Init::kNormal, group, rng);
  if (bias) l.bias = store.create(name + ".bias", {out}, Init::kZeros, group, rng);
  return l;
}

LayerNormParams make_layer_norm(ParameterStore& store, const std::string& name, std::size_t width,
                                const std::string& group, Rng& rng) {
  return {store.create(name + ".gain", {width}, Init::kOnes, group, rng),
          store.create(name + ".bias", {width}, Init::kZeros, group, rng)};
}

AttentionParams make_attention(ParameterStore& store, const std::string& name, std::size_t d_model,
                               std::size_t heads, const std::string& group, Rng& rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError(name + ": d_model " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  AttentionParams a;
  a.query = make_linear(store, name + ".query", d_model, d_model, group, rng);
  // No key bias: it shifts every score of a query equally, so softmax ignores it.
  a.key = make_linear(store, name + ".key", d_model, d_model, group, rng, false);
  a.value = make_linear(store, name + ".value", d_model, d_model, group, rng);
  a.output = make_linear(store, name + ".output", d_model, d_model, group, rng);
  a.heads = heads;
  return a;
}

FeedForwardParams make_feed_forward(ParameterStore& store, const std::string& name, std::size_t d_model,
                                    std::size_t d_ff, const std::string& group, Rng& rng) {
  return {make_linear(store, name + ".up", d_model, d_ff, group, rng),
          make_linear(store, name + ".down", d_ff, d_model, group, rng)};
}

TransformerBlockParams make_transformer_block(ParameterStore& store, const std::string& name,
                                              std::size_t d_model, std::size_t d_ff, std::size_t heads,
                                              const std::string& group, Rng& rng) {
  TransformerBlockParams b;
  b.attn_norm = make_layer_norm(store, name + ".attn_norm", d_model, group, rng);
  b.attention = make_attention(store, name + ".attn", d_model, heads, group, rng);
  b.ffn_norm = make_layer_norm(store, name + ".ffn_norm", d_model, group, rng);
  b.ffn = make_feed_forward(store, name + ".ffn", d_model, d_ff, group, rng);
  return b;
}

Tensor causal_mask(std::size_t length) {
  std::vector<double> m(length * length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    for (std::size_t j = i + 1; j < length; ++j) m[i * length + j] = -std::numeric_limits<double>::infinity();
  }
  return Tensor::from_data({length, length}, std::move(m));
}

Tensor key_padding_mask(std::size_t queries, std::span<const bool> key_is_padding) {
  const std::size_t keys = key_is_padding.size();
  std::vector<double> m(queries * keys, 0.0);
  for (std::size_t i = 0; i < queries; ++i) {
    for (std::size_t j = 0; j < keys; ++j) {
      if (key_is_padding[j]) m[i * keys + j] = -std::numeric_limits<double>::infinity();
    }
  }
  return Tensor::from_data({queries, keys}, std::move(m));
}

Tensor feed_forward(const FeedForwardParams& params, const Tensor& x) { return params.down(gelu(params.up(x))); }

Tensor transformer_block(const TransformerBlockParams& params, const Tensor& q_src, const Tensor& kv_src,
                         const Tensor& mask) {
  if (q_src.rank() != 2 || kv_src.rank() != 2 || q_src.extent(1) != kv_src.extent(1)) {
    throw DimensionError("transformer_block: query source " + shape_to_string(q_src.shape()) +
                         " and key/value source " + shape_to_string(kv_src.shape()) + " must share d_model");
  }
  const bool self = q_src.shares_storage_with(kv_src);
  const Tensor q_norm = params.attn_norm(q_src);
  const Tensor kv_norm = self ? q_norm : params.attn_norm(kv_src);
  Tensor h = add(q_src, attention(params.attention, q_norm, kv_norm, mask));
  return add(h, feed_forward(params.ffn, params.ffn_norm(h)));
}

Tensor embed(const EmbeddingTable& table, std::span<const int> ids) {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= table.vocab_size()) {
      throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(table.vocab_size()));
    }
  }
  return gather_rows(table.weight, ids);
}

}  // namespace zrigf
