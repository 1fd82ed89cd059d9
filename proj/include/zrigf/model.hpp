#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "zrigf/contrastive.hpp"
#include "zrigf/generative.hpp"
#include "zrigf/tokenizer.hpp"

namespace zrigf {

struct ModelConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t d_model = 64;
  std::size_t d_shared = 32;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t layers = 2;
  std::size_t max_text_len = 32;
  std::size_t max_response_len = 24;
  std::size_t mask_block = 2;  // in patches
  double init_tau = 0.07;

  std::size_t patches_per_side() const { return image_size / patch_size; }
  std::size_t patch_count() const { return patches_per_side() * patches_per_side(); }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  EncoderDims dims() const { return {d_model, d_ff, heads, layers}; }
  void validate() const;
};

// Ablation switches for the four modules.
struct ModuleToggles {
  bool tim = true;    // matching loss in stage 1
  bool tamim = true;  // masked reconstruction loss in stage 1
  bool mf = true;     // attention pooling plus cross fusion
  bool it = true;     // gated information transfer in the decoder
  bool operator==(const ModuleToggles&) const = default;
};

inline const std::vector<std::string>& parameter_groups() {
  static const std::vector<std::string> groups = {"word_embedding", "image_encoder", "text_encoder", "projection",
                                                  "temperature",    "tamim",         "fusion",       "decoder"};
  return groups;
}

// Every trainable tensor of the framework, owned by one ParameterStore.
// Tensors are handles, so the struct is move-only to keep one owner.
struct ModelBundle {
  ModelConfig config;
  Vocabulary vocab;
  ParameterStore store;
  EmbeddingTable word_embedding;
  ImageEncoderParams image_encoder;
  TextEncoderParams text_encoder;
  Tensor image_projection;  // [d_model x d_shared]
  Tensor text_projection;   // [d_model x d_shared]
  Tensor log_tau;           // [1]
  TamimHeadParams tamim;
  FusionParams fusion;
  DecoderParams decoder;
  std::set<std::string> frozen_groups;

  ModelBundle() = default;
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  bool trainable(const std::string& group) const { return !frozen_groups.contains(group); }
};

ModelBundle make_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);

// No-grad evaluation helpers.
HiddenState image_states(const ModelBundle& model, const Tensor& pixels);
Tensor image_embedding(const ModelBundle& model, const Tensor& pixels);       // [1 x d_shared]
Tensor text_embedding(const ModelBundle& model, std::span<const int> ids);    // [1 x d_shared]

}  // namespace zrigf
