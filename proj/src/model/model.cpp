#include "zrigf/model.hpp"

#include <cmath>

#include "zrigf/error.hpp"

namespace zrigf {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (patch_size == 0 || image_size % patch_size != 0) fail("image_size must be a multiple of patch_size");
  if (heads == 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (mask_block == 0 || patches_per_side() % mask_block != 0) fail("mask_block must tile the patch grid");
  if (d_shared == 0 || d_ff == 0 || layers == 0) fail("model dimensions must be positive");
  if (max_text_len < 2 || max_response_len < 2) fail("maximum lengths must be at least 2");
  if (!(init_tau > 0.0)) fail("init_tau must be positive");
}

ModelBundle make_model(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed) {
  config.validate();
  ModelBundle m;
  m.config = config;
  m.vocab = std::move(vocab);
  Rng root(seed);
  // One stream per group, so adding parameters to one module does not
  // reshuffle the initialization of the others.
  auto stream = [&](std::size_t i) { return root.split(i + 1); };
  const EncoderDims dims = config.dims();

  Rng r0 = stream(0);
  m.word_embedding = {m.store.create("word_embedding", {m.vocab.size(), config.d_model}, Init::kNormal,
                                     "word_embedding", r0)};
  Rng r1 = stream(1);
  m.image_encoder =
      make_image_encoder(m.store, "image_encoder", dims, config.patch_dim(), config.patch_count(), r1);
  Rng r2 = stream(2);
  m.text_encoder = make_text_encoder(m.store, "text_encoder", dims, m.word_embedding, config.max_text_len, r2);
  Rng r3 = stream(3);
  m.image_projection =
      m.store.create("projection.image", {config.d_model, config.d_shared}, Init::kNormal, "projection", r3);
  m.text_projection =
      m.store.create("projection.text", {config.d_model, config.d_shared}, Init::kNormal, "projection", r3);
  Rng r4 = stream(4);
  m.log_tau = m.store.create("temperature.log_tau", {1}, Init::kZeros, "temperature", r4);
  m.log_tau.mutable_data()[0] = round_to_precision(std::log(config.init_tau));
  Rng r5 = stream(5);
  m.tamim = make_tamim_head(m.store, "tamim", dims, config.patch_size, config.channels, r5);
  Rng r6 = stream(6);
  m.fusion = make_fusion(m.store, "fusion", dims, r6);
  Rng r7 = stream(7);
  m.decoder = make_decoder(m.store, "decoder", dims, m.word_embedding, config.max_response_len, r7);
  return m;
}

HiddenState image_states(const ModelBundle& model, const Tensor& pixels) {
  NoGradGuard no_grad;
  return encode_image(model.image_encoder, patchify(pixels, model.config.patch_size));
}

Tensor image_embedding(const ModelBundle& model, const Tensor& pixels) {
  NoGradGuard no_grad;
  return pool_and_project(image_states(model, pixels), Modality::kImage, model.image_projection).vector;
}

Tensor text_embedding(const ModelBundle& model, std::span<const int> ids) {
  NoGradGuard no_grad;
  const auto enc = encode_text(model.text_encoder, ids);
  return pool_and_project(enc.hidden, Modality::kText, model.text_projection).vector;
}

}  // namespace zrigf
