#include "zrigf/forward.hpp"

#include <algorithm>
#include <memory>
#include <optional>

#include "zrigf/error.hpp"

namespace zrigf {

void ImageBank::add(const std::string& id, Tensor pixels) {
  if (!images_.emplace(id, std::move(pixels)).second) throw IngestionError("duplicate image id '" + id + "'");
}

const Tensor& ImageBank::get(const std::string& id) const {
  const auto it = images_.find(id);
  if (it == images_.end()) throw IngestionError("unknown image id '" + id + "'");
  return it->second;
}

std::vector<std::string> ImageBank::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : images_) out.push_back(id);
  return out;
}

namespace {

// Text states without a graph when the text encoder is frozen.
HiddenState text_states(const ModelBundle& model, std::span<const int> ids) {
  std::optional<NoGradGuard> guard;
  if (!model.trainable("text_encoder") && !model.trainable("word_embedding")) guard.emplace();
  return encode_text(model.text_encoder, ids).hidden;
}

}  // namespace

StageOneLoss contrastive_batch_loss(const ModelBundle& model, std::span<const PairSample> samples,
                                    std::span<const MaskSpec> masks, const StageOneOptions& options) {
  const std::size_t n = samples.size();
  if (masks.size() != n) throw ContractError("contrastive_batch_loss: one mask per sample required");
  const ModelConfig& cfg = model.config;
  std::vector<Tensor> image_pooled, text_pooled, recon_terms;
  StageOneLoss out;
  out.recon_empty = true;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor patches = patchify_tensor(samples[i].pixels, cfg.patch_size);
    const HiddenState text = text_states(model, samples[i].caption);
    if (options.toggles.tim) {
      const HiddenState image = encode_patches(model.image_encoder, patches);
      image_pooled.push_back(pool_and_project(image, Modality::kImage, model.image_projection).vector);
      text_pooled.push_back(pool_and_project(text, Modality::kText, model.text_projection).vector);
    }
    if (options.toggles.tamim) {
      const HiddenState masked = encode_patches(model.image_encoder, apply_mask(patches, masks[i]));
      const Tensor predicted = reconstruct_masked(model.tamim, masked, text, cfg.patches_per_side());
      const ReconLoss r = recon_loss(patches, predicted, masks[i]);
      out.recon_empty = out.recon_empty && r.empty_mask;
      recon_terms.push_back(r.value);
    }
  }
  Tensor match = Tensor::zeros({1});
  if (options.toggles.tim) {
    out.sims = cosine_matrix(concat(image_pooled, 0), concat(text_pooled, 0));
    match = clip_loss({out.sims, model.log_tau});
  }
  Tensor recon = Tensor::zeros({1});
  if (!recon_terms.empty()) recon = mean(concat(recon_terms, 0));
  out.losses = contrastive_total(match, recon, options.lambda1);
  return out;
}

GroundedContext ground_context(const ModelBundle& model, const HiddenState& context, const Tensor& context_pooled,
                               std::span<const Tensor> image_states, const Tensor& image_pooled,
                               const ModuleToggles& toggles) {
  GroundedContext g;
  if (!toggles.mf) {
    g.h_c_i = context.states;
    g.h_i_c = concat(image_states, 0);
    return g;
  }
  FusedStates fused = fuse_images(context_pooled, image_states, image_pooled);
  cross_fuse(model.fusion, fused, context.states);
  g.h_c_i = fused.h_c_i;
  g.h_i_c = fused.h_i_c;
  g.alpha = fused.alpha;
  return g;
}

std::pair<std::vector<int>, std::vector<int>> teacher_forcing_pair(const ModelBundle& model,
                                                                   std::span<const int> response) {
  if (response.size() < 2 || response.front() != kBosId) {
    throw ContractError("response must be <s> ... </s> with at least one token after <s>");
  }
  const std::size_t len = std::min(response.size() - 1, model.decoder.max_len());
  return {std::vector<int>(response.begin(), response.begin() + static_cast<std::ptrdiff_t>(len)),
          std::vector<int>(response.begin() + 1, response.begin() + 1 + static_cast<std::ptrdiff_t>(len))};
}

StageTwoLoss generative_batch_loss(const ModelBundle& model, std::span<const DialogueSample> samples,
                                   const ImageBank& images, const StageTwoOptions& options) {
  // Each distinct image in the batch is encoded once.
  std::vector<std::string> batch_ids;
  for (const auto& s : samples) {
    if (s.image_ids.empty()) throw IngestionError("dialogue sample without image_ids");
    for (const auto& id : s.image_ids) {
      if (std::find(batch_ids.begin(), batch_ids.end(), id) == batch_ids.end()) batch_ids.push_back(id);
    }
  }
  std::vector<Tensor> states, pooled;
  for (const auto& id : batch_ids) {
    const HiddenState h = encode_image(model.image_encoder, patchify(images.get(id), model.config.patch_size));
    states.push_back(h.states);
    pooled.push_back(pool_and_project(h, Modality::kImage, model.image_projection).vector);
  }

  const std::size_t n = samples.size(), m = batch_ids.size();
  std::vector<std::uint8_t> y(n * m, 0);
  std::vector<Tensor> context_pooled, logits;
  std::vector<int> gold;
  for (std::size_t i = 0; i < n; ++i) {
    const HiddenState context = encode_text(model.text_encoder, samples[i].context).hidden;
    context_pooled.push_back(pool_and_project(context, Modality::kText, model.text_projection).vector);
    std::vector<Tensor> own_states, own_pooled;
    for (const auto& id : samples[i].image_ids) {
      const auto j = static_cast<std::size_t>(std::find(batch_ids.begin(), batch_ids.end(), id) - batch_ids.begin());
      y[i * m + j] = 1;
      own_states.push_back(states[j]);
      own_pooled.push_back(pooled[j]);
    }
    const GroundedContext g =
        ground_context(model, context, context_pooled.back(), own_states, concat(own_pooled, 0), options.toggles);
    const auto [input, target] = teacher_forcing_pair(model, samples[i].response);
    logits.push_back(decode(model.decoder, input, g.h_c_i, g.h_i_c, {options.toggles.it}));
    gold.insert(gold.end(), target.begin(), target.end());
  }

  StageTwoLoss out;
  out.generation = generation_loss(concat(logits, 0), gold, options.smoothing);
  out.preservation = preservation_loss(concat(context_pooled, 0), concat(pooled, 0), y);
  out.total = generative_total(out.generation, out.preservation, options.lambda2);
  out.tokens = static_cast<std::size_t>(std::count_if(gold.begin(), gold.end(), [](int t) { return t != kPadId; }));
  return out;
}

GeneratedResponse generate_tokens(const ModelBundle& model, std::span<const int> context,
                                  std::span<const Tensor> image_pixels, const BeamOptions& beam,
                                  const ModuleToggles& toggles) {
  NoGradGuard no_grad;
  if (image_pixels.empty()) throw ContractError("generate_tokens: at least one image is required");
  const HiddenState h_c = encode_text(model.text_encoder, context).hidden;
  const Tensor c_pooled = pool_and_project(h_c, Modality::kText, model.text_projection).vector;
  std::vector<Tensor> states, pooled;
  for (const auto& px : image_pixels) {
    const HiddenState h = encode_image(model.image_encoder, patchify(px, model.config.patch_size));
    states.push_back(h.states);
    pooled.push_back(pool_and_project(h, Modality::kImage, model.image_projection).vector);
  }
  const GroundedContext g = ground_context(model, h_c, c_pooled, states, concat(pooled, 0), toggles);
  const DecoderOptions opts{toggles.it};

  BeamOptions b = beam;
  b.max_len = std::min(b.max_len, model.decoder.max_len());
  NextTokenScorer scorer = [&](const std::vector<std::vector<int>>& prefixes) {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) {
      const Tensor logits = decode(model.decoder, p, g.h_c_i, g.h_i_c, opts);
      out.push_back(log_softmax(slice(logits, 0, p.size() - 1, 1), 1).to_vector());
    }
    return out;
  };
  const BeamHypothesis best = beam_search(scorer, b);

  GeneratedResponse r;
  r.tokens = best.tokens;
  r.text = model.vocab.decode(best.tokens);
  r.log_prob = best.log_prob;
  if (g.alpha.defined()) r.alpha = g.alpha.to_vector();
  return r;
}

}  // namespace zrigf
