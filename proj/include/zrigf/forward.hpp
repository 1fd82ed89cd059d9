#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "zrigf/model.hpp"

namespace zrigf {

// Pixel tensors [3 x H x W] keyed by image id.
class ImageBank {
 public:
  void add(const std::string& id, Tensor pixels);
  const Tensor& get(const std::string& id) const;
  bool contains(const std::string& id) const { return images_.contains(id); }
  std::size_t size() const { return images_.size(); }
  std::vector<std::string> ids() const;  // ascending

 private:
  std::map<std::string, Tensor> images_;
};

struct PairSample {
  Tensor pixels;
  std::vector<int> caption;  // <s> ... </s>
};

struct StageOneOptions {
  double lambda1 = 0.2;
  ModuleToggles toggles;
};

struct StageOneLoss {
  ContrastiveLosses losses;
  Tensor sims;  // [n x n], images along rows
  bool recon_empty = false;
};

// Matching loss over the batch plus the mean masked reconstruction loss;
// masks[i] applies to samples[i].
StageOneLoss contrastive_batch_loss(const ModelBundle& model, std::span<const PairSample> samples,
                                    std::span<const MaskSpec> masks, const StageOneOptions& options);

struct DialogueSample {
  std::vector<int> context;   // <s> turn <sep> turn </s>
  std::vector<int> response;  // <s> ... </s>
  std::vector<std::string> image_ids;
};

struct StageTwoOptions {
  double lambda2 = 0.1;
  double smoothing = 0.1;
  ModuleToggles toggles;
};

struct StageTwoLoss {
  Tensor generation;
  Tensor preservation;
  Tensor total;
  std::size_t tokens = 0;
};

StageTwoLoss generative_batch_loss(const ModelBundle& model, std::span<const DialogueSample> samples,
                                   const ImageBank& images, const StageTwoOptions& options);

// Decoder memories for one context and its k images.
struct GroundedContext {
  Tensor h_c_i;
  Tensor h_i_c;
  Tensor alpha;  // [k]; undefined when fusion is disabled
};

GroundedContext ground_context(const ModelBundle& model, const HiddenState& context, const Tensor& context_pooled,
                               std::span<const Tensor> image_states, const Tensor& image_pooled,
                               const ModuleToggles& toggles);

// Decoder input/target pair for teacher forcing, truncated to the decoder length.
std::pair<std::vector<int>, std::vector<int>> teacher_forcing_pair(const ModelBundle& model,
                                                                   std::span<const int> response);

struct GeneratedResponse {
  std::vector<int> tokens;
  std::string text;
  double log_prob = 0.0;
  std::vector<double> alpha;
};

GeneratedResponse generate_tokens(const ModelBundle& model, std::span<const int> context,
                                  std::span<const Tensor> image_pixels, const BeamOptions& beam,
                                  const ModuleToggles& toggles);

}  // namespace zrigf
