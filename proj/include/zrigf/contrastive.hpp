#pragma once

#include <cstdint>
#include <vector>

#include "zrigf/encoders.hpp"

namespace zrigf {

inline constexpr double kCosineEps = 1e-8;
inline constexpr double kMinLogTau = -4.605170185988091;  // ln 0.01
inline constexpr double kMaxLogTau = 4.605170185988091;   // ln 100

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;  // one of the inputs had norm below kCosineEps
};

CosineResult cosine_similarity(const PooledRepr& a, const PooledRepr& b);
// Differentiable pairwise cosines between the rows of a [n x d] and b [m x d].
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

struct SimilarityMatrix {
  Tensor sims;     // [n x n], images along rows, texts along columns
  Tensor log_tau;  // [1]
};

// Symmetric in-batch InfoNCE: image->text and text->image terms are each
// averaged over the batch, then added.
Tensor clip_loss(const SimilarityMatrix& sims);
void clamp_log_tau(Tensor& log_tau);

struct MaskSpec {
  std::vector<std::uint8_t> keep;  // per patch, 1 = kept, 0 = masked
  std::size_t patches_per_side = 0;
  std::size_t block_size = 1;
  double ratio = 0.0;
  std::size_t masked_count = 0;  // masked patches
};

// Masks round-half-up(ratio * blocks) whole blocks chosen uniformly
// without replacement.
MaskSpec sample_mask(std::size_t patches_per_side, std::size_t block_size, double ratio, Rng& rng);
ImagePatchGrid apply_mask(const ImagePatchGrid& grid, const MaskSpec& mask);
// Differentiable variant over an [N x D] patch matrix.
Tensor apply_mask(const Tensor& patches, const MaskSpec& mask);

struct TamimHeadParams {
  TransformerBlockParams block;  // separate from the fusion blocks
  Tensor kernel;                 // [p*p*3 x d_model x 1 x 1]
  Tensor bias;                   // [p*p*3]
  std::size_t patch_size = 4;
};

TamimHeadParams make_tamim_head(ParameterStore& store, const std::string& group, const EncoderDims& dims,
                                std::size_t patch_size, std::size_t channels, Rng& rng);

// Text-conditioned patch prediction: block(h_I', h_T, h_T), drop the class
// row, 1x1 conv to pixels and pixel-shuffle back to patch layout.
Tensor reconstruct_masked(const TamimHeadParams& params, const HiddenState& masked_image,
                          const HiddenState& text, std::size_t patches_per_side);

struct ReconLoss {
  Tensor value;             // [1]
  bool empty_mask = false;  // nothing masked; value is 0
};

ReconLoss recon_loss(const Tensor& target, const Tensor& prediction, const MaskSpec& mask);

struct ContrastiveLosses {
  Tensor match;
  Tensor recon;
  Tensor total;
  double lambda1 = 0.2;
};

ContrastiveLosses contrastive_total(const Tensor& match, const Tensor& recon, double lambda1 = 0.2);

}  // namespace zrigf
