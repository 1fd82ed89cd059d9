#pragma once

#include "zrigf/gradcheck.hpp"
#include "zrigf/model.hpp"

namespace zrigf {

struct FullGradCheckOptions {
  std::size_t batch = 4;
  std::size_t images_per_dialogue = 2;
  std::size_t max_entries_per_tensor = 8;  // 0 = every coordinate
  double init_stddev = 0.1;                // parameters are redrawn at this scale; 0 keeps the model init
  std::uint64_t seed = 0;
};

struct FullGradCheck {
  GradCheckReport contrastive;  // stage-1 loss, parameters trainable in stage 1
  GradCheckReport generative;   // stage-2 loss, every parameter
  double max_rel_error() const { return std::max(contrastive.max_rel_error(), generative.max_rel_error()); }
};

// Central-difference check of both stage losses on random inputs, in binary64.
FullGradCheck run_full_gradcheck(const ModelConfig& config, const FullGradCheckOptions& options = {});

}  // namespace zrigf
