#pragma once

#include <string>
#include <vector>

#include "zrigf/evaluate.hpp"

namespace zrigf {

enum class AblationMode { kIrrelevantImages, kVaryK, kDisableModule };
AblationMode parse_ablation_mode(const std::string& text);
std::string ablation_mode_name(AblationMode mode);

struct AblationConfig {
  AblationMode mode = AblationMode::kIrrelevantImages;
  std::vector<std::size_t> ks = {1, 3, 5};
  std::vector<std::string> modules = {"tim", "tamim", "mf", "it"};
  std::uint64_t seed = 0;
};

ModuleToggles disable_module(ModuleToggles toggles, const std::string& module);

// irrelevant-images: retrieved and random-image reports for the trained
// model, plus the no-image report of a baseline trained on zeroed images.
// vary-k: one report per k, retrieving context-only with the retriever.
// disable-module: retrains the whole pipeline once per module with that
// module switched off and reports each.
std::vector<MetricReport> run_ablation(const AblationConfig& ablation, const TrainConfig& config,
                                       const TrainedPipeline& trained, const PipelineData& data,
                                       const std::vector<DialogueExample>& eval_corpus);

}  // namespace zrigf
