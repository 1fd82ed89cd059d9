#include "zrigf/ablation.hpp"

#include "zrigf/error.hpp"
#include "zrigf/log.hpp"

namespace zrigf {

AblationMode parse_ablation_mode(const std::string& text) {
  if (text == "irrelevant-images") return AblationMode::kIrrelevantImages;
  if (text == "vary-k") return AblationMode::kVaryK;
  if (text == "disable-module") return AblationMode::kDisableModule;
  throw ConfigError("unknown ablation mode '" + text + "'");
}

std::string ablation_mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::kIrrelevantImages: return "irrelevant-images";
    case AblationMode::kVaryK: return "vary-k";
    case AblationMode::kDisableModule: return "disable-module";
  }
  return "?";
}

ModuleToggles disable_module(ModuleToggles toggles, const std::string& module) {
  if (module == "tim") {
    toggles.tim = false;
  } else if (module == "tamim") {
    toggles.tamim = false;
  } else if (module == "mf") {
    toggles.mf = false;
  } else if (module == "it") {
    toggles.it = false;
  } else {
    throw ConfigError("unknown module '" + module + "'");
  }
  return toggles;
}

namespace {

std::vector<DialogueExample> retrieve_for(const TrainConfig& config, const TrainedPipeline& trained,
                                          const std::vector<DialogueExample>& corpus, std::size_t k) {
  PrecisionScope precision(parse_precision(config.precision));
  return precompute_corpus_retrievals(trained.index, trained.retriever, corpus, k, RetrievalMode::kContextOnly);
}

}  // namespace

std::vector<MetricReport> run_ablation(const AblationConfig& ablation, const TrainConfig& config,
                                       const TrainedPipeline& trained, const PipelineData& data,
                                       const std::vector<DialogueExample>& eval_corpus) {
  std::vector<MetricReport> reports;
  switch (ablation.mode) {
    case AblationMode::kIrrelevantImages: {
      const auto corpus = retrieve_for(config, trained, eval_corpus, config.top_k);
      const ModelBundle baseline = train_no_image_baseline(config, trained, data);
      for (auto c : {ImageCondition::kRetrieved, ImageCondition::kNone, ImageCondition::kRandom}) {
        const ModelBundle& model = c == ImageCondition::kNone ? baseline : trained.model;
        reports.push_back(
            evaluate_dialogues(config, model, corpus, data.images, c, trained.index.ids(), ablation.seed).report);
      }
      break;
    }
    case AblationMode::kVaryK: {
      for (auto k : ablation.ks) {
        if (k > trained.index.size()) {
          throw BoundedIndexError("k=" + std::to_string(k) + " exceeds index size " +
                                  std::to_string(trained.index.size()));
        }
      }
      for (auto k : ablation.ks) {
        auto report = evaluate_dialogues(config, trained.model, retrieve_for(config, trained, eval_corpus, k),
                                         data.images)
                          .report;
        report.condition = "k=" + std::to_string(k);
        reports.push_back(report);
      }
      break;
    }
    case AblationMode::kDisableModule: {
      for (const auto& module : ablation.modules) {
        TrainConfig variant = config;
        variant.toggles = disable_module(config.toggles, module);
        log_event("ablate.retrain", {{"disabled", module}});
        const TrainedPipeline retrained = train_pipeline(variant, data);
        auto report = evaluate_dialogues(variant, retrained.model,
                                         retrieve_for(variant, retrained, eval_corpus, variant.top_k), data.images)
                          .report;
        report.condition = "-" + module;
        reports.push_back(report);
      }
      break;
    }
  }
  return reports;
}

}  // namespace zrigf
