#pragma once

#include <string>
#include <vector>

#include "zrigf/metrics.hpp"
#include "zrigf/training.hpp"

namespace zrigf {

struct MetricReport {
  std::string condition;
  double ppl = 0.0;
  double bleu1 = 0.0;
  double rouge_l = 0.0;
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  double dist1 = 0.0;
  double dist2 = 0.0;
  double concept_accuracy = 0.0;  // over examples that carry a "concept" field
  std::size_t examples = 0;
  std::size_t concept_examples = 0;
  std::size_t flagged = 0;

  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

// Which images ground each example at evaluation time.
enum class ImageCondition {
  kRetrieved,  // the example's image_ids
  kNone,       // the same number of all-zero images
  kRandom,     // seeded uniform draws from the pool, never one of the retrieved ids
};
std::string condition_name(ImageCondition c);

struct GenerationRecord {
  std::vector<std::string> context;
  std::string generated;
  std::vector<std::string> image_ids;
  std::vector<double> scores;
  std::string to_json() const;  // {"context","generated","image_ids","scores"}
};

struct Evaluation {
  MetricReport report;
  std::vector<GenerationRecord> generations;
};

// exp of the unsmoothed generation loss over every non-pad gold token.
double perplexity(const ModelBundle& model, const std::vector<DialogueSample>& samples, const ImageBank& images,
                  const ModuleToggles& toggles = {});

// Generates for every example (which must carry image_ids) and scores the
// generations against the gold responses.
Evaluation evaluate_dialogues(const TrainConfig& config, const ModelBundle& model,
                              const std::vector<DialogueExample>& corpus, const ImageBank& images,
                              ImageCondition condition = ImageCondition::kRetrieved,
                              const std::vector<std::string>& random_pool = {}, std::uint64_t seed = 0);

// Inputs of a complete two-stage run.
struct PipelineData {
  Vocabulary vocab;
  std::vector<PairRecord> pairs;
  std::vector<DialogueExample> dialogues;  // unannotated training dialogues
  ImageBank images;
  std::vector<std::string> index_ids;      // images to index; empty = every image
};

struct TrainedPipeline {
  ModelBundle retriever;  // stage-1 model, used for every retrieval
  ModelBundle model;      // stage-2 model
  ImageIndex index;
  Checkpoint stage1;
  Checkpoint stage2;
  std::vector<StepRecord> stage1_log;
  std::vector<StepRecord> stage2_log;
};

// Stage 1, index build, one-shot annotation (context + response), stage 2.
TrainedPipeline train_pipeline(const TrainConfig& config, const PipelineData& data);

// Text-only reference model: stage 2 from the same stage-1 weights, with
// every training image replaced by zeros. Evaluate it under kNone.
ModelBundle train_no_image_baseline(const TrainConfig& config, const TrainedPipeline& trained,
                                    const PipelineData& data);

}  // namespace zrigf
