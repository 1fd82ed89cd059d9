#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zrigf/checkpoint.hpp"
#include "zrigf/corpus.hpp"
#include "zrigf/forward.hpp"
#include "zrigf/retrieval.hpp"

namespace zrigf {

// Every <id>.ppm under dir, keyed by file stem.
ImageBank load_image_bank(const std::filesystem::path& dir);

Vocabulary read_vocabulary(const std::filesystem::path& path);

// Pair records name images by id in the bank; unknown ids raise
// IngestionError with the record's line.
std::vector<PairSample> make_pair_samples(const Vocabulary& vocab, const std::vector<PairRecord>& pairs,
                                          const ImageBank& images);
// Every example must carry image_ids that exist in the bank.
std::vector<DialogueSample> make_dialogue_samples(const Vocabulary& vocab, const std::vector<DialogueExample>& corpus,
                                                  const ImageBank& images);

struct StepRecord {
  std::size_t step = 0;  // 0-based optimizer step
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double first = 0.0;   // matching loss (stage 1) or generation loss (stage 2)
  double second = 0.0;  // reconstruction loss (stage 1) or preservation loss (stage 2)
  double grad_norm = 0.0;
  bool operator==(const StepRecord&) const = default;
};

struct RunOptions {
  const Checkpoint* resume = nullptr;  // continue from this stage checkpoint
  std::size_t stop_after = 0;          // stop once this many steps are done; 0 = run to the end
  std::function<void(const StepRecord&)> on_step;
};

struct StageResult {
  Checkpoint checkpoint;
  std::vector<StepRecord> log;  // steps run by this call
  std::size_t total_steps = 0;  // planned steps for the whole stage
};

std::size_t stage_steps(const StageConfig& stage, std::size_t corpus_size);

// Trains with the stage-1 freeze map and returns a "contrastive" checkpoint.
StageResult run_contrastive_stage(const TrainConfig& config, ModelBundle& model, const std::vector<PairSample>& corpus,
                                  const RunOptions& options = {});

// Trains every non-frozen group on precomputed retrievals; never retrieves.
StageResult run_generative_stage(const TrainConfig& config, ModelBundle& model,
                                 const std::vector<DialogueSample>& corpus, const ImageBank& images,
                                 const RunOptions& options = {});

struct ResponseResult {
  std::string text;
  std::vector<int> tokens;
  double log_prob = 0.0;
  std::vector<std::string> image_ids;
  std::vector<double> scores;
};

// Generation grounded on the given images (empty pixels list = no images).
ResponseResult generate_with_images(const TrainConfig& config, const ModelBundle& model,
                                    const std::vector<std::string>& context, const std::vector<Tensor>& pixels);

// Retrieves the top-k images for the context alone, then generates.
ResponseResult generate_response(const TrainConfig& config, const ModelBundle& model, const ImageIndex& index,
                                 const ImageBank& images, const std::vector<std::string>& context, std::size_t k);

}  // namespace zrigf
