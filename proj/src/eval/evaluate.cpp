#include "zrigf/evaluate.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "zrigf/error.hpp"
#include "zrigf/log.hpp"

namespace zrigf {

namespace {

using nlohmann::json;

const std::string kZeroImage = "__zero__";

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
}

std::vector<std::string> random_ids(const std::vector<std::string>& pool, const std::vector<std::string>& exclude,
                                    std::size_t k, Rng rng) {
  std::vector<std::string> candidates;
  for (const auto& id : pool) {
    if (std::find(exclude.begin(), exclude.end(), id) == exclude.end()) candidates.push_back(id);
  }
  if (candidates.size() < k) {
    throw BoundedIndexError("random images: need " + std::to_string(k) + " ids outside the retrieved set, pool has " +
                            std::to_string(candidates.size()));
  }
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(candidates[i], candidates[i + rng.uniform_index(candidates.size() - i)]);
  }
  candidates.resize(k);
  return candidates;
}

}  // namespace

std::string MetricReport::to_json() const {
  json j = {{"condition", condition},
            {"ppl", number_or_null(ppl)},
            {"bleu1", bleu1},
            {"rouge_l", rouge_l},
            {"average", average},
            {"extrema", extrema},
            {"greedy", greedy},
            {"dist1", dist1},
            {"dist2", dist2},
            {"concept_accuracy", concept_accuracy},
            {"examples", examples},
            {"concept_examples", concept_examples},
            {"flagged", flagged}};
  return j.dump();
}

std::string MetricReport::csv_header() {
  return "condition,ppl,bleu1,rouge_l,average,extrema,greedy,dist1,dist2,concept_accuracy,examples,concept_examples,"
         "flagged";
}

std::string MetricReport::csv_row() const {
  std::ostringstream out;
  out.precision(17);
  out << condition << ',' << ppl << ',' << bleu1 << ',' << rouge_l << ',' << average << ',' << extrema << ','
      << greedy << ',' << dist1 << ',' << dist2 << ',' << concept_accuracy << ',' << examples << ','
      << concept_examples << ',' << flagged;
  return out.str();
}

std::string condition_name(ImageCondition c) {
  switch (c) {
    case ImageCondition::kRetrieved: return "retrieved";
    case ImageCondition::kNone: return "none";
    case ImageCondition::kRandom: return "random";
  }
  return "?";
}

std::string GenerationRecord::to_json() const {
  return json{{"context", context}, {"generated", generated}, {"image_ids", image_ids}, {"scores", scores}}.dump();
}

double perplexity(const ModelBundle& model, const std::vector<DialogueSample>& samples, const ImageBank& images,
                  const ModuleToggles& toggles) {
  if (samples.empty()) throw ContractError("perplexity: empty corpus");
  NoGradGuard no_grad;
  std::vector<double> nll;
  std::size_t tokens = 0;
  const StageTwoOptions opts{0.0, 0.0, toggles};
  for (const auto& s : samples) {
    const StageTwoLoss loss = generative_batch_loss(model, std::span(&s, 1), images, opts);
    nll.push_back(loss.generation.item() * static_cast<double>(loss.tokens));
    tokens += loss.tokens;
  }
  if (tokens == 0) throw ContractError("perplexity: no gold tokens");
  return std::exp(pairwise_sum(nll) / static_cast<double>(tokens));
}

Evaluation evaluate_dialogues(const TrainConfig& config, const ModelBundle& model,
                              const std::vector<DialogueExample>& corpus, const ImageBank& images,
                              ImageCondition condition, const std::vector<std::string>& random_pool,
                              std::uint64_t seed) {
  if (corpus.empty()) throw ContractError("evaluate: empty corpus");
  PrecisionScope precision(parse_precision(config.precision));
  ImageBank bank = images;
  const auto& cfg = model.config;
  if (!bank.contains(kZeroImage)) bank.add(kZeroImage, Tensor::zeros({cfg.channels, cfg.image_size, cfg.image_size}));
  const Rng root(seed);

  Evaluation out;
  std::vector<DialogueSample> samples;
  std::vector<Words> candidates, generated;
  std::vector<std::vector<Words>> references;
  std::vector<double> rouge, average, extrema, greedy;
  std::size_t concept_hits = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& d = corpus[i];
    const std::size_t line = d.line ? d.line : i + 1;
    if (d.image_ids.empty()) throw IngestionError("example at line " + std::to_string(line) + " has no image_ids");
    std::vector<std::string> ids;
    switch (condition) {
      case ImageCondition::kRetrieved: ids = d.image_ids; break;
      case ImageCondition::kNone: ids.assign(d.image_ids.size(), kZeroImage); break;
      case ImageCondition::kRandom:
        ids = random_ids(random_pool.empty() ? images.ids() : random_pool, d.image_ids, d.image_ids.size(),
                         root.split(i));
        break;
    }
    std::vector<Tensor> pixels;
    for (const auto& id : ids) pixels.push_back(bank.get(id));
    const ResponseResult r = generate_with_images(config, model, d.context, pixels);

    GenerationRecord rec{d.context, r.text, condition == ImageCondition::kNone ? std::vector<std::string>{} : ids, {}};
    out.generations.push_back(rec);
    samples.push_back({encode_turns(model.vocab, d.context), encode_sentence(model.vocab, d.response), ids});

    const Words cand = metric_tokens(r.text), gold = metric_tokens(d.response);
    candidates.push_back(cand);
    references.push_back({gold});
    generated.push_back(cand);
    bool flagged = false;
    rouge.push_back(rouge_l(cand, gold, &flagged));
    const EmbeddingScores e = embedding_metrics(cand, gold, model.vocab, model.word_embedding);
    flagged = flagged || e.flagged;
    average.push_back(e.average);
    extrema.push_back(e.extrema);
    greedy.push_back(e.greedy);
    if (flagged) ++out.report.flagged;
    if (const std::string c = extra_string(d, "concept"); !c.empty()) {
      ++out.report.concept_examples;
      if (names_concept(r.text, c)) ++concept_hits;
    }
  }

  MetricReport& rep = out.report;
  rep.condition = condition_name(condition);
  rep.examples = corpus.size();
  rep.ppl = perplexity(model, samples, bank, config.toggles);
  rep.bleu1 = bleu1(candidates, references);
  rep.rouge_l = mean_of(rouge);
  rep.average = mean_of(average);
  rep.extrema = mean_of(extrema);
  rep.greedy = mean_of(greedy);
  rep.dist1 = distinct_n(generated, 1);
  rep.dist2 = distinct_n(generated, 2);
  rep.concept_accuracy =
      rep.concept_examples ? static_cast<double>(concept_hits) / static_cast<double>(rep.concept_examples) : 0.0;
  log_event("evaluate", {{"condition", rep.condition},
                         {"examples", std::to_string(rep.examples)},
                         {"concept_accuracy", log_number(rep.concept_accuracy)},
                         {"bleu1", log_number(rep.bleu1)}});
  return out;
}

TrainedPipeline train_pipeline(const TrainConfig& config, const PipelineData& data) {
  TrainedPipeline out;
  out.model = make_model(config.model, data.vocab, config.seed);
  const auto pairs = make_pair_samples(data.vocab, data.pairs, data.images);
  StageResult s1 = run_contrastive_stage(config, out.model, pairs);
  out.stage1 = std::move(s1.checkpoint);
  out.stage1_log = std::move(s1.log);
  out.retriever = restore_model(out.stage1);

  std::vector<DialogueExample> annotated;
  {
    PrecisionScope precision(parse_precision(config.precision));
    std::vector<std::pair<std::string, Tensor>> to_index;
    for (const auto& id : data.index_ids.empty() ? data.images.ids() : data.index_ids) {
      to_index.emplace_back(id, data.images.get(id));
    }
    out.index = build_index(out.retriever, to_index);
    annotated = precompute_corpus_retrievals(out.index, out.retriever, data.dialogues, config.top_k,
                                             RetrievalMode::kContextResponse);
  }
  log_event("pipeline.annotated", {{"examples", std::to_string(annotated.size())}});

  const auto dialogues = make_dialogue_samples(data.vocab, annotated, data.images);
  StageResult s2 = run_generative_stage(config, out.model, dialogues, data.images);
  out.stage2 = std::move(s2.checkpoint);
  out.stage2_log = std::move(s2.log);
  return out;
}

ModelBundle train_no_image_baseline(const TrainConfig& config, const TrainedPipeline& trained,
                                    const PipelineData& data) {
  ModelBundle model = restore_model(trained.stage1);
  const auto& cfg = model.config;
  ImageBank bank;
  bank.add(kZeroImage, Tensor::zeros({cfg.channels, cfg.image_size, cfg.image_size}));
  std::vector<DialogueExample> blank = data.dialogues;
  for (auto& d : blank) d.image_ids.assign(config.top_k, kZeroImage);
  log_event("baseline.train", {{"examples", std::to_string(blank.size())}});
  run_generative_stage(config, model, make_dialogue_samples(data.vocab, blank, bank), bank);
  return model;
}

}  // namespace zrigf
