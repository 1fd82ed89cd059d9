#include "zrigf/training.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "zrigf/error.hpp"
#include "zrigf/log.hpp"

namespace zrigf {

namespace {

// RNG streams under the config seed.
constexpr std::uint64_t kStageOneOrder = 11;
constexpr std::uint64_t kStageOneMasks = 12;
constexpr std::uint64_t kStageTwoOrder = 21;

std::vector<std::size_t> epoch_order(std::size_t n, Rng rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

std::vector<NamedTensor> trainable_params(const ModelBundle& model) {
  std::vector<NamedTensor> out;
  for (const auto& e : model.store.entries()) {
    if (model.trainable(e.group)) out.push_back({e.name, e.tensor});
  }
  return out;
}

struct StageLoop {
  const TrainConfig& config;
  const StageConfig& stage;
  ModelBundle& model;
  std::size_t corpus_size;
  const RunOptions& options;
  std::string name;

  // step_fn(step, batch indices) -> (loss tensor, first, second)
  template <typename StepFn>
  StageResult run(std::uint64_t order_stream, StepFn&& step_fn) {
    if (corpus_size == 0) throw ConfigError(name + ": empty corpus");
    PrecisionScope precision(parse_precision(config.precision));
    const Rng root(config.seed);
    const std::size_t per_epoch = (corpus_size + stage.batch_size - 1) / stage.batch_size;
    StageResult result;
    result.total_steps = stage_steps(stage, corpus_size);

    AdamState adam;
    std::size_t start = 0;
    if (options.resume) {
      if (options.resume->stage != name) {
        throw FormatError("cannot resume " + name + " from a " + options.resume->stage + " checkpoint");
      }
      load_parameters(*options.resume, model);
      adam = options.resume->optimizer;
      start = options.resume->step;
    }
    const auto params = trainable_params(model);
    const AdamOptions adam_options{config.beta1, config.beta2, config.adam_eps, stage.weight_decay};

    std::size_t done = start;
    std::vector<std::size_t> order;
    std::size_t order_epoch = static_cast<std::size_t>(-1);
    for (std::size_t step = start; step < result.total_steps; ++step) {
      if (options.stop_after && step >= options.stop_after) break;
      const std::size_t epoch = step / per_epoch;
      if (epoch != order_epoch) {
        order = epoch_order(corpus_size, root.split(order_stream).split(epoch));
        order_epoch = epoch;
      }
      const std::size_t slot = step % per_epoch;
      const std::size_t begin = slot * stage.batch_size;
      const std::size_t end = std::min(begin + stage.batch_size, corpus_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));

      model.store.zero_grad();
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      const Tensor loss = step_fn(step, batch, rec);
      rec.loss = loss.item();
      if (loss.requires_grad()) loss.backward();
      rec.grad_norm = clip_grad_norm(params, config.clip_norm);
      rec.lr = lr_schedule(step + 1, result.total_steps, config.warmup_fraction, stage.lr);
      adamw_step(params, adam, rec.lr, adam_options);
      if (model.trainable("temperature")) clamp_log_tau(model.log_tau);
      if (options.on_step) options.on_step(rec);
      if (step % 10 == 0 || step + 1 == result.total_steps) {
        log_event(name + ".step", {{"step", std::to_string(step)},
                                   {"epoch", std::to_string(epoch)},
                                   {"loss", log_number(rec.loss)},
                                   {"a", log_number(rec.first)},
                                   {"b", log_number(rec.second)},
                                   {"lr", log_number(rec.lr)}});
      }
      result.log.push_back(rec);
      done = step + 1;
    }
    model.store.zero_grad();
    result.checkpoint = capture_checkpoint(name, config, model, adam, done, root.state());
    return result;
  }
};

}  // namespace

ImageBank load_image_bank(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IngestionError("image directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  ImageBank bank;
  for (const auto& f : files) bank.add(f.stem().string(), image_to_tensor(read_ppm(f)));
  return bank;
}

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Vocabulary::from_words(std::move(words));
}

std::vector<PairSample> make_pair_samples(const Vocabulary& vocab, const std::vector<PairRecord>& pairs,
                                          const ImageBank& images) {
  std::vector<PairSample> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!images.contains(pairs[i].image)) {
      throw IngestionError("pair at line " + std::to_string(i + 1) + ": unknown image '" + pairs[i].image + "'");
    }
    out.push_back({images.get(pairs[i].image), encode_sentence(vocab, pairs[i].caption)});
  }
  return out;
}

std::vector<DialogueSample> make_dialogue_samples(const Vocabulary& vocab, const std::vector<DialogueExample>& corpus,
                                                  const ImageBank& images) {
  std::vector<DialogueSample> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& d = corpus[i];
    const std::size_t line = d.line ? d.line : i + 1;
    if (d.image_ids.empty()) {
      throw IngestionError("dialogue at line " + std::to_string(line) + " has no image_ids; annotate the corpus first");
    }
    for (const auto& id : d.image_ids) {
      if (!images.contains(id)) {
        throw IngestionError("dialogue at line " + std::to_string(line) + ": unknown image '" + id + "'");
      }
    }
    out.push_back({encode_turns(vocab, d.context), encode_sentence(vocab, d.response), d.image_ids});
  }
  return out;
}

std::size_t stage_steps(const StageConfig& stage, std::size_t corpus_size) {
  const std::size_t per_epoch = (corpus_size + stage.batch_size - 1) / stage.batch_size;
  const std::size_t total = per_epoch * stage.epochs;
  return stage.max_steps ? std::min(total, stage.max_steps) : total;
}

StageResult run_contrastive_stage(const TrainConfig& config, ModelBundle& model, const std::vector<PairSample>& corpus,
                                  const RunOptions& options) {
  config.validate();
  model.frozen_groups = config.stage1.frozen_groups();
  // A disabled module keeps its parameters at their initial values.
  if (!config.toggles.tim) model.frozen_groups.insert({"projection", "temperature"});
  if (!config.toggles.tamim) model.frozen_groups.insert("tamim");

  const Rng root(config.seed);
  StageLoop loop{config, config.stage1, model, corpus.size(), options, "contrastive"};
  return loop.run(kStageOneOrder, [&](std::size_t step, const std::vector<std::size_t>& batch, StepRecord& rec) {
    std::vector<PairSample> samples;
    std::vector<MaskSpec> masks;
    const Rng mask_root = root.split(kStageOneMasks).split(step);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      samples.push_back(corpus[batch[j]]);
      Rng r = mask_root.split(j);
      masks.push_back(sample_mask(model.config.patches_per_side(), model.config.mask_block, config.mask_ratio, r));
    }
    StageOneOptions opts{config.lambda1, config.toggles};
    // A one-sample batch has no negatives to contrast against.
    if (samples.size() < 2) opts.toggles.tim = false;
    const StageOneLoss loss = contrastive_batch_loss(model, samples, masks, opts);
    rec.first = loss.losses.match.item();
    rec.second = loss.losses.recon.item();
    return loss.losses.total;
  });
}

StageResult run_generative_stage(const TrainConfig& config, ModelBundle& model,
                                 const std::vector<DialogueSample>& corpus, const ImageBank& images,
                                 const RunOptions& options) {
  config.validate();
  model.frozen_groups = config.stage2.frozen_groups();
  StageLoop loop{config, config.stage2, model, corpus.size(), options, "generative"};
  const StageTwoOptions opts{config.lambda2, config.label_smoothing, config.toggles};
  return loop.run(kStageTwoOrder, [&](std::size_t, const std::vector<std::size_t>& batch, StepRecord& rec) {
    std::vector<DialogueSample> samples;
    for (auto i : batch) samples.push_back(corpus[i]);
    const StageTwoLoss loss = generative_batch_loss(model, samples, images, opts);
    rec.first = loss.generation.item();
    rec.second = loss.preservation.item();
    return loss.total;
  });
}

ResponseResult generate_with_images(const TrainConfig& config, const ModelBundle& model,
                                    const std::vector<std::string>& context, const std::vector<Tensor>& pixels) {
  PrecisionScope precision(parse_precision(config.precision));
  BeamOptions beam;
  beam.beam = config.beam;
  beam.max_len = config.max_generate_len;
  const auto tokens = encode_turns(model.vocab, context);
  const GeneratedResponse g = generate_tokens(model, tokens, pixels, beam, config.toggles);
  ResponseResult r;
  r.text = g.text;
  r.tokens = g.tokens;
  r.log_prob = g.log_prob;
  return r;
}

ResponseResult generate_response(const TrainConfig& config, const ModelBundle& model, const ImageIndex& index,
                                 const ImageBank& images, const std::vector<std::string>& context, std::size_t k) {
  DialogueExample query;
  query.context = context;
  const RetrievalResult retrieved = [&] {
    PrecisionScope precision(parse_precision(config.precision));
    return retrieve_top_k(index, model, retrieval_query(model.vocab, query, RetrievalMode::kContextOnly), k);
  }();
  std::vector<Tensor> pixels;
  for (const auto& r : retrieved.ranked) pixels.push_back(images.get(r.id));
  ResponseResult out = generate_with_images(config, model, context, pixels);
  for (const auto& r : retrieved.ranked) {
    out.image_ids.push_back(r.id);
    out.scores.push_back(r.score);
  }
  return out;
}

}  // namespace zrigf
