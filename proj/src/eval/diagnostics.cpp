#include "zrigf/diagnostics.hpp"

#include "zrigf/config.hpp"
#include "zrigf/forward.hpp"

namespace zrigf {

namespace {

Tensor random_image(const ModelConfig& c, Rng& rng) {
  std::vector<double> v(c.channels * c.image_size * c.image_size);
  for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
  return Tensor::from_data({c.channels, c.image_size, c.image_size}, std::move(v));
}

std::vector<int> random_sentence(const Vocabulary& vocab, std::size_t words, Rng& rng) {
  std::vector<int> ids = {kBosId};
  for (std::size_t i = 0; i < words; ++i) {
    ids.push_back(static_cast<int>(kNumSpecialTokens + rng.uniform_index(vocab.size() - kNumSpecialTokens)));
  }
  ids.push_back(kEosId);
  return ids;
}

std::vector<NamedTensor> params_of(const ModelBundle& model, bool trainable_only) {
  std::vector<NamedTensor> out;
  for (const auto& e : model.store.entries()) {
    if (!trainable_only || model.trainable(e.group)) out.push_back({e.name, e.tensor});
  }
  return out;
}

}  // namespace

FullGradCheck run_full_gradcheck(const ModelConfig& config, const FullGradCheckOptions& options) {
  PrecisionScope precision(Precision::kFloat64);
  std::vector<std::string> words;
  for (int i = 0; i < 20; ++i) words.push_back("w" + std::to_string(i));
  const std::vector<std::string> text = {[&] {
    std::string s;
    for (const auto& w : words) s += w + " ";
    return s;
  }()};
  ModelBundle model = make_model(config, Vocabulary::build(text), options.seed);
  Rng rng = Rng(options.seed).split(99);
  if (options.init_stddev > 0.0) {
    for (const auto& e : model.store.entries()) {
      if (e.name == "temperature.log_tau") continue;
      Tensor t = e.tensor;
      for (double& v : t.mutable_data()) v = rng.normal(0.0, options.init_stddev);
    }
  }

  GradCheckOptions gc;
  gc.max_entries_per_tensor = options.max_entries_per_tensor;
  gc.seed = options.seed;
  FullGradCheck out;

  {
    std::vector<PairSample> pairs;
    std::vector<MaskSpec> masks;
    for (std::size_t i = 0; i < options.batch; ++i) {
      pairs.push_back({random_image(config, rng), random_sentence(model.vocab, 3 + i % 3, rng)});
      masks.push_back(sample_mask(config.patches_per_side(), config.mask_block, 0.4, rng));
    }
    model.frozen_groups = TrainConfig().stage1.frozen_groups();
    const StageOneOptions opts;
    out.contrastive = check_gradients([&] { return contrastive_batch_loss(model, pairs, masks, opts).losses.total; },
                                      params_of(model, true), gc);
  }
  {
    model.frozen_groups.clear();
    ImageBank bank;
    const std::size_t pool = options.batch + options.images_per_dialogue;
    for (std::size_t i = 0; i < pool; ++i) bank.add("img" + std::to_string(i), random_image(config, rng));
    std::vector<DialogueSample> dialogues;
    for (std::size_t i = 0; i < options.batch; ++i) {
      DialogueSample d;
      d.context = random_sentence(model.vocab, 4, rng);
      d.response = random_sentence(model.vocab, 2 + i % 3, rng);
      for (std::size_t j = 0; j < options.images_per_dialogue; ++j) d.image_ids.push_back("img" + std::to_string(i + j));
      dialogues.push_back(std::move(d));
    }
    const StageTwoOptions opts;
    out.generative = check_gradients([&] { return generative_batch_loss(model, dialogues, bank, opts).total; },
                                     params_of(model, false), gc);
  }
  return out;
}

}  // namespace zrigf
