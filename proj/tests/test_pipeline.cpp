#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "zrigf/error.hpp"
#include "zrigf/log.hpp"
#include "zrigf/synthetic.hpp"
#include "zrigf/training.hpp"

namespace zrigf {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

struct Quiet {
  Quiet() { set_log_level(LogLevel::kQuiet); }
};
const Quiet quiet;

TEST(TrainConfig, TextRoundTrip) {
  TrainConfig c;
  c.stage1.lr = 1.0 / 3.0;
  c.seed = 12345678901234ULL;
  c.toggles.mf = false;
  c.stage2.freeze = "tamim";
  const TrainConfig back = TrainConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.stage1.lr, 1.0 / 3.0);
  EXPECT_FALSE(back.toggles.mf);
  EXPECT_EQ(back.seed, 12345678901234ULL);
}

TEST(TrainConfig, DefaultsAndFreezeMaps) {
  const TrainConfig c;
  EXPECT_EQ(c.stage1.lr, 2e-5);
  EXPECT_EQ(c.stage1.weight_decay, 0.05);
  EXPECT_EQ(c.stage2.weight_decay, 0.01);
  EXPECT_EQ(c.warmup_fraction, 0.1);
  EXPECT_EQ(c.lambda1, 0.2);
  EXPECT_EQ(c.lambda2, 0.1);
  EXPECT_EQ(c.top_k, 3u);
  EXPECT_EQ(c.mask_ratio, 0.4);
  EXPECT_EQ(c.label_smoothing, 0.1);
  EXPECT_EQ(c.stage1.frozen_groups(),
            (std::set<std::string>{"decoder", "fusion", "text_encoder", "word_embedding"}));
  EXPECT_TRUE(c.stage2.frozen_groups().empty());
}

TEST(TrainConfig, ParseErrors) {
  EXPECT_THROW(TrainConfig::parse("no_such_key=1"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("stage1.lr=abc"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("stage1.lr=0"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("warmup_fraction=1"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("stage1.freeze=decoder,nonsense"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("just a line"), ConfigError);
  const TrainConfig c = TrainConfig::parse("# comment\n  top_k = 5  # trailing\n\nmodule.it=false\n");
  EXPECT_EQ(c.top_k, 5u);
  EXPECT_FALSE(c.toggles.it);
}

Tensor scalar_param(double v) { return Tensor::from_data({1}, {v}, true); }

void set_grad(Tensor& t, double g) {
  t.mutable_grad()[0] = g;
}

TEST(AdamW, FirstStepHandValue) {
  test::F64 f64;
  Tensor theta = scalar_param(1.0);
  set_grad(theta, 1.0);
  AdamState state;
  adamw_step({{"theta", theta}}, state, 0.1, {});
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_DOUBLE_EQ(theta.item(), 1.0 - 0.1 * 1.0 / (1.0 + 1e-8));
  EXPECT_NEAR(theta.item(), 0.9, 1e-8);
}

TEST(AdamW, SecondStepMatchesRecurrence) {
  test::F64 f64;
  Tensor theta = scalar_param(0.5);
  AdamState state;
  const AdamOptions opt{0.9, 0.999, 1e-8, 0.0};
  set_grad(theta, 0.3);
  adamw_step({{"t", theta}}, state, 0.01, opt);
  theta.zero_grad();
  set_grad(theta, -0.2);
  adamw_step({{"t", theta}}, state, 0.01, opt);
  double expected = 0.5;
  double m = 0.0, v = 0.0;
  const double grads[] = {0.3, -0.2};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    expected -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(theta.item(), expected, 1e-15);
  EXPECT_EQ(state.step, 2u);
}

TEST(AdamW, ZeroGradientCases) {
  test::F64 f64;
  Tensor a = scalar_param(2.0);
  set_grad(a, 0.0);
  AdamState s1;
  adamw_step({{"a", a}}, s1, 0.1, {});
  EXPECT_EQ(a.item(), 2.0);

  Tensor b = scalar_param(2.0);
  set_grad(b, 0.0);
  AdamState s2;
  adamw_step({{"b", b}}, s2, 0.1, {0.9, 0.999, 1e-8, 0.05});
  EXPECT_DOUBLE_EQ(b.item(), 2.0 * (1.0 - 0.1 * 0.05));
}

TEST(AdamW, NonFiniteGradientAbortsStep) {
  test::F64 f64;
  Tensor ok = scalar_param(1.0), bad = scalar_param(1.0);
  set_grad(ok, 1.0);
  set_grad(bad, std::nan(""));
  AdamState state;
  try {
    adamw_step({{"ok", ok}, {"layer.bad", bad}}, state, 0.1, {});
    FAIL();
  } catch (const NonFiniteGradientError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.bad"), std::string::npos);
  }
  EXPECT_EQ(ok.item(), 1.0);
  EXPECT_EQ(state.step, 0u);
  EXPECT_TRUE(state.moments.empty());
}

TEST(ClipGradNorm, ScalesToMaxNorm) {
  test::F64 f64;
  Tensor a = Tensor::from_data({2}, {0, 0}, true);
  a.mutable_grad()[0] = 3.0;
  a.mutable_grad()[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm({{"a", a}}, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(a.grad()[1], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_grad_norm({{"a", a}}, 10.0), 1.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

TEST(LrSchedule, WarmupPeakAndDecay) {
  const double base = 2e-5;
  EXPECT_EQ(lr_schedule(0, 100, 0.1, base), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(5, 100, 0.1, base), base / 2);
  EXPECT_EQ(lr_schedule(10, 100, 0.1, base), base);
  EXPECT_DOUBLE_EQ(lr_schedule(55, 100, 0.1, base), base / 2);
  EXPECT_EQ(lr_schedule(100, 100, 0.1, base), 0.0);
  double peak = 0.0;
  for (std::size_t s = 0; s <= 100; ++s) {
    const double lr = lr_schedule(s, 100, 0.1, base);
    peak = std::max(peak, lr);
    if (s > 0) {
      EXPECT_LE(std::abs(lr - lr_schedule(s - 1, 100, 0.1, base)), base / 10 + 1e-18);
    }
  }
  EXPECT_EQ(peak, base);
  EXPECT_EQ(lr_schedule(0, 10, 0.0, base), base);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.d_shared = 8;
  c.heads = 2;
  c.d_ff = 32;
  c.layers = 1;
  c.max_response_len = 12;
  return c;
}

struct Toy {
  SyntheticSpec spec;
  SyntheticCorpus corpus;
  Vocabulary vocab;
  ImageBank bank;
  TrainConfig config;

  explicit Toy(std::size_t per_concept = 2, ModelConfig model = tiny_config()) {
    spec.n_concepts = 4;
    spec.train_images_per_concept = per_concept;
    spec.test_images_per_concept = 1;
    spec.train_dialogues = 12;
    spec.test_dialogues = 4;
    corpus = generate_synthetic_corpus(spec, Rng(0));
    vocab = Vocabulary::build(corpus.texts());
    for (const auto* set : {&corpus.train_images, &corpus.test_images}) {
      for (const auto& im : *set) bank.add(im.id, image_to_tensor(im.image));
    }
    config.model = model;
    config.stage1.batch_size = 3;
    config.stage1.epochs = 2;
    config.stage1.lr = 1e-3;
    config.stage2.batch_size = 4;
    config.stage2.epochs = 2;
    config.stage2.lr = 1e-3;
    config.max_generate_len = 6;
  }

  std::vector<DialogueExample> annotated(const ModelBundle& model) const {
    ImageIndex index = build_index(model, bank);
    return precompute_corpus_retrievals(index, model, corpus.train_dialogues, 2, RetrievalMode::kContextResponse);
  }
};

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  Toy toy;
  TempDir dir("zrigf_test_ckpt");
  ModelBundle model = make_model(toy.config.model, toy.vocab, 5);
  AdamState adam;
  adam.step = 3;
  adam.moments["x"] = {{1.0, -2.0}, {0.5, 0.25}};
  const Checkpoint c = capture_checkpoint("contrastive", toy.config, model, adam, 7, Rng(9).split(2).state());
  save_checkpoint(dir.path / "a.ckpt", c);
  const Checkpoint loaded = load_checkpoint(dir.path / "a.ckpt");
  save_checkpoint(dir.path / "b.ckpt", loaded);
  EXPECT_EQ(slurp(dir.path / "a.ckpt"), slurp(dir.path / "b.ckpt"));
  EXPECT_EQ(slurp(dir.path / "a.ckpt").substr(0, 7), "ZRIGF01");
  EXPECT_EQ(loaded.step, 7u);
  EXPECT_EQ(loaded.rng, Rng(9).split(2).state());
  EXPECT_EQ(loaded.optimizer.moments.at("x").v, (std::vector<double>{0.5, 0.25}));

  const ModelBundle restored = restore_model(loaded);
  ASSERT_EQ(restored.store.entries().size(), model.store.entries().size());
  for (std::size_t i = 0; i < model.store.entries().size(); ++i) {
    const auto a = model.store.entries()[i].tensor.data(), b = restored.store.entries()[i].tensor.data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << model.store.entries()[i].name;
  }
}

TEST(Checkpoint, ErrorPaths) {
  Toy toy;
  TempDir dir("zrigf_test_ckpt_err");
  ModelBundle model = make_model(toy.config.model, toy.vocab, 5);
  const Checkpoint c = capture_checkpoint("contrastive", toy.config, model, {}, 0, {});
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CorruptionError);
  EXPECT_THROW(deserialize_checkpoint("ZRIGF99" + bytes.substr(7)), FormatError);
  std::string wrong_version = bytes;
  wrong_version[7] = 9;
  EXPECT_THROW(deserialize_checkpoint(wrong_version), FormatError);
  EXPECT_THROW(load_checkpoint(dir.path / "missing.ckpt"), IngestionError);

  ModelConfig wider = toy.config.model;
  wider.d_model = 24;
  wider.d_ff = 48;
  ModelBundle other = make_model(wider, toy.vocab, 5);
  try {
    load_parameters(c, other);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("word_embedding"), std::string::npos) << e.what();
  }
}

TEST(Synthetic, SameSeedSameBytes) {
  SyntheticSpec spec;
  spec.n_concepts = 4;
  spec.train_images_per_concept = 2;
  spec.test_images_per_concept = 1;
  spec.train_dialogues = 8;
  spec.test_dialogues = 4;
  TempDir a("zrigf_test_synth_a"), b("zrigf_test_synth_b");
  write_synthetic_corpus(a.path, generate_synthetic_corpus(spec, Rng(3)));
  write_synthetic_corpus(b.path, generate_synthetic_corpus(spec, Rng(3)));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b.path / std::filesystem::relative(e.path(), a.path))) << e.path();
  }
  EXPECT_EQ(files, 8u + 4u + 5u);
  EXPECT_EQ(read_pairs(a.path / "pairs_train.jsonl").size(), 8u);
  EXPECT_NO_THROW(read_vocabulary(a.path / "vocab.txt"));
}

TEST(Synthetic, ResponsesNameTheirConceptAndImagesDiffer) {
  SyntheticSpec spec;
  const auto corpus = generate_synthetic_corpus(spec, Rng(1));
  for (const auto& d : corpus.train_dialogues) {
    const std::string c = extra_string(d, "concept");
    ASSERT_FALSE(c.empty());
    EXPECT_NE(d.response.find(c), std::string::npos);
  }
  // Held-out contexts name the object and color but never the shape; training contexts never name objects.
  for (const auto& d : corpus.test_dialogues) {
    const auto words = split_words(d.context[0]);
    bool has_object = false;
    for (const auto& k : corpus.concepts) {
      if (k.name() != extra_string(d, "concept")) continue;
      has_object = std::find(words.begin(), words.end(), k.object) != words.end();
      EXPECT_NE(std::find(words.begin(), words.end(), k.color), words.end());
      EXPECT_EQ(std::find(words.begin(), words.end(), k.shape), words.end());
    }
    EXPECT_TRUE(has_object) << d.context[0];
  }
  for (const auto& d : corpus.train_dialogues) {
    const auto words = split_words(d.context[0]);
    for (const auto& k : corpus.concepts) EXPECT_EQ(std::find(words.begin(), words.end(), k.object), words.end());
  }
  // Noise-free renders of different concepts differ somewhere.
  spec.noise = 0.0;
  const auto concepts = make_concepts(spec);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    for (std::size_t j = i + 1; j < concepts.size(); ++j) {
      Rng r1(7), r2(7);
      EXPECT_NE(render_concept(spec, concepts[i], r1).pixels, render_concept(spec, concepts[j], r2).pixels);
    }
  }
}

std::vector<double> group_values(const ModelBundle& m, const std::string& group) {
  std::vector<double> out;
  for (const auto& e : m.store.entries()) {
    if (e.group == group) out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  }
  return out;
}

TEST(ContrastiveStage, StepCountAndFreezing) {
  Toy toy;
  toy.config.stage1.epochs = 1;
  ModelBundle model = make_model(toy.config.model, toy.vocab, toy.config.seed);
  const auto before_text = group_values(model, "text_encoder");
  const auto before_dec = group_values(model, "decoder");
  const auto before_img = group_values(model, "image_encoder");
  const auto pairs = make_pair_samples(toy.vocab, toy.corpus.train_pairs, toy.bank);
  const StageResult r = run_contrastive_stage(toy.config, model, pairs);
  EXPECT_EQ(r.log.size(), (pairs.size() + 2) / 3);
  EXPECT_EQ(r.checkpoint.step, r.log.size());
  EXPECT_EQ(group_values(model, "text_encoder"), before_text);
  EXPECT_EQ(group_values(model, "decoder"), before_dec);
  EXPECT_NE(group_values(model, "image_encoder"), before_img);
  for (const auto& [name, _] : r.checkpoint.optimizer.moments) {
    EXPECT_EQ(name.rfind("text_encoder", 0), std::string::npos) << name;
    EXPECT_EQ(name.rfind("decoder", 0), std::string::npos) << name;
  }
  EXPECT_THROW(run_contrastive_stage(toy.config, model, {}), ConfigError);
}

TEST(ContrastiveStage, DiagonalSimilarityRisesAboveOffDiagonal) {
  SyntheticSpec spec;
  const auto corpus = generate_synthetic_corpus(spec, Rng(0));
  const Vocabulary vocab = Vocabulary::build(corpus.texts());
  ImageBank bank;
  for (const auto& im : corpus.train_images) bank.add(im.id, image_to_tensor(im.image));
  TrainConfig config;
  config.stage1.lr = 1e-3;
  config.stage1.max_steps = 200;
  ModelBundle model = make_model(config.model, vocab, 0);
  run_contrastive_stage(config, model, make_pair_samples(vocab, corpus.train_pairs, bank));

  // One caption and one image per concept.
  std::vector<Tensor> img, txt;
  for (std::size_t c = 0; c < corpus.concepts.size(); ++c) {
    img.push_back(image_embedding(model, bank.get(corpus.train_images[c].id)));
    txt.push_back(text_embedding(model, encode_sentence(vocab, "a " + corpus.concepts[c].name())));
  }
  const Tensor sims = cosine_matrix(concat(img, 0), concat(txt, 0));
  double diag = 0.0, off = 0.0;
  const std::size_t n = img.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += sims.at(i, j);
  }
  diag /= static_cast<double>(n);
  off /= static_cast<double>(n * (n - 1));
  EXPECT_GT(diag - off, 0.2) << "diag " << diag << " off " << off;
}

TEST(GenerativeStage, MissingImageIdsNameTheLine) {
  Toy toy;
  auto dialogues = toy.corpus.train_dialogues;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    dialogues[i].line = i + 1;
    dialogues[i].image_ids = {toy.corpus.train_images[0].id};
  }
  dialogues[4].image_ids.clear();
  try {
    make_dialogue_samples(toy.vocab, dialogues, toy.bank);
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos) << e.what();
  }
  dialogues[4].image_ids = {"nope"};
  EXPECT_THROW(make_dialogue_samples(toy.vocab, dialogues, toy.bank), IngestionError);
}

TEST(GenerativeStage, InitialLossNearUniformAndLambdaZero) {
  Toy toy;
  ModelBundle model = make_model(toy.config.model, toy.vocab, 1);
  const auto samples = make_dialogue_samples(toy.vocab, toy.annotated(model), toy.bank);
  PrecisionScope p(Precision::kFloat64);
  const StageTwoLoss loss =
      generative_batch_loss(model, std::span(samples).first(4), toy.bank, {0.1, 0.0, ModuleToggles{}});
  const double ln_v = std::log(static_cast<double>(toy.vocab.size()));
  EXPECT_NEAR(loss.generation.item(), ln_v, 0.1 * ln_v);
  const StageTwoLoss pure = generative_batch_loss(model, std::span(samples).first(4), toy.bank, {0.0, 0.1, {}});
  EXPECT_EQ(pure.total.item(), pure.generation.item());
}

TEST(GenerativeStage, ValidationLossDropsThirtyPercent) {
  SyntheticSpec spec;
  spec.train_images_per_concept = 4;
  spec.train_dialogues = 256;
  spec.test_dialogues = 32;
  const auto corpus = generate_synthetic_corpus(spec, Rng(0));
  const Vocabulary vocab = Vocabulary::build(corpus.texts());
  ImageBank bank;
  for (const auto& im : corpus.train_images) bank.add(im.id, image_to_tensor(im.image));
  TrainConfig config;
  config.stage2.lr = 1e-3;
  config.stage2.max_steps = 500;
  config.stage2.epochs = 100;
  ModelBundle model = make_model(config.model, vocab, 0);
  const ImageIndex index = build_index(model, bank);
  auto annotate = [&](const std::vector<DialogueExample>& d) {
    return make_dialogue_samples(
        vocab, precompute_corpus_retrievals(index, model, d, 3, RetrievalMode::kContextResponse), bank);
  };
  const auto train = annotate(corpus.train_dialogues);
  const auto valid = annotate(corpus.test_dialogues);
  auto valid_loss = [&] {
    NoGradGuard ng;
    return generative_batch_loss(model, valid, bank, {0.0, 0.0, {}}).generation.item();
  };
  const double before = valid_loss();
  run_generative_stage(config, model, train, bank);
  const double after = valid_loss();
  EXPECT_LE(after, 0.7 * before) << before << " -> " << after;
}

TEST(Training, ResumeReproducesUninterruptedRun) {
  Toy toy;
  const auto pairs = make_pair_samples(toy.vocab, toy.corpus.train_pairs, toy.bank);
  ModelBundle straight = make_model(toy.config.model, toy.vocab, 0);
  const StageResult full = run_contrastive_stage(toy.config, straight, pairs);

  TempDir dir("zrigf_test_resume");
  ModelBundle first = make_model(toy.config.model, toy.vocab, 0);
  RunOptions half;
  half.stop_after = 3;
  const StageResult a = run_contrastive_stage(toy.config, first, pairs, half);
  ASSERT_EQ(a.log.size(), 3u);
  save_checkpoint(dir.path / "mid.ckpt", a.checkpoint);
  const Checkpoint mid = load_checkpoint(dir.path / "mid.ckpt");
  ModelBundle second = make_model(toy.config.model, toy.vocab, 0);
  RunOptions rest;
  rest.resume = &mid;
  const StageResult b = run_contrastive_stage(toy.config, second, pairs, rest);

  std::vector<StepRecord> joined = a.log;
  joined.insert(joined.end(), b.log.begin(), b.log.end());
  EXPECT_EQ(joined, full.log);
  EXPECT_EQ(serialize_checkpoint(b.checkpoint), serialize_checkpoint(full.checkpoint));

  // Same for stage 2, continuing from the stage-1 weights.
  const auto dialogues = make_dialogue_samples(toy.vocab, toy.annotated(straight), toy.bank);
  ModelBundle s2_straight = restore_model(full.checkpoint);
  const StageResult g_full = run_generative_stage(toy.config, s2_straight, dialogues, toy.bank);
  ModelBundle s2_first = restore_model(full.checkpoint);
  RunOptions g_half;
  g_half.stop_after = 2;
  const StageResult g_a = run_generative_stage(toy.config, s2_first, dialogues, toy.bank, g_half);
  ModelBundle s2_second = restore_model(full.checkpoint);
  RunOptions g_rest;
  g_rest.resume = &g_a.checkpoint;
  const StageResult g_b = run_generative_stage(toy.config, s2_second, dialogues, toy.bank, g_rest);
  std::vector<StepRecord> g_joined = g_a.log;
  g_joined.insert(g_joined.end(), g_b.log.begin(), g_b.log.end());
  EXPECT_EQ(g_joined, g_full.log);
  EXPECT_THROW(run_generative_stage(toy.config, s2_second, dialogues, toy.bank, rest), FormatError);
}

TEST(Inference, DeterministicAndBoundedK) {
  Toy toy;
  ModelBundle model = make_model(toy.config.model, toy.vocab, 2);
  const ImageIndex index = build_index(model, toy.bank);
  const std::vector<std::string> context = {"look at this red square", "what is in it"};
  const ResponseResult a = generate_response(toy.config, model, index, toy.bank, context, 2);
  const ResponseResult b = generate_response(toy.config, model, index, toy.bank, context, 2);
  EXPECT_EQ(a.text, b.text);
  EXPECT_EQ(a.image_ids, b.image_ids);
  EXPECT_EQ(a.image_ids.size(), 2u);
  EXPECT_THROW(generate_response(toy.config, model, index, toy.bank, context, index.size() + 1), BoundedIndexError);
}

}  // namespace
}  // namespace zrigf
