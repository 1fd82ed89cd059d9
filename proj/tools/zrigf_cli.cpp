#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "zrigf/ablation.hpp"
#include "zrigf/diagnostics.hpp"
#include "zrigf/error.hpp"
#include "zrigf/log.hpp"
#include "zrigf/synthetic.hpp"

namespace {

using namespace zrigf;
using nlohmann::json;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string precision;
  bool quiet = false;
};

TrainConfig base_config(const Globals& g, const Checkpoint* checkpoint = nullptr) {
  TrainConfig c;
  if (!g.config.empty()) {
    c = TrainConfig::load(g.config);
  } else if (checkpoint) {
    c = checkpoint->config();
  }
  if (checkpoint) c.model = checkpoint->config().model;
  if (g.seed) c.seed = *g.seed;
  if (!g.precision.empty()) c.precision = g.precision;
  c.validate();
  set_precision(parse_precision(c.precision));
  return c;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path);
  return out;
}

void write_log(const std::string& path, const std::vector<StepRecord>& log) {
  if (path.empty()) return;
  auto out = open_output(path);
  out << "step,epoch,lr,loss,a,b,grad_norm\n";
  out.precision(17);
  for (const auto& r : log) {
    out << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss << ',' << r.first << ',' << r.second << ','
        << r.grad_norm << "\n";
  }
}

Vocabulary vocabulary_for(const std::string& vocab_path, const std::vector<PairRecord>& pairs) {
  if (!vocab_path.empty()) return read_vocabulary(vocab_path);
  std::vector<std::string> texts;
  for (const auto& p : pairs) texts.push_back(p.caption);
  return Vocabulary::build(texts);
}

std::vector<std::pair<std::string, Tensor>> index_inputs(const ImageBank& bank, const std::string& ids_from) {
  std::vector<std::pair<std::string, Tensor>> out;
  if (ids_from.empty()) {
    for (const auto& id : bank.ids()) out.emplace_back(id, bank.get(id));
  } else {
    for (const auto& p : read_pairs(ids_from)) out.emplace_back(p.image, bank.get(p.image));
  }
  return out;
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

std::vector<std::string> parse_words(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void emit_reports(const std::vector<MetricReport>& reports, const std::string& csv) {
  for (const auto& r : reports) std::cout << r.to_json() << "\n";
  if (!csv.empty()) {
    auto out = open_output(csv);
    out << MetricReport::csv_header() << "\n";
    for (const auto& r : reports) out << r.csv_row() << "\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Retrieval-grounded image dialogue: two-stage training, retrieval and evaluation"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Random seed (overrides the config)");
  app.add_option("--config", g.config, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--precision", g.precision, "Arithmetic precision: 32 or 64")
      ->check(CLI::IsMember({"32", "64", "f32", "f64", "float32", "float64"}));
  app.add_flag("--quiet", g.quiet, "Suppress progress logs");

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "Render the synthetic concept corpus");
  std::string synth_out;
  SyntheticSpec spec;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--concepts", spec.n_concepts, "Number of concepts (at most 16)")->check(CLI::Range(1, 16));
  synth->add_option("--train-per-concept", spec.train_images_per_concept)->check(CLI::PositiveNumber);
  synth->add_option("--test-per-concept", spec.test_images_per_concept)->check(CLI::PositiveNumber);
  synth->add_option("--train-dialogues", spec.train_dialogues)->check(CLI::PositiveNumber);
  synth->add_option("--test-dialogues", spec.test_dialogues)->check(CLI::PositiveNumber);
  synth->add_option("--informative", spec.informative_fraction, "Share of training contexts mentioning the color")
      ->check(CLI::Range(0.0, 1.0));

  // contrastive-pretrain
  auto* pre1 = app.add_subcommand("contrastive-pretrain", "Stage 1: matching and masked reconstruction");
  std::string pairs_path, images_dir, vocab_path, out_path, log_path, resume_path;
  std::size_t stop_after = 0;
  pre1->add_option("--pairs", pairs_path, "Pair corpus JSONL")->required()->check(CLI::ExistingFile);
  pre1->add_option("--images", images_dir, "Directory of <id>.ppm images")->required()->check(CLI::ExistingDirectory);
  pre1->add_option("--vocab", vocab_path, "Vocabulary file, one word per line")->check(CLI::ExistingFile);
  pre1->add_option("--out", out_path, "Checkpoint to write")->required();
  pre1->add_option("--log", log_path, "Per-step loss CSV");
  pre1->add_option("--resume", resume_path, "Continue from a stage-1 checkpoint")->check(CLI::ExistingFile);
  pre1->add_option("--stop-after", stop_after, "Stop after this many total steps");

  // build-index
  auto* bidx = app.add_subcommand("build-index", "Embed images with a stage-1 checkpoint");
  std::string checkpoint_path, ids_from;
  bidx->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  bidx->add_option("--images", images_dir)->required()->check(CLI::ExistingDirectory);
  bidx->add_option("--ids-from", ids_from, "Index only the images named by this pair corpus")
      ->check(CLI::ExistingFile);
  bidx->add_option("--out", out_path)->required();

  // retrieve
  auto* retr = app.add_subcommand("retrieve", "Top-k images for a text query");
  std::string index_path, query_text, mode_text = "context-only";
  std::vector<std::string> contexts;
  std::size_t k = 3, shards = 1;
  retr->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
  retr->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  retr->add_option("--text", contexts, "Query turn (repeatable)")->required();
  retr->add_option("--k", k, "Number of images")->check(CLI::PositiveNumber);
  retr->add_option("--shards", shards, "Score the index in this many parallel shards")->check(CLI::PositiveNumber);

  // annotate-corpus
  auto* annot = app.add_subcommand("annotate-corpus", "Attach top-k image ids to every dialogue, once");
  std::string dialogues_path;
  annot->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
  annot->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  annot->add_option("--dialogues", dialogues_path)->required()->check(CLI::ExistingFile);
  annot->add_option("--out", out_path)->required();
  annot->add_option("--k", k)->check(CLI::PositiveNumber);
  annot->add_option("--mode", mode_text)->check(CLI::IsMember({"context-only", "context+response"}));

  // generative-pretrain
  auto* pre2 = app.add_subcommand("generative-pretrain", "Stage 2: grounded response generation");
  pre2->add_option("--checkpoint", checkpoint_path, "Stage-1 checkpoint")->required()->check(CLI::ExistingFile);
  pre2->add_option("--dialogues", dialogues_path, "Annotated dialogue JSONL")->required()->check(CLI::ExistingFile);
  pre2->add_option("--images", images_dir)->required()->check(CLI::ExistingDirectory);
  pre2->add_option("--out", out_path)->required();
  pre2->add_option("--log", log_path);
  pre2->add_option("--resume", resume_path, "Continue from a stage-2 checkpoint")->check(CLI::ExistingFile);
  pre2->add_option("--stop-after", stop_after);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate responses");
  std::string retriever_path;
  gen->add_option("--checkpoint", checkpoint_path, "Stage-2 checkpoint")->required()->check(CLI::ExistingFile);
  gen->add_option("--images", images_dir)->required()->check(CLI::ExistingDirectory);
  gen->add_option("--dialogues", dialogues_path, "Dialogues; existing image_ids are used as given")
      ->check(CLI::ExistingFile);
  gen->add_option("--context", contexts, "Context turn (repeatable) for a single generation");
  gen->add_option("--index", index_path, "Index for dialogues without image_ids")->check(CLI::ExistingFile);
  gen->add_option("--retriever", retriever_path, "Checkpoint that built the index (default: --checkpoint)")
      ->check(CLI::ExistingFile);
  gen->add_option("--k", k)->check(CLI::PositiveNumber);
  gen->add_option("--out", out_path, "Generation JSONL (default stdout)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Automatic metrics over an annotated test corpus");
  std::string condition_text = "retrieved", csv_path;
  eval->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--dialogues", dialogues_path, "Dialogues with image_ids")->required()->check(CLI::ExistingFile);
  eval->add_option("--images", images_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--condition", condition_text)->check(CLI::IsMember({"retrieved", "none", "random"}));
  eval->add_option("--index", index_path, "Pool for random images (default: every image)")
      ->check(CLI::ExistingFile);
  eval->add_option("--csv", csv_path);
  eval->add_option("--generations", out_path, "Write generations JSONL here");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Ablation harness");
  std::string ablation_mode, train_dialogues, test_dialogues, ks_text = "1,3,5", modules_text = "tim,tamim,mf,it";
  abl->add_option("--mode", ablation_mode)
      ->required()
      ->check(CLI::IsMember({"irrelevant-images", "vary-k", "disable-module"}));
  abl->add_option("--pairs", pairs_path)->required()->check(CLI::ExistingFile);
  abl->add_option("--train-dialogues", train_dialogues)->required()->check(CLI::ExistingFile);
  abl->add_option("--test-dialogues", test_dialogues)->required()->check(CLI::ExistingFile);
  abl->add_option("--images", images_dir)->required()->check(CLI::ExistingDirectory);
  abl->add_option("--vocab", vocab_path)->check(CLI::ExistingFile);
  abl->add_option("--ks", ks_text, "Comma-separated k values for vary-k");
  abl->add_option("--modules", modules_text, "Comma-separated modules for disable-module");
  abl->add_option("--csv", csv_path);

  // grad-check
  auto* gchk = app.add_subcommand("grad-check", "Central-difference check of both training losses");
  FullGradCheckOptions gc_options;
  double tolerance = 1e-4;
  gchk->add_option("--batch", gc_options.batch)->check(CLI::PositiveNumber);
  gchk->add_option("--entries", gc_options.max_entries_per_tensor, "Coordinates per tensor (0 = all)");
  gchk->add_option("--tolerance", tolerance)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (*seed_opt) g.seed = seed_value;
  set_log_level(g.quiet ? LogLevel::kQuiet : LogLevel::kInfo);

  if (*synth) {
    spec.validate();
    const auto corpus = generate_synthetic_corpus(spec, Rng(g.seed.value_or(0)));
    write_synthetic_corpus(synth_out, corpus);
    log_event("synth-data", {{"out", synth_out}, {"images", std::to_string(corpus.train_images.size() +
                                                                          corpus.test_images.size())}});
  } else if (*pre1) {
    const auto pairs = read_pairs(pairs_path);
    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) resume = load_checkpoint(resume_path);
    const TrainConfig config = base_config(g, resume ? &*resume : nullptr);
    const Vocabulary vocab = resume ? Vocabulary::from_words(resume->vocab) : vocabulary_for(vocab_path, pairs);
    const ImageBank bank = load_image_bank(images_dir);
    ModelBundle model = make_model(config.model, vocab, config.seed);
    RunOptions options;
    options.resume = resume ? &*resume : nullptr;
    options.stop_after = stop_after;
    const StageResult result = run_contrastive_stage(config, model, make_pair_samples(vocab, pairs, bank), options);
    save_checkpoint(out_path, result.checkpoint);
    write_log(log_path, result.log);
  } else if (*bidx) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    base_config(g, &ckpt);
    const ModelBundle model = restore_model(ckpt);
    const ImageBank bank = load_image_bank(images_dir);
    const ImageIndex index = build_index(model, index_inputs(bank, ids_from));
    index.save(out_path);
    log_event("build-index", {{"entries", std::to_string(index.size())}});
  } else if (*retr) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    base_config(g, &ckpt);
    const ModelBundle model = restore_model(ckpt);
    const ImageIndex index = ImageIndex::load(index_path);
    DialogueExample query;
    query.context = contexts;
    const auto result = retrieve_top_k(index, model, retrieval_query(model.vocab, query, RetrievalMode::kContextOnly),
                                       k, RetrievalMode::kContextOnly, shards);
    json ranked = json::array();
    for (const auto& r : result.ranked) ranked.push_back({{"id", r.id}, {"score", r.score}});
    std::cout << json{{"query", contexts},
                      {"retrieval_mode", mode_name(result.mode)},
                      {"ranked", ranked},
                      {"softmax", result.softmax_scores()}}
                     .dump()
              << "\n";
  } else if (*annot) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    base_config(g, &ckpt);
    const ModelBundle model = restore_model(ckpt);
    const ImageIndex index = ImageIndex::load(index_path);
    const auto annotated = precompute_corpus_retrievals(index, model, read_dialogues(dialogues_path), k,
                                                        parse_mode(mode_text));
    write_dialogues(out_path, annotated);
    log_event("annotate-corpus", {{"examples", std::to_string(annotated.size())}, {"mode", mode_text}});
  } else if (*pre2) {
    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) resume = load_checkpoint(resume_path);
    const Checkpoint stage1 = load_checkpoint(checkpoint_path);
    const TrainConfig config = base_config(g, resume ? &*resume : &stage1);
    ModelBundle model = restore_model(stage1);
    const ImageBank bank = load_image_bank(images_dir);
    const auto samples = make_dialogue_samples(model.vocab, read_dialogues(dialogues_path), bank);
    RunOptions options;
    options.resume = resume ? &*resume : nullptr;
    options.stop_after = stop_after;
    const StageResult result = run_generative_stage(config, model, samples, bank, options);
    save_checkpoint(out_path, result.checkpoint);
    write_log(log_path, result.log);
  } else if (*gen) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const TrainConfig config = base_config(g, &ckpt);
    const ModelBundle model = restore_model(ckpt);
    const ImageBank bank = load_image_bank(images_dir);
    std::vector<DialogueExample> dialogues;
    if (!dialogues_path.empty()) dialogues = read_dialogues(dialogues_path);
    if (!contexts.empty()) dialogues.push_back(DialogueExample{contexts, "", {}, "", 0, {}});
    if (dialogues.empty()) throw ConfigError("generate: give --dialogues or --context");
    std::optional<ModelBundle> retriever;
    std::optional<ImageIndex> index;
    std::ofstream file;
    if (!out_path.empty()) file = open_output(out_path);
    std::ostream& out = out_path.empty() ? std::cout : file;
    for (const auto& d : dialogues) {
      ResponseResult r;
      if (!d.image_ids.empty()) {
        std::vector<Tensor> pixels;
        for (const auto& id : d.image_ids) pixels.push_back(bank.get(id));
        r = generate_with_images(config, model, d.context, pixels);
        r.image_ids = d.image_ids;
      } else {
        if (index_path.empty()) throw ConfigError("generate: dialogue without image_ids needs --index");
        if (!index) index = ImageIndex::load(index_path);
        if (!retriever && !retriever_path.empty()) retriever = restore_model(load_checkpoint(retriever_path));
        const ModelBundle& by = retriever ? *retriever : model;
        DialogueExample q;
        q.context = d.context;
        const auto found =
            retrieve_top_k(*index, by, retrieval_query(by.vocab, q, RetrievalMode::kContextOnly), k);
        std::vector<Tensor> pixels;
        for (const auto& s : found.ranked) {
          pixels.push_back(bank.get(s.id));
          r.image_ids.push_back(s.id);
          r.scores.push_back(s.score);
        }
        auto ids = r.image_ids;
        auto scores = r.scores;
        r = generate_with_images(config, model, d.context, pixels);
        r.image_ids = ids;
        r.scores = scores;
      }
      out << GenerationRecord{d.context, r.text, r.image_ids, r.scores}.to_json() << "\n";
    }
  } else if (*eval) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const TrainConfig config = base_config(g, &ckpt);
    const ModelBundle model = restore_model(ckpt);
    const ImageBank bank = load_image_bank(images_dir);
    std::vector<std::string> pool;
    if (!index_path.empty()) pool = ImageIndex::load(index_path).ids();
    const ImageCondition condition = condition_text == "none"     ? ImageCondition::kNone
                                     : condition_text == "random" ? ImageCondition::kRandom
                                                                  : ImageCondition::kRetrieved;
    const Evaluation ev =
        evaluate_dialogues(config, model, read_dialogues(dialogues_path), bank, condition, pool, config.seed);
    emit_reports({ev.report}, csv_path);
    if (!out_path.empty()) {
      auto out = open_output(out_path);
      for (const auto& r : ev.generations) out << r.to_json() << "\n";
    }
  } else if (*abl) {
    const TrainConfig config = base_config(g);
    PipelineData data;
    data.pairs = read_pairs(pairs_path);
    data.vocab = vocabulary_for(vocab_path, data.pairs);
    data.dialogues = read_dialogues(train_dialogues);
    data.images = load_image_bank(images_dir);
    for (const auto& p : data.pairs) data.index_ids.push_back(p.image);
    AblationConfig ablation;
    ablation.mode = parse_ablation_mode(ablation_mode);
    ablation.ks = parse_list(ks_text);
    ablation.modules = parse_words(modules_text);
    ablation.seed = config.seed;
    for (const auto& m : ablation.modules) disable_module(config.toggles, m);
    const auto eval_corpus = read_dialogues(test_dialogues);
    std::optional<TrainedPipeline> trained;
    if (ablation.mode != AblationMode::kDisableModule) trained = train_pipeline(config, data);
    TrainedPipeline unused;
    emit_reports(run_ablation(ablation, config, trained ? *trained : unused, data, eval_corpus), csv_path);
  } else if (*gchk) {
    const TrainConfig config = base_config(g);
    gc_options.seed = config.seed;
    const FullGradCheck r = run_full_gradcheck(config.model, gc_options);
    json entries = json::array();
    for (const auto* rep : {&r.contrastive, &r.generative}) {
      for (const auto& e : rep->entries) {
        entries.push_back({{"loss", rep == &r.contrastive ? "contrastive" : "generative"},
                           {"tensor", e.name},
                           {"checked", e.checked},
                           {"max_rel_error", e.max_rel_error}});
      }
    }
    const bool passed = r.max_rel_error() <= tolerance;
    std::cout << json{{"max_rel_error", r.max_rel_error()}, {"passed", passed}, {"tensors", entries}}.dump() << "\n";
    if (!passed) {
      std::cerr << "grad-check: max relative error " << r.max_rel_error() << " exceeds " << tolerance << "\n";
      return 1;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const zrigf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
