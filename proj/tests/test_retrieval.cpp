#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "zrigf/error.hpp"
#include "zrigf/image.hpp"
#include "zrigf/retrieval.hpp"

namespace zrigf {
namespace {

using test::random_tensor;

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Score every entry independently, sort everything, keep k.
std::vector<std::string> oracle_top_k(const ImageIndex& index, const std::vector<double>& query, std::size_t k) {
  double norm = 0.0;
  for (double x : query) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<std::pair<double, std::string>> all;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto e = index.embedding(i);
    double s = 0.0;
    for (std::size_t d = 0; d < e.size(); ++d) s += static_cast<double>(e[d]) * (query[d] / norm);
    all.emplace_back(std::clamp(s, -1.0, 1.0), index.id(i));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(all[i].second);
  return ids;
}

ImageIndex random_index(Rng& rng, std::size_t n, std::size_t dim) {
  ImageIndex index(dim);
  std::vector<double> last;
  for (std::size_t i = 0; i < n; ++i) {
    // Some exact duplicates so ties actually occur.
    if (!last.empty() && rng.uniform() < 0.1) {
      index.add("img" + std::to_string(rng.uniform_index(1u << 30)) + "_" + std::to_string(i), last);
      continue;
    }
    last = random_vec(rng, dim);
    index.add("img" + std::to_string(rng.uniform_index(1u << 30)) + "_" + std::to_string(i), last);
  }
  return index;
}

std::vector<std::string> ids_of(const std::vector<ScoredImage>& r) {
  std::vector<std::string> out;
  for (const auto& s : r) out.push_back(s.id);
  return out;
}

TEST(ImageIndex, EmbeddingsAreUnitNorm) {
  Rng rng(1);
  const auto index = random_index(rng, 50, 16);
  for (std::size_t i = 0; i < index.size(); ++i) {
    double sq = 0.0;
    for (float v : index.embedding(i)) sq += static_cast<double>(v) * v;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
  }
}

TEST(ImageIndex, DuplicateIdRejected) {
  ImageIndex index(2);
  index.add("a", std::vector<double>{1, 0});
  try {
    index.add("a", std::vector<double>{0, 1});
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos);
  }
}

TEST(ImageIndex, MatchesBruteForceOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(300);
    const auto index = random_index(rng, n, 8);
    const auto q = random_vec(rng, 8);
    for (std::size_t k = 1; k <= n; k += 1 + n / 17) {
      EXPECT_EQ(ids_of(index.search(q, k)), oracle_top_k(index, q, k)) << "n=" << n << " k=" << k;
    }
    EXPECT_EQ(ids_of(index.search(q, n)), oracle_top_k(index, q, n));
  }
}

TEST(ImageIndex, ShardedSearchEqualsSingle) {
  Rng rng(9);
  const auto index = random_index(rng, 257, 8);
  const auto q = random_vec(rng, 8);
  for (std::size_t shards : {2, 3, 8, 300}) {
    for (std::size_t k : {1, 5, 100, 257}) {
      const auto a = index.search(q, k);
      const auto b = index.search(q, k, shards);
      ASSERT_EQ(ids_of(a), ids_of(b));
      for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(a[i].score, b[i].score);
    }
  }
}

TEST(ImageIndex, LargerKExtendsPrefix) {
  Rng rng(11);
  const auto index = random_index(rng, 120, 6);
  const auto q = random_vec(rng, 6);
  const auto full = ids_of(index.search(q, 120));
  for (std::size_t k = 1; k <= 120; ++k) {
    const auto part = ids_of(index.search(q, k));
    EXPECT_TRUE(std::equal(part.begin(), part.end(), full.begin()));
  }
}

TEST(ImageIndex, ScoresBoundedAndNonIncreasing) {
  Rng rng(12);
  const auto index = random_index(rng, 200, 5);
  const auto r = index.search(random_vec(rng, 5), 200);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_LE(r[i].score, 1.0);
    EXPECT_GE(r[i].score, -1.0);
    if (i) {
      EXPECT_LE(r[i].score, r[i - 1].score);
    }
  }
}

TEST(ImageIndex, StoredEmbeddingRetrievesItself) {
  Rng rng(13);
  const auto index = random_index(rng, 40, 8);
  const auto e = index.embedding(17);
  const std::vector<double> q(e.begin(), e.end());
  const auto r = index.search(q, 1);
  EXPECT_EQ(r[0].id, index.id(17));
  EXPECT_NEAR(r[0].score, 1.0, 1e-6);
}

TEST(ImageIndex, KBounds) {
  Rng rng(14);
  const auto index = random_index(rng, 4, 3);
  const auto q = random_vec(rng, 3);
  EXPECT_THROW(index.search(q, 5), BoundedIndexError);
  EXPECT_THROW(index.search(q, 0), ContractError);
  EXPECT_EQ(index.search(q, 4).size(), 4u);
}

TEST(ImageIndex, FileRoundTrip) {
  Rng rng(15);
  const auto index = random_index(rng, 30, 7);
  const auto dir = std::filesystem::temp_directory_path() / "zrigf_test_index";
  std::filesystem::create_directories(dir);
  index.save(dir / "a.idx");
  const auto loaded = ImageIndex::load(dir / "a.idx");
  ASSERT_EQ(loaded.size(), index.size());
  EXPECT_EQ(loaded.dim(), 7u);
  for (std::size_t i = 0; i < index.size(); ++i) {
    EXPECT_EQ(loaded.id(i), index.id(i));
    const auto a = index.embedding(i), b = loaded.embedding(i);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
  loaded.save(dir / "b.idx");
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string bytes = slurp(dir / "a.idx");
  EXPECT_EQ(bytes, slurp(dir / "b.idx"));
  EXPECT_EQ(bytes.substr(0, 9), "ZRIGFIDX1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 7u);  // little-endian dim

  std::ofstream(dir / "trunc.idx", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(ImageIndex::load(dir / "trunc.idx"), CorruptionError);
  std::ofstream(dir / "bad.idx", std::ios::binary) << "NOTANINDEX";
  EXPECT_THROW(ImageIndex::load(dir / "bad.idx"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(RetrievalResult, SoftmaxScoresSumToOne) {
  RetrievalResult r;
  r.ranked = {{"a", 0.9}, {"b", 0.5}, {"c", -0.2}};
  const auto p = r.softmax_scores();
  double total = 0.0;
  for (double x : p) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(p[0] / p[1], std::exp(0.4), 1e-12);
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.d_shared = 8;
  c.heads = 2;
  c.d_ff = 32;
  c.layers = 1;
  return c;
}

Vocabulary small_vocab() {
  const std::vector<std::string> texts = {"a red square", "a blue circle", "what is this", "look here"};
  return Vocabulary::build(texts);
}

TEST(BuildIndex, EmptyAndDeterministic) {
  const auto model = make_model(small_config(), small_vocab(), 3);
  EXPECT_EQ(build_index(model, std::vector<std::pair<std::string, Tensor>>{}).size(), 0u);

  Rng rng(4);
  std::vector<std::pair<std::string, Tensor>> images;
  for (int i = 0; i < 5; ++i) images.emplace_back("im" + std::to_string(i), random_tensor(rng, {3, 16, 16}, false));
  const auto a = build_index(model, images);
  const auto b = build_index(model, images);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a.id(i), images[i].first);
    const auto x = a.embedding(i), y = b.embedding(i);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
  images.push_back(images[0]);
  EXPECT_THROW(build_index(model, images), IngestionError);
}

TEST(RetrieveTopK, FullRankingIsPermutation) {
  const auto model = make_model(small_config(), small_vocab(), 3);
  Rng rng(5);
  std::vector<std::pair<std::string, Tensor>> images;
  for (int i = 0; i < 6; ++i) images.emplace_back("im" + std::to_string(i), random_tensor(rng, {3, 16, 16}, false));
  const auto index = build_index(model, images);
  const auto query = encode_sentence(model.vocab, "a red square");
  const auto r = retrieve_top_k(index, model, query, 6);
  auto ids = ids_of(r.ranked);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, index.ids());
  EXPECT_THROW(retrieve_top_k(index, model, query, 7), BoundedIndexError);
  EXPECT_THROW(retrieve_top_k(ImageIndex(8), model, query, 1), BoundedIndexError);
}

TEST(PrecomputeRetrievals, AttachesRankedIdsAndMode) {
  const auto model = make_model(small_config(), small_vocab(), 3);
  Rng rng(6);
  std::vector<std::pair<std::string, Tensor>> images;
  for (int i = 0; i < 3; ++i) images.emplace_back("im" + std::to_string(i), random_tensor(rng, {3, 16, 16}, false));
  const auto index = build_index(model, images);
  DialogueExample d;
  d.context = {"what is this"};
  d.response = "a red square";
  d.extra["topic"] = "\"shapes\"";
  const auto out = precompute_corpus_retrievals(index, model, {d}, 3, RetrievalMode::kContextOnly);
  ASSERT_EQ(out.size(), 1u);
  const auto expected = retrieve_top_k(index, model, retrieval_query(model.vocab, d, RetrievalMode::kContextOnly), 3);
  EXPECT_EQ(out[0].image_ids, ids_of(expected.ranked));
  EXPECT_EQ(out[0].retrieval_mode, "context-only");
  EXPECT_EQ(dialogue_to_json(out[0]),
            dialogue_to_json(precompute_corpus_retrievals(index, model, {d}, 3, RetrievalMode::kContextOnly)[0]));
  EXPECT_NE(dialogue_to_json(out[0]).find("\"topic\":\"shapes\""), std::string::npos);
}

TEST(PrecomputeRetrievals, ModeChangesResultOnCraftedIndex) {
  const auto model = make_model(small_config(), small_vocab(), 3);
  DialogueExample d;
  d.context = {"look here"};
  d.response = "a blue circle";
  // One entry sits exactly on each mode's query embedding.
  ImageIndex index(model.config.d_shared);
  const Tensor ctx = text_embedding(model, retrieval_query(model.vocab, d, RetrievalMode::kContextOnly));
  const Tensor both = text_embedding(model, retrieval_query(model.vocab, d, RetrievalMode::kContextResponse));
  index.add("context_image", ctx.data());
  index.add("response_image", both.data());
  const auto a = precompute_corpus_retrievals(index, model, {d}, 1, RetrievalMode::kContextOnly);
  const auto b = precompute_corpus_retrievals(index, model, {d}, 1, RetrievalMode::kContextResponse);
  EXPECT_EQ(a[0].image_ids, std::vector<std::string>{"context_image"});
  EXPECT_EQ(b[0].image_ids, std::vector<std::string>{"response_image"});
  EXPECT_EQ(b[0].retrieval_mode, "context+response");
}

TEST(PrecomputeRetrievals, ErrorsNameTheLine) {
  const auto model = make_model(small_config(), small_vocab(), 3);
  ImageIndex index(model.config.d_shared);
  index.add("only", std::vector<double>(model.config.d_shared, 1.0));
  DialogueExample d;
  d.context = {"look here"};
  d.response = "a blue circle";
  d.line = 42;
  try {
    precompute_corpus_retrievals(index, model, {d}, 3, RetrievalMode::kContextOnly);
    FAIL();
  } catch (const BoundedIndexError& e) {
    EXPECT_NE(std::string(e.what()).find("line 42"), std::string::npos);
  }
}

TEST(Corpus, DialogueJsonlRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "zrigf_test_corpus";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "d.jsonl");
    out << R"({"context":["hi","what is it"],"response":"a red square","concept":"red square"})" << "\n\n";
    out << R"({"context":[],"response":"x","image_ids":["a","b"]})" << "\n";
  }
  const auto ds = read_dialogues(dir / "d.jsonl");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].line, 1u);
  EXPECT_EQ(ds[1].line, 3u);
  EXPECT_EQ(extra_string(ds[0], "concept"), "red square");
  EXPECT_EQ(ds[1].image_ids, (std::vector<std::string>{"a", "b"}));
  write_dialogues(dir / "e.jsonl", ds);
  const auto again = read_dialogues(dir / "e.jsonl");
  EXPECT_EQ(dialogue_to_json(again[0]), dialogue_to_json(ds[0]));

  std::ofstream(dir / "bad.jsonl") << R"({"context":["a"],"response":"b"})" << "\n" << R"({"context":["a"]})" << "\n";
  try {
    read_dialogues(dir / "bad.jsonl");
    FAIL();
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace zrigf
