#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "zrigf/error.hpp"
#include "zrigf/gradcheck.hpp"
#include "zrigf/nn.hpp"

using namespace zrigf;
using zrigf::test::all_params;
using zrigf::test::random_tensor;
using zrigf::test::randomize;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void zero_all(ParameterStore& store) {
  for (const auto& e : store.entries()) {
    Tensor t = e.tensor;
    for (double& v : t.mutable_data()) v = 0.0;
  }
}

}  // namespace

TEST(Attention, SingleKeyReturnsItsValue) {
  test::F64 f64;
  Rng rng(1);
  const Tensor q = random_tensor(rng, {3, 4}, false);
  const Tensor k = random_tensor(rng, {1, 4}, false);
  const Tensor v = random_tensor(rng, {1, 4}, false);
  const auto out = scaled_dot_product_attention(q, k, v, 2, {});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(out.at(i, j), v.at(0, j));
  }
}

TEST(Attention, EqualScoresAverageValues) {
  test::F64 f64;
  const Tensor q = Tensor::zeros({1, 2});
  const Tensor k = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor v = Tensor::from_data({3, 2}, {1, 0, 2, 0, 6, 3});
  const auto out = scaled_dot_product_attention(q, k, v, 1, {});
  EXPECT_NEAR(out.at(0, 0), 3.0, 1e-12);
  EXPECT_NEAR(out.at(0, 1), 1.0, 1e-12);
}

TEST(Attention, HandBuiltScoresGiveQuarterThreeQuarters) {
  test::F64 f64;
  // d = 1, so the scale is 1 and the scores are q*k = [0, ln 3].
  const Tensor q = Tensor::from_data({1, 1}, {1.0});
  const Tensor k = Tensor::from_data({2, 1}, {0.0, std::log(3.0)});
  const Tensor v = Tensor::from_data({2, 1}, {1.0, 0.0});
  EXPECT_NEAR(scaled_dot_product_attention(q, k, v, 1, {}).item(), 0.25, 1e-12);
}

TEST(Attention, MaskShapeMismatchIsDimensionError) {
  const Tensor x = Tensor::zeros({2, 4});
  EXPECT_THROW(scaled_dot_product_attention(x, x, x, 1, Tensor::zeros({3, 2})), DimensionError);
}

TEST(Attention, OutputsLieInConvexHullOfValuesPerHead) {
  test::F64 f64;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t heads = 2, d = 4, lq = 3, lk = 4;
    const Tensor q = random_tensor(rng, {lq, d}, false, 2.0);
    const Tensor k = random_tensor(rng, {lk, d}, false, 2.0);
    const Tensor v = random_tensor(rng, {lk, d}, false);
    std::vector<bool> pad = {false, rng.uniform() < 0.5, rng.uniform() < 0.5, false};
    std::unique_ptr<bool[]> flags(new bool[lk]);
    for (std::size_t i = 0; i < lk; ++i) flags[i] = pad[i];
    const Tensor out = scaled_dot_product_attention(q, k, v, heads, key_padding_mask(lq, {flags.get(), lk}));
    for (std::size_t i = 0; i < lq; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        double lo = kInf, hi = -kInf;
        for (std::size_t j = 0; j < lk; ++j) {
          if (pad[j]) continue;
          lo = std::min(lo, v.at(j, c));
          hi = std::max(hi, v.at(j, c));
        }
        EXPECT_GE(out.at(i, c), lo - 1e-12);
        EXPECT_LE(out.at(i, c), hi + 1e-12);
      }
    }
  }
}

TEST(TransformerBlock, ZeroWeightsArePureResidual) {
  test::F64 f64;
  Rng rng(2);
  ParameterStore store;
  const auto block = make_transformer_block(store, "tb", 8, 16, 2, "g", rng);
  zero_all(store);
  const Tensor q = random_tensor(rng, {3, 8}, false);
  const Tensor kv = random_tensor(rng, {5, 8}, false);
  EXPECT_EQ(transformer_block(block, q, kv).to_vector(), q.to_vector());
}

TEST(TransformerBlock, PreservesQueryShapeAndRejectsWidthMismatch) {
  Rng rng(3);
  ParameterStore store;
  const auto block = make_transformer_block(store, "tb", 8, 16, 2, "g", rng);
  const Tensor q = random_tensor(rng, {3, 8}, false);
  EXPECT_EQ(transformer_block(block, q, random_tensor(rng, {7, 8}, false)).shape(), q.shape());
  EXPECT_EQ(transformer_block(block, q, q).shape(), q.shape());
  EXPECT_THROW(transformer_block(block, q, random_tensor(rng, {7, 6}, false)), DimensionError);
}

TEST(TransformerBlock, GradientOnTwoTokenToy) {
  Rng rng(4);
  ParameterStore store;
  const auto block = make_transformer_block(store, "tb", 4, 8, 2, "g", rng);
  randomize(store, rng, 0.5);
  Tensor q = random_tensor(rng, {2, 4});
  Tensor kv = random_tensor(rng, {2, 4});
  const Tensor w = random_tensor(rng, {2, 4}, false);
  auto params = all_params(store);
  params.push_back({"q", q});
  params.push_back({"kv", kv});
  const auto report =
      check_gradients([&] { return sum(mul(transformer_block(block, q, kv), w)); }, params);
  EXPECT_LT(report.max_rel_error(), 1e-4);
}

TEST(TransformerBlock, CausalMaskHidesFutureTokens) {
  test::F64 f64;
  Rng rng(5);
  ParameterStore store;
  const auto block = make_transformer_block(store, "tb", 8, 16, 2, "g", rng);
  randomize(store, rng, 0.3);
  Tensor x = random_tensor(rng, {5, 8}, false);
  const Tensor before = transformer_block(block, x, x, causal_mask(5));
  for (std::size_t t = 0; t + 1 < 5; ++t) {
    Tensor edited = x.clone();
    for (std::size_t c = 0; c < 8; ++c) edited.mutable_data()[(t + 1) * 8 + c] += 1.0;
    const Tensor after = transformer_block(block, edited, edited, causal_mask(5));
    for (std::size_t i = 0; i <= t; ++i) {
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(after.at(i, c), before.at(i, c));
    }
  }
}

TEST(PixelShuffle, DefinitionalLayout) {
  const Tensor x = Tensor::from_data({4, 1, 1}, {1, 2, 3, 4});
  const Tensor y = pixel_shuffle(x, {2});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(y.to_vector(), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(pixel_shuffle(x, {1}).to_vector(), x.to_vector());
  EXPECT_THROW(pixel_shuffle(Tensor::zeros({3, 1, 1}), {2}), DimensionError);
}

TEST(PixelShuffle, InverseRecoversInput) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t r = 1 + rng.uniform_index(3);
    const Tensor x = random_tensor(rng, {2 * r * r, 1 + rng.uniform_index(3), 1 + rng.uniform_index(3)}, false);
    const Tensor y = pixel_shuffle(x, {r});
    EXPECT_EQ(pixel_unshuffle(y, {r}).to_vector(), x.to_vector());
    // index formula spot check
    const std::size_t c = 1, h = 0, w = 0, i = r - 1, j = 0;
    EXPECT_EQ(y.data()[(c * y.extent(1) + h * r + i) * y.extent(2) + w * r + j],
              x.data()[((c * r * r + i * r + j) * x.extent(1) + h) * x.extent(2) + w]);
  }
}

TEST(Conv2d, IdentityAndOnesKernels) {
  test::F64 f64;
  Rng rng(6);
  const Tensor x = random_tensor(rng, {2, 3, 3}, false);
  const Tensor eye = Tensor::from_data({2, 2, 1, 1}, {1, 0, 0, 1});
  EXPECT_EQ(conv2d(x, eye).to_vector(), x.to_vector());
  const Tensor ones = Tensor::full({1, 2, 1, 1}, 1.0);
  const Tensor y = conv2d(x, ones);
  for (std::size_t p = 0; p < 9; ++p) EXPECT_NEAR(y.data()[p], x.data()[p] + x.data()[9 + p], 1e-15);
  EXPECT_THROW(conv2d(x, Tensor::zeros({1, 3, 1, 1})), DimensionError);
}

TEST(Conv2d, Gradient) {
  Rng rng(7);
  Tensor x = random_tensor(rng, {3, 2, 2});
  Tensor k = random_tensor(rng, {2, 3, 1, 1});
  Tensor b = random_tensor(rng, {2});
  const Tensor w = random_tensor(rng, {2, 2, 2}, false);
  const auto report = check_gradients([&] { return sum(mul(conv2d(x, k, b), w)); }, {{"x", x}, {"k", k}, {"b", b}});
  EXPECT_LT(report.max_rel_error(), 1e-4);
}

TEST(Embed, LookupAndErrors) {
  Rng rng(8);
  const EmbeddingTable table{random_tensor(rng, {5, 3})};
  const std::vector<int> ids = {2, 2, 4};
  const Tensor e = embed(table, ids);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(e.at(0, c), table.weight.at(2, c));
    EXPECT_EQ(e.at(1, c), e.at(0, c));
    EXPECT_EQ(e.at(2, c), table.weight.at(4, c));
  }
  const std::vector<int> bad = {5};
  EXPECT_THROW(embed(table, bad), VocabularyError);
  const std::vector<int> negative = {-1};
  EXPECT_THROW(embed(table, negative), VocabularyError);
}

TEST(Embed, RepeatedIdAccumulatesGradient) {
  test::F64 f64;
  Rng rng(9);
  EmbeddingTable table{random_tensor(rng, {4, 3})};
  const Tensor w = random_tensor(rng, {1, 3}, false);
  const std::vector<int> once = {1}, twice = {1, 1};
  sum(mul(embed(table, once), w)).backward();
  const std::vector<double> single(table.weight.grad().begin(), table.weight.grad().end());
  table.weight.zero_grad();
  const Tensor w2 = Tensor::from_data({2, 3}, {w.at(0), w.at(1), w.at(2), w.at(0), w.at(1), w.at(2)});
  sum(mul(embed(table, twice), w2)).backward();
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(table.weight.grad()[i], 2.0 * single[i], 1e-15);
  const auto report = check_gradients([&] { return sum(mul(embed(table, twice), w2)); }, {{"table", table.weight}});
  EXPECT_LT(report.max_rel_error(), 1e-4);
}

TEST(ParameterStore, GroupsAndDuplicates) {
  Rng rng(10);
  ParameterStore store;
  store.create("a", {2, 2}, Init::kNormal, "g1", rng);
  store.create("b", {3}, Init::kZeros, "g2", rng);
  EXPECT_THROW(store.create("a", {1}, Init::kOnes, "g1", rng), ConfigError);
  EXPECT_EQ(store.total_size(), 7u);
  EXPECT_EQ(store.groups(), (std::vector<std::string>{"g1", "g2"}));
  ASSERT_NE(store.find("b"), nullptr);
  EXPECT_EQ(store.find("b")->tensor.to_vector(), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(store.find("zzz"), nullptr);
}
