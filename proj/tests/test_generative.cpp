#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "test_util.hpp"
#include "zrigf/error.hpp"
#include "zrigf/generative.hpp"
#include "zrigf/tokenizer.hpp"

using namespace zrigf;
using zrigf::test::all_params;
using zrigf::test::random_tensor;
using zrigf::test::randomize;

namespace {

constexpr std::size_t kD = 8;
constexpr std::size_t kVocab = 9;

struct Generator {
  ParameterStore store;
  EmbeddingTable table;
  FusionParams fusion;
  DecoderParams decoder;
  explicit Generator(std::uint64_t seed, double stddev = 0.3) {
    Rng rng(seed);
    const EncoderDims dims{kD, 16, 2, 2};
    table = {store.create("emb", {kVocab, kD}, Init::kNormal, "word_embedding", rng)};
    fusion = make_fusion(store, "fusion", dims, rng);
    decoder = make_decoder(store, "decoder", dims, table, 8, rng);
    randomize(store, rng, stddev);
  }
};

Tensor row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from_data({1, n}, std::move(v));
}

void zero_params(const ParameterStore& store, const std::string& prefix) {
  for (const auto& e : store.entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    Tensor t = e.tensor;
    for (double& v : t.mutable_data()) v = 0.0;
  }
}

// Exhaustive oracle: every sequence that ends in eos within max_len tokens
// or reaches max_len, scored by summed log-probabilities.
BeamHypothesis exhaustive(const NextTokenScorer& scorer, std::size_t vocab, const BeamOptions& opts) {
  BeamHypothesis best;
  best.log_prob = -std::numeric_limits<double>::infinity();
  std::vector<BeamHypothesis> frontier{BeamHypothesis{}};
  for (std::size_t t = 1; t <= opts.max_len; ++t) {
    std::vector<BeamHypothesis> next;
    for (const auto& h : frontier) {
      std::vector<int> prefix{opts.bos};
      prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
      const auto lp = scorer({prefix})[0];
      for (std::size_t v = 0; v < vocab; ++v) {
        BeamHypothesis c = h;
        c.tokens.push_back(static_cast<int>(v));
        c.log_prob += lp[v];
        const bool done = static_cast<int>(v) == opts.eos || t == opts.max_len;
        if (done) {
          if (c.log_prob > best.log_prob || (c.log_prob == best.log_prob && c.tokens < best.tokens)) best = c;
        } else {
          next.push_back(std::move(c));
        }
      }
    }
    frontier = std::move(next);
  }
  return best;
}

// Random but fixed next-token distributions keyed by the prefix.
NextTokenScorer random_scorer(std::uint64_t seed, std::size_t vocab, double sharpness) {
  return [=](const std::vector<std::vector<int>>& prefixes) {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) {
      std::uint64_t h = seed;
      for (int t : p) h = mix64(h ^ static_cast<std::uint64_t>(t + 1));
      Rng rng(h);
      std::vector<double> logits(vocab);
      double mx = -1e300;
      for (double& l : logits) mx = std::max(mx, l = sharpness * rng.normal());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - mx);
      for (double& l : logits) l = l - mx - std::log(z);
      out.push_back(std::move(logits));
    }
    return out;
  };
}

}  // namespace

TEST(PreservationLoss, Examples) {
  test::F64 f64;
  const std::vector<std::uint8_t> one = {1};
  EXPECT_NEAR(preservation_loss(row({1, 0}), row({0, 1}), one).item(), 0.693147, 1e-6);
  EXPECT_NEAR(preservation_loss(row({1, 2}), row({2, 4}), one).item(), 0.313262, 1e-6);
  const std::vector<std::uint8_t> bad = {1, 0};
  EXPECT_THROW(preservation_loss(row({1, 0}), row({0, 1}), bad), DimensionError);
}

TEST(PreservationLoss, ComplementSymmetryAndNormalization) {
  test::F64 f64;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.uniform_index(4), m = 1 + rng.uniform_index(4);
    const Tensor c = random_tensor(rng, {n, 5}, false), im = random_tensor(rng, {m, 5}, false);
    std::vector<std::uint8_t> y(n * m), flipped(n * m);
    for (std::size_t i = 0; i < y.size(); ++i) flipped[i] = 1 - (y[i] = rng.uniform() < 0.4);
    const double loss = preservation_loss(c, im, y).item();
    EXPECT_NEAR(preservation_loss(c, mul_scalar(im, -1.0), flipped).item(), loss, 1e-12);

    double oracle = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0, nc = 0, ni = 0;
        for (std::size_t d = 0; d < 5; ++d) {
          dot += c.at(i, d) * im.at(j, d);
          nc += c.at(i, d) * c.at(i, d);
          ni += im.at(j, d) * im.at(j, d);
        }
        const double sig = 1.0 / (1.0 + std::exp(-dot / std::sqrt(nc * ni)));
        oracle -= y[i * m + j] ? std::log(sig) : std::log(1.0 - sig);
      }
    }
    EXPECT_NEAR(loss, oracle / static_cast<double>(m), 1e-12);
  }
}

TEST(FuseImages, WeightsAndWeightedSum) {
  test::F64 f64;
  Rng rng(1);
  const Tensor state = random_tensor(rng, {3, kD}, false);
  const std::vector<Tensor> one{state};
  const auto single = fuse_images(random_tensor(rng, {1, 4}, false), one, random_tensor(rng, {1, 4}, false));
  EXPECT_EQ(single.alpha.to_vector(), std::vector<double>{1.0});
  EXPECT_EQ(single.h_i_att.to_vector(), state.to_vector());

  const std::vector<Tensor> three{random_tensor(rng, {3, kD}, false), random_tensor(rng, {3, kD}, false),
                                  random_tensor(rng, {3, kD}, false)};
  const Tensor pooled = Tensor::from_data({3, 2}, {1, 0, 2, 0, 0.5, 0});
  const auto equal = fuse_images(row({3, 0}), three, pooled);
  for (double a : equal.alpha.data()) EXPECT_NEAR(a, 1.0 / 3.0, 1e-12);
  for (std::size_t i = 0; i < 3 * kD; ++i) {
    const double mean = (three[0].data()[i] + three[1].data()[i] + three[2].data()[i]) / 3.0;
    EXPECT_NEAR(equal.h_i_att.data()[i], mean, 1e-12);
  }

  const auto w = fusion_weights(row({0.0, std::log(3.0)})).to_vector();
  EXPECT_NEAR(w[0], 0.25, 1e-12);
  EXPECT_NEAR(w[1], 0.75, 1e-12);

  const std::vector<Tensor> mismatched{random_tensor(rng, {3, kD}, false), random_tensor(rng, {2, kD}, false)};
  EXPECT_THROW(fuse_images(row({1, 0}), mismatched, Tensor::zeros({2, 2})), DimensionError);
}

TEST(FuseImages, AlphaIsSimplexAndOutputIsConvexCombination) {
  test::F64 f64;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t k = 1 + rng.uniform_index(4);
    std::vector<Tensor> states;
    for (std::size_t i = 0; i < k; ++i) states.push_back(random_tensor(rng, {2, 3}, false));
    const auto f = fuse_images(random_tensor(rng, {1, 4}, false), states, random_tensor(rng, {k, 4}, false));
    double total = 0.0;
    for (double a : f.alpha.data()) {
      EXPECT_GE(a, 0.0);
      total += a;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t c = 0; c < 6; ++c) {
      double expected = 0.0;
      for (std::size_t i = 0; i < k; ++i) expected += f.alpha.at(i) * states[i].data()[c];
      EXPECT_NEAR(f.h_i_att.data()[c], expected, 1e-12);
    }
  }
}

TEST(CrossFuse, ShapesPassthroughAndGradient) {
  Generator g(2);
  Rng rng(3);
  Tensor h_att = random_tensor(rng, {2, kD});
  Tensor h_c = random_tensor(rng, {3, kD});
  FusedStates fused;
  fused.h_i_att = h_att;
  cross_fuse(g.fusion, fused, h_c);
  EXPECT_EQ(fused.h_i_c.shape(), (Shape{2, kD}));
  EXPECT_EQ(fused.h_c_i.shape(), (Shape{3, kD}));
  EXPECT_THROW(cross_fuse(g.fusion, fused, Tensor::zeros({3, kD + 1})), ConfigError);

  const Tensor w1 = random_tensor(rng, {2, kD}, false), w2 = random_tensor(rng, {3, kD}, false);
  auto params = all_params(g.store);
  params.push_back({"h_att", h_att});
  params.push_back({"h_c", h_c});
  auto f = [&] {
    FusedStates s;
    s.h_i_att = h_att;
    cross_fuse(g.fusion, s, h_c);
    return add(sum(mul(s.h_i_c, w1)), sum(mul(s.h_c_i, w2)));
  };
  const auto report = check_gradients(f, params);
  for (const auto& e : report.entries) {
    if (e.name.rfind("fusion", 0) == 0 || e.name.rfind("h_", 0) == 0) {
      EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
    }
  }

  zero_params(g.store, "fusion");
  FusedStates zeroed;
  zeroed.h_i_att = h_att;
  cross_fuse(g.fusion, zeroed, h_c);
  EXPECT_EQ(zeroed.h_i_c.to_vector(), h_att.to_vector());
  EXPECT_EQ(zeroed.h_c_i.to_vector(), h_c.to_vector());
}

TEST(Decoder, DistributionsAreValidAndCausal) {
  test::F64 f64;
  Generator g(4);
  Rng rng(5);
  const Tensor h_ci = random_tensor(rng, {3, kD}, false), h_ic = random_tensor(rng, {2, kD}, false);
  const std::vector<int> tokens = {kBosId, 5, 6, 7, 8};
  for (std::size_t t = 1; t <= tokens.size(); ++t) {
    const auto p = decode_step(g.decoder, std::span(tokens).first(t), h_ci, h_ic);
    ASSERT_EQ(p.size(), kVocab);
    double s = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  const Tensor logits = decode(g.decoder, tokens, h_ci, h_ic);
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    std::vector<int> edited = tokens;
    edited[t + 1] = edited[t + 1] == 5 ? 6 : 5;
    const Tensor other = decode(g.decoder, edited, h_ci, h_ic);
    for (std::size_t i = 0; i <= t; ++i) {
      for (std::size_t v = 0; v < kVocab; ++v) EXPECT_EQ(other.at(i, v), logits.at(i, v));
    }
  }
  const std::vector<int> no_start = {5, 6};
  EXPECT_THROW(decode(g.decoder, no_start, h_ci, h_ic), ContractError);
  const std::vector<int> empty;
  EXPECT_THROW(decode(g.decoder, empty, h_ci, h_ic), ContractError);
}

TEST(Decoder, GatesAreHalfAtZeroAndAlwaysInUnitInterval) {
  test::F64 f64;
  Rng rng(6);
  ParameterStore store;
  Linear gate = make_linear(store, "gate", 2 * kD, kD, "g", rng);
  const Tensor h_r = random_tensor(rng, {4, kD}, false), h_s = random_tensor(rng, {4, kD}, false);
  Tensor w = gate.weight;
  for (double& v : w.mutable_data()) v = 0.0;
  const Tensor half = transfer_gate(gate, h_r, h_s);
  for (double v : half.data()) EXPECT_EQ(v, 0.5);
  randomize(store, rng, 1.0);
  const Tensor gamma = transfer_gate(gate, mul_scalar(h_r, 5.0), h_s);
  for (double v : gamma.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Decoder, OutputProjectionIsTiedToEmbedding) {
  test::F64 f64;
  Generator g(7);
  Rng rng(8);
  const Tensor h_ci = random_tensor(rng, {3, kD}, false), h_ic = random_tensor(rng, {2, kD}, false);
  const std::vector<int> prefix = {kBosId, 5};
  const Tensor before = decode(g.decoder, prefix, h_ci, h_ic);
  auto w = g.table.weight.mutable_data();
  for (std::size_t c = 0; c < kD; ++c) w[7 * kD + c] += 0.5;
  EXPECT_TRUE(g.decoder.embedding.weight.shares_storage_with(g.table.weight));
  const Tensor after = decode(g.decoder, prefix, h_ci, h_ic);
  EXPECT_NE(after.at(1, 7), before.at(1, 7));
}

TEST(Decoder, GradientCheckBothVariants) {
  for (const bool gated : {true, false}) {
    Generator g(9);
    Rng rng(10);
    Tensor h_ci = random_tensor(rng, {3, kD}), h_ic = random_tensor(rng, {2, kD});
    const std::vector<int> tokens = {kBosId, 5, 6, 7};
    const std::vector<int> gold = {5, 6, 7, kEosId};
    auto params = all_params(g.store);
    params.push_back({"h_ci", h_ci});
    params.push_back({"h_ic", h_ic});
    const DecoderOptions opts{gated};
    auto f = [&] { return generation_loss(decode(g.decoder, tokens, h_ci, h_ic, opts), gold, 0.1); };
    GradCheckOptions gc;
    gc.max_entries_per_tensor = 16;
    const auto report = check_gradients(f, params, gc);
    for (const auto& e : report.entries) {
      if (e.name.rfind("fusion", 0) == 0) continue;
      if (!gated && (e.name.find("gate") != std::string::npos || e.name.find("merge") != std::string::npos)) continue;
      EXPECT_LT(e.max_rel_error, 1e-4) << e.name << (gated ? " gated" : " plain") << " abs " << e.max_abs_error;
    }
  }
}

TEST(GenerationLoss, Examples) {
  test::F64 f64;
  const std::vector<int> gold = {3, 1, 0};
  EXPECT_NEAR(generation_loss(Tensor::zeros({3, 5}), gold, 0.0).item(), std::log(5.0), 1e-12);

  std::vector<double> peaked(2 * 4, 0.0);
  peaked[0 * 4 + 2] = 30.0;
  peaked[1 * 4 + 1] = 30.0;
  const std::vector<int> g2 = {2, 1};
  EXPECT_LT(generation_loss(Tensor::from_data({2, 4}, peaked), g2, 0.0).item(), 1e-3);

  // Two-way toy with probabilities [2/3, 1/3] on the gold token and the
  // other one. Id 0 is <pad> here, so the gold token sits at index 1.
  const Tensor logits = Tensor::from_data({1, 2}, {std::log(1.0), std::log(2.0)});
  const std::vector<int> gold_one = {1};
  const double expected = 0.9 * -std::log(2.0 / 3.0) + 0.1 * 0.5 * (-std::log(2.0 / 3.0) - std::log(1.0 / 3.0));
  EXPECT_NEAR(generation_loss(logits, gold_one, 0.1).item(), expected, 1e-12);
  EXPECT_NEAR(expected, 0.440123, 1e-6);

  EXPECT_THROW(generation_loss(Tensor::zeros({2, 3}), gold, 0.0), DimensionError);
}

TEST(GenerationLoss, PadsAreExcluded) {
  test::F64 f64;
  Rng rng(11);
  const Tensor logits = random_tensor(rng, {4, 6}, false);
  const std::vector<int> gold = {3, 4, kPadId, kPadId};
  const std::vector<int> short_gold = {3, 4};
  EXPECT_NEAR(generation_loss(logits, gold, 0.1).item(),
              generation_loss(slice(logits, 0, 0, 2), short_gold, 0.1).item(), 1e-12);
}

TEST(GenerativeTotal, ArithmeticAndGradientAdditivity) {
  test::F64 f64;
  EXPECT_EQ(generative_total(Tensor::scalar(1.0), Tensor::scalar(0.0)).item(), 1.0);
  EXPECT_NEAR(generative_total(Tensor::scalar(0.0), Tensor::scalar(2.0)).item(), 0.2, 1e-15);
  Rng rng(12);
  Tensor x = random_tensor(rng, {2, 4});
  const std::vector<int> gold = {5, 6};
  const std::vector<std::uint8_t> y = {1, 0, 0, 1};
  auto gen = [&] { return generation_loss(matmul(x, Tensor::full({4, 7}, 0.3)), gold, 0.1); };
  auto pres = [&] { return preservation_loss(x, mul_scalar(x, -0.5), y); };
  generative_total(gen(), pres(), 0.1).backward();
  const std::vector<double> joint(x.grad().begin(), x.grad().end());
  x.zero_grad();
  gen().backward();
  const std::vector<double> gg(x.grad().begin(), x.grad().end());
  x.zero_grad();
  pres().backward();
  for (std::size_t i = 0; i < joint.size(); ++i) EXPECT_NEAR(joint[i], gg[i] + 0.1 * x.grad()[i], 1e-12);
}

TEST(BeamSearch, SingleStepFullBeamIsArgmax) {
  const auto scorer = random_scorer(1, 6, 2.0);
  BeamOptions opts{6, 1, kBosId, kEosId};
  const auto best = beam_search(scorer, opts);
  const auto lp = scorer({{kBosId}})[0];
  const auto argmax = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  ASSERT_EQ(best.tokens.size(), 1u);
  EXPECT_EQ(best.tokens[0], argmax);
  EXPECT_DOUBLE_EQ(best.log_prob, lp[static_cast<std::size_t>(argmax)]);
}

TEST(BeamSearch, PeakedModelEmitsItsSequence) {
  const std::vector<int> target = {5, 7, 6, kEosId};
  NextTokenScorer scorer = [&](const std::vector<std::vector<int>>& prefixes) {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) {
      std::vector<double> lp(8, std::log(0.01 / 7.0));
      lp[static_cast<std::size_t>(target[std::min(p.size() - 1, target.size() - 1)])] = std::log(0.99);
      out.push_back(lp);
    }
    return out;
  };
  const auto best = beam_search(scorer, {3, 10, kBosId, kEosId});
  EXPECT_EQ(best.tokens, target);
  EXPECT_TRUE(best.finished);
}

TEST(BeamSearch, UnprunedBeamMatchesExhaustiveSearch) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const std::size_t vocab = 3 + rng.uniform_index(6), max_len = 1 + rng.uniform_index(4);
    const auto scorer = random_scorer(seed, vocab, 1.5);
    std::size_t full = 1;
    for (std::size_t i = 0; i < max_len; ++i) full *= vocab;
    const BeamOptions opts{full, max_len, kBosId, kEosId};
    const auto beam = beam_search(scorer, opts);
    const auto oracle = exhaustive(scorer, vocab, opts);
    EXPECT_EQ(beam.tokens, oracle.tokens) << "seed " << seed;
    EXPECT_NEAR(beam.log_prob, oracle.log_prob, 1e-12);
  }
}

TEST(BeamSearch, BeamOneIsGreedy) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scorer = random_scorer(seed, 7, 1.0);
    const auto best = beam_search(scorer, {1, 6, kBosId, kEosId});
    std::vector<int> greedy;
    for (std::size_t t = 0; t < 6; ++t) {
      std::vector<int> prefix{kBosId};
      prefix.insert(prefix.end(), greedy.begin(), greedy.end());
      const auto lp = scorer({prefix})[0];
      greedy.push_back(static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin()));
      if (greedy.back() == kEosId) break;
    }
    EXPECT_EQ(best.tokens, greedy) << "seed " << seed;
  }
}

TEST(BeamSearch, LogProbIsExactSumAndBeamMustBePositive) {
  const auto scorer = random_scorer(3, 6, 1.0);
  const auto best = beam_search(scorer, {3, 5, kBosId, kEosId});
  double total = 0.0;
  std::vector<int> prefix{kBosId};
  for (int t : best.tokens) {
    total += scorer({prefix})[0][static_cast<std::size_t>(t)];
    prefix.push_back(t);
  }
  EXPECT_DOUBLE_EQ(best.log_prob, total);
  EXPECT_THROW(beam_search(scorer, {0, 5, kBosId, kEosId}), ConfigError);
}
