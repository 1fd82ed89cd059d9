#pragma once

#include <span>
#include <string>
#include <vector>

#include "zrigf/nn.hpp"
#include "zrigf/tokenizer.hpp"

namespace zrigf {

using Words = std::vector<std::string>;

// Lowercased words with punctuation split off.
Words metric_tokens(const std::string& text);

// Pairwise summation in a fixed order, so totals do not depend on threading.
double pairwise_sum(std::span<const double> values);

// Clipped unigram precision times the brevity penalty, aggregated over the
// corpus: clipped counts and lengths are summed before dividing. The
// reference length for each candidate is the closest reference length.
// Empty candidates contribute nothing and set *flagged.
double bleu1(const std::vector<Words>& candidates, const std::vector<std::vector<Words>>& references,
             bool* flagged = nullptr);
double bleu1(const Words& candidate, const std::vector<Words>& references, bool* flagged = nullptr);

std::size_t lcs_length(const Words& a, const Words& b);
// LCS F1 (beta = 1). Empty inputs give 0 and set *flagged.
double rouge_l(const Words& candidate, const Words& reference, bool* flagged = nullptr);

struct EmbeddingScores {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  bool flagged = false;  // a side was empty or entirely out of vocabulary
};

// Per dimension, the max when |max| >= |min|, otherwise the min.
std::vector<double> extrema_vector(const std::vector<std::vector<double>>& rows);

// Word vectors are rows of the model's embedding table (unknown words map to <unk>).
EmbeddingScores embedding_metrics(const Words& candidate, const Words& reference, const Vocabulary& vocab,
                                  const EmbeddingTable& table);

// Unique n-grams over total n-grams, pooled across all responses. Sets
// *flagged (and returns 0) when no response has n tokens.
double distinct_n(const std::vector<Words>& responses, std::size_t n, bool* flagged = nullptr);

// True when every word of the concept appears among the response's words.
bool names_concept(const std::string& response, const std::string& concept_name);

}  // namespace zrigf
