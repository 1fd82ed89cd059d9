#include "zrigf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "zrigf/error.hpp"

namespace zrigf {

namespace {

void set_flag(bool* flag) {
  if (flag) *flag = true;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<std::vector<double>> word_vectors(const Words& words, const Vocabulary& vocab,
                                              const EmbeddingTable& table, bool& all_unknown) {
  std::vector<std::vector<double>> rows;
  all_unknown = true;
  const std::size_t width = table.width();
  const auto data = table.weight.data();
  for (const auto& w : words) {
    const int id = vocab.id(w);
    all_unknown = all_unknown && id == kUnkId;
    const auto offset = static_cast<std::size_t>(id) * width;
    rows.emplace_back(data.begin() + static_cast<std::ptrdiff_t>(offset),
                      data.begin() + static_cast<std::ptrdiff_t>(offset + width));
  }
  return rows;
}

std::vector<double> mean_vector(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out(rows.front().size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out[i] += r[i];
  }
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

double greedy_direction(const std::vector<std::vector<double>>& from, const std::vector<std::vector<double>>& to) {
  std::vector<double> best;
  for (const auto& a : from) {
    double m = -1.0;
    for (const auto& b : to) m = std::max(m, cosine(a, b));
    best.push_back(m);
  }
  return pairwise_sum(best) / static_cast<double>(best.size());
}

}  // namespace

Words metric_tokens(const std::string& text) { return split_words(text); }

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double bleu1(const std::vector<Words>& candidates, const std::vector<std::vector<Words>>& references, bool* flagged) {
  if (candidates.size() != references.size()) throw DimensionError("bleu1: one reference set per candidate");
  std::size_t clipped = 0, cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    if (cand.empty()) {
      set_flag(flagged);
      continue;
    }
    if (references[i].empty()) throw ContractError("bleu1: candidate without references");
    std::map<std::string, std::size_t> counts, max_ref;
    for (const auto& w : cand) ++counts[w];
    for (const auto& ref : references[i]) {
      std::map<std::string, std::size_t> rc;
      for (const auto& w : ref) ++rc[w];
      for (const auto& [w, c] : rc) max_ref[w] = std::max(max_ref[w], c);
    }
    for (const auto& [w, c] : counts) clipped += std::min(c, max_ref[w]);
    cand_len += cand.size();
    // Closest reference length, shorter one on ties.
    std::size_t best = references[i].front().size();
    for (const auto& ref : references[i]) {
      const auto d = [&](std::size_t r) { return r > cand.size() ? r - cand.size() : cand.size() - r; };
      if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
    }
    ref_len += best;
  }
  if (cand_len == 0) return 0.0;
  const double precision = static_cast<double>(clipped) / static_cast<double>(cand_len);
  const double bp = cand_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                        : 1.0;
  return precision * bp;
}

double bleu1(const Words& candidate, const std::vector<Words>& references, bool* flagged) {
  return bleu1(std::vector<Words>{candidate}, std::vector<std::vector<Words>>{references}, flagged);
}

std::size_t lcs_length(const Words& a, const Words& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Words& candidate, const Words& reference, bool* flagged) {
  if (candidate.empty() || reference.empty()) {
    set_flag(flagged);
    return 0.0;
  }
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

std::vector<double> extrema_vector(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  std::vector<double> out(rows.front().size());
  for (std::size_t d = 0; d < out.size(); ++d) {
    double hi = rows.front()[d], lo = hi;
    for (const auto& r : rows) {
      hi = std::max(hi, r[d]);
      lo = std::min(lo, r[d]);
    }
    out[d] = std::abs(hi) >= std::abs(lo) ? hi : lo;
  }
  return out;
}

EmbeddingScores embedding_metrics(const Words& candidate, const Words& reference, const Vocabulary& vocab,
                                  const EmbeddingTable& table) {
  EmbeddingScores s;
  if (candidate.empty() || reference.empty()) {
    s.flagged = true;
    return s;
  }
  bool cand_unk = false, ref_unk = false;
  const auto c = word_vectors(candidate, vocab, table, cand_unk);
  const auto r = word_vectors(reference, vocab, table, ref_unk);
  s.flagged = cand_unk || ref_unk;
  s.average = cosine(mean_vector(c), mean_vector(r));
  s.extrema = cosine(extrema_vector(c), extrema_vector(r));
  s.greedy = (greedy_direction(c, r) + greedy_direction(r, c)) / 2.0;
  return s;
}

double distinct_n(const std::vector<Words>& responses, std::size_t n, bool* flagged) {
  if (n < 1) throw ContractError("distinct_n: n must be at least 1");
  std::set<Words> unique;
  std::size_t total = 0;
  for (const auto& r : responses) {
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      unique.emplace(r.begin() + static_cast<std::ptrdiff_t>(i), r.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  if (total == 0) {
    set_flag(flagged);
    return 0.0;
  }
  return static_cast<double>(unique.size()) / static_cast<double>(total);
}

bool names_concept(const std::string& response, const std::string& concept_name) {
  const Words words = metric_tokens(response);
  const Words wanted = metric_tokens(concept_name);
  if (wanted.empty()) return false;
  return std::all_of(wanted.begin(), wanted.end(),
                     [&](const std::string& w) { return std::find(words.begin(), words.end(), w) != words.end(); });
}

}  // namespace zrigf
