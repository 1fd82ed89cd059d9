#include <algorithm>

#include "zrigf/error.hpp"
#include "zrigf/generative.hpp"

namespace zrigf {

namespace {

bool better(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

}  // namespace

BeamHypothesis beam_search(const NextTokenScorer& scorer, const BeamOptions& options) {
  if (options.beam < 1) throw ConfigError("beam size must be at least 1");
  if (options.max_len < 1) throw ConfigError("max_len must be at least 1");

  std::vector<BeamHypothesis> alive{BeamHypothesis{}};
  std::vector<BeamHypothesis> finished;
  for (std::size_t t = 1; t <= options.max_len && !alive.empty(); ++t) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& h : alive) {
      std::vector<int> p{options.bos};
      p.insert(p.end(), h.tokens.begin(), h.tokens.end());
      prefixes.push_back(std::move(p));
    }
    const auto scores = scorer(prefixes);
    if (scores.size() != alive.size()) throw ContractError("beam_search: scorer returned wrong number of rows");

    std::vector<BeamHypothesis> candidates;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      for (std::size_t v = 0; v < scores[h].size(); ++v) {
        BeamHypothesis c = alive[h];
        c.tokens.push_back(static_cast<int>(v));
        c.log_prob += scores[h][v];
        c.finished = static_cast<int>(v) == options.eos;
        candidates.push_back(std::move(c));
      }
    }
    // Finishing and continuing candidates compete for the same slots.
    const std::size_t keep = std::min(options.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      better);
    candidates.resize(keep);
    alive.clear();
    for (auto& c : candidates) {
      if (c.finished || t == options.max_len) {
        finished.push_back(std::move(c));
      } else {
        alive.push_back(std::move(c));
      }
    }

    // Scores only decrease as hypotheses grow, so a finished hypothesis that
    // beats every live one cannot be overtaken.
    if (!finished.empty() && !alive.empty()) {
      const auto best = std::min_element(finished.begin(), finished.end(), better);
      if (best->log_prob > alive.front().log_prob) break;
    }
  }
  return *std::min_element(finished.begin(), finished.end(), better);
}

}  // namespace zrigf
