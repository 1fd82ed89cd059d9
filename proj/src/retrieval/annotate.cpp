#include "zrigf/error.hpp"
#include "zrigf/retrieval.hpp"

namespace zrigf {

std::vector<int> retrieval_query(const Vocabulary& vocab, const DialogueExample& d, RetrievalMode mode) {
  std::vector<std::string> turns = d.context;
  if (mode == RetrievalMode::kContextResponse) turns.push_back(d.response);
  return encode_turns(vocab, turns);
}

namespace {

template <typename E>
[[noreturn]] void rethrow_at(const E& e, std::size_t line) {
  throw E("example at line " + std::to_string(line) + ": " + e.what());
}

}  // namespace

std::vector<DialogueExample> precompute_corpus_retrievals(const ImageIndex& index, const ModelBundle& model,
                                                          const std::vector<DialogueExample>& corpus, std::size_t k,
                                                          RetrievalMode mode) {
  std::vector<DialogueExample> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t line = corpus[i].line ? corpus[i].line : i + 1;
    DialogueExample d = corpus[i];
    try {
      const auto result = retrieve_top_k(index, model, retrieval_query(model.vocab, d, mode), k, mode);
      d.image_ids.clear();
      for (const auto& r : result.ranked) d.image_ids.push_back(r.id);
    } catch (const BoundedIndexError& e) {
      rethrow_at(e, line);
    } catch (const ContractError& e) {
      rethrow_at(e, line);
    } catch (const DimensionError& e) {
      rethrow_at(e, line);
    }
    d.retrieval_mode = mode_name(mode);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace zrigf
