#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "zrigf/corpus.hpp"
#include "zrigf/forward.hpp"

namespace zrigf {

struct ScoredImage {
  std::string id;
  double score = 0.0;
};

// Unit-normalized image embeddings keyed by id, searched exhaustively.
class ImageIndex {
 public:
  explicit ImageIndex(std::size_t dim = 0) : dim_(dim) {}

  // Normalizes and stores a copy; duplicate ids raise IngestionError.
  void add(const std::string& id, std::span<const double> embedding);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::span<const float> embedding(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  const std::vector<std::string>& ids() const { return ids_; }

  // Cosine against every entry (the query is normalized here), best k first,
  // ties by ascending id. With shards > 1 the entries are split into
  // contiguous ranges scored on separate threads and the partial top-k
  // lists are merged; the result is identical to shards == 1.
  std::vector<ScoredImage> search(std::span<const double> query, std::size_t k, std::size_t shards = 1) const;
  double score(std::size_t i, std::span<const double> unit_query) const;

  void save(const std::filesystem::path& path) const;
  static ImageIndex load(const std::filesystem::path& path);

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> values_;
};

enum class RetrievalMode { kContextOnly, kContextResponse };
std::string mode_name(RetrievalMode mode);
RetrievalMode parse_mode(const std::string& text);

struct RetrievalResult {
  std::string query_id;
  std::vector<ScoredImage> ranked;
  RetrievalMode mode = RetrievalMode::kContextOnly;
  // Diagnostic only: softmax over the ranked scores.
  std::vector<double> softmax_scores() const;
};

// Images in iteration order; the order of the index follows it.
ImageIndex build_index(const ModelBundle& model, const std::vector<std::pair<std::string, Tensor>>& images);
ImageIndex build_index(const ModelBundle& model, const ImageBank& images);

RetrievalResult retrieve_top_k(const ImageIndex& index, const ModelBundle& model, std::span<const int> query,
                               std::size_t k, RetrievalMode mode = RetrievalMode::kContextOnly,
                               std::size_t shards = 1);

// Token ids used as the retrieval query for a dialogue in the given mode.
std::vector<int> retrieval_query(const Vocabulary& vocab, const DialogueExample& d, RetrievalMode mode);

// Attaches the top-k image ids and the mode to every example. Errors name
// the example's source line.
std::vector<DialogueExample> precompute_corpus_retrievals(const ImageIndex& index, const ModelBundle& model,
                                                          const std::vector<DialogueExample>& corpus, std::size_t k,
                                                          RetrievalMode mode);

}  // namespace zrigf
