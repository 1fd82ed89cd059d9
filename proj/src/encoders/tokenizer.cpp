#include "zrigf/tokenizer.hpp"

#include <cctype>
#include <map>

#include "zrigf/error.hpp"

namespace zrigf {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'') {
      flush();
      out.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* special : {"<pad>", "<s>", "</s>", "<sep>", "<unk>"}) add(special);
}

void Vocabulary::add(std::string word) {
  if (index_.contains(word)) return;
  index_.emplace(word, static_cast<int>(words_.size()));
  words_.push_back(std::move(word));
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_count) {
  std::vector<std::string> order;
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& w : split_words(text)) {
      if (counts[w]++ == 0) order.push_back(std::move(w));
    }
  }
  Vocabulary vocab;
  for (auto& w : order) {
    if (counts[w] >= min_count) vocab.add(std::move(w));
  }
  return vocab;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary vocab;
  if (words.size() < kNumSpecialTokens) throw VocabularyError("vocabulary is missing special tokens");
  for (std::size_t i = 0; i < kNumSpecialTokens; ++i) {
    if (words[i] != vocab.words_[i]) throw VocabularyError("vocabulary special token mismatch at " + std::to_string(i));
  }
  for (std::size_t i = kNumSpecialTokens; i < words.size(); ++i) {
    if (vocab.index_.contains(words[i])) throw VocabularyError("duplicate vocabulary entry '" + words[i] + "'");
    vocab.add(std::move(words[i]));
  }
  return vocab;
}

int Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(std::string(word)); }

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(words_.size()));
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (const int t : ids) {
    if (t == kEosId) break;
    if (t == kPadId || t == kBosId || t == kSepId) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(t);
  }
  return out;
}

std::vector<int> encode_sentence(const Vocabulary& vocab, std::string_view text) {
  std::vector<int> ids{kBosId};
  for (const int t : vocab.encode(text)) ids.push_back(t);
  ids.push_back(kEosId);
  return ids;
}

std::vector<int> encode_turns(const Vocabulary& vocab, std::span<const std::string> turns) {
  std::vector<int> ids{kBosId};
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) ids.push_back(kSepId);
    for (const int t : vocab.encode(turns[i])) ids.push_back(t);
  }
  ids.push_back(kEosId);
  return ids;
}

}  // namespace zrigf
