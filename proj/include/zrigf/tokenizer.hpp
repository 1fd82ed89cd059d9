#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace zrigf {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kNumSpecialTokens = 5;

// Lowercased words; punctuation characters become their own tokens.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  Vocabulary();

  // Specials first, then words in order of first appearance, optionally
  // dropping words seen fewer than min_count times.
  static Vocabulary build(std::span<const std::string> texts, std::size_t min_count = 1);
  static Vocabulary from_words(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  int id(std::string_view word) const;  // kUnkId when unknown
  const std::string& word(int id) const;
  bool contains(std::string_view word) const;
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> encode(std::string_view text) const;
  // Stops at </s>; drops <pad>, <s> and <sep>.
  std::string decode(std::span<const int> ids) const;

 private:
  void add(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// <s> w1 ... wn </s>
std::vector<int> encode_sentence(const Vocabulary& vocab, std::string_view text);
// <s> turn1 <sep> turn2 ... </s>
std::vector<int> encode_turns(const Vocabulary& vocab, std::span<const std::string> turns);

}  // namespace zrigf
