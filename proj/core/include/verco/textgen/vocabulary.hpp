#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verco::textgen {

// Splits on whitespace; each of , . : ; ? ! becomes its own token.
std::vector<std::string> tokenize_words(std::string_view text);

struct TokenSequence {
  std::vector<int> ids;
  std::string text;  // what was encoded, for logs and error messages

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumSpecial = 4;

  // Specials first, then the distinct words in sorted order.
  static Vocabulary from_words(std::span<const std::string> words);
  // One token per line, specials included, as written by save().
  static Vocabulary load(const std::string& path);
  static Vocabulary parse(std::string_view text);
  void save(const std::string& path) const;
  std::string serialize() const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  // kUnk for words outside the vocabulary.
  int id(std::string_view word) const;
  bool contains(std::string_view word) const;

  // Tokens of `text`; unknown words become kUnk. No bos/eos added.
  TokenSequence encode(std::string_view text) const;
  // Inverse of encode up to whitespace normalization. Specials other than
  // unk are dropped.
  std::string decode(std::span<const int> ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace verco::textgen
