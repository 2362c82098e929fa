#include "verco/textgen/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "verco/common/error.hpp"

namespace verco::textgen {

namespace {
constexpr std::string_view kSpecials[] = {"<pad>", "<bos>", "<eos>", "<unk>"};
constexpr std::string_view kPunctuation = ",.:;?!";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
}  // namespace

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (kPunctuation.find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else {
      current.push_back(c);
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    if (!index_.emplace(tokens_[static_cast<std::size_t>(i)], i).second) {
      throw FormatError("duplicate vocabulary token '" + tokens_[static_cast<std::size_t>(i)] + "'");
    }
  }
}

Vocabulary Vocabulary::from_words(std::span<const std::string> words) {
  std::set<std::string> distinct;
  for (const auto& w : words) {
    if (w.empty() || std::any_of(w.begin(), w.end(), is_space)) {
      throw UsageError("vocabulary words must be non-empty and contain no whitespace");
    }
    if (std::find(std::begin(kSpecials), std::end(kSpecials), w) != std::end(kSpecials)) continue;
    distinct.insert(w);
  }
  std::vector<std::string> tokens(std::begin(kSpecials), std::end(kSpecials));
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::parse(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  if (tokens.size() < static_cast<std::size_t>(kNumSpecial) ||
      !std::equal(std::begin(kSpecials), std::end(kSpecials), tokens.begin())) {
    throw FormatError("vocabulary file must start with <pad>, <bos>, <eos>, <unk>");
  }
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open vocabulary file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write vocabulary file " + path);
  out << serialize();
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw UsageError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(std::string_view word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const { return index_.contains(word); }

TokenSequence Vocabulary::encode(std::string_view text) const {
  TokenSequence seq;
  seq.text = std::string(text);
  for (const auto& w : tokenize_words(text)) seq.ids.push_back(id(w));
  return seq;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

}  // namespace verco::textgen
