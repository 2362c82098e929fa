#include "verco/prompt/template.hpp"

#include <cctype>
#include <set>

#include "verco/common/embedded_data.hpp"
#include "verco/common/error.hpp"

namespace verco::prompt {

PromptTemplate PromptTemplate::parse(std::string_view text) {
  PromptTemplate t;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 2, "{{") == 0) {
      const std::size_t close = text.find("}}", i + 2);
      if (close == std::string_view::npos) throw FormatError("unterminated slot marker in template");
      std::string name(text.substr(i + 2, close - i - 2));
      if (name.empty()) throw FormatError("empty slot name in template");
      for (char c : name) {
        if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_')) {
          throw FormatError("invalid slot name '" + name + "'");
        }
      }
      t.literals_.push_back(std::move(literal));
      literal.clear();
      t.slots_.push_back(std::move(name));
      i = close + 2;
    } else {
      literal.push_back(text[i]);
      ++i;
    }
  }
  t.literals_.push_back(std::move(literal));
  return t;
}

PromptTemplate PromptTemplate::bundled(std::string_view file_name) {
  std::string text = embedded_file("templates/" + std::string(file_name));
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return parse(text);
}

std::string PromptTemplate::render(const std::map<std::string, std::string, std::less<>>& values) const {
  const std::set<std::string, std::less<>> names(slots_.begin(), slots_.end());
  for (const auto& [key, _] : values) {
    if (!names.contains(key)) throw UsageError("value given for unknown slot '" + key + "'");
  }
  std::string out = literals_[0];
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    auto it = values.find(slots_[i]);
    if (it == values.end()) throw UsageError("missing value for slot '" + slots_[i] + "'");
    out += it->second;
    out += literals_[i + 1];
  }
  return out;
}

}  // namespace verco::prompt
