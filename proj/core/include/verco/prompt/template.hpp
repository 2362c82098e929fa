#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace verco::prompt {

// A parsed template: literal text interleaved with named `{{slot}}` markers.
class PromptTemplate {
 public:
  static PromptTemplate parse(std::string_view text);
  // Loads a bundled template ("message.tmpl", ...).
  static PromptTemplate bundled(std::string_view file_name);

  // Throws UsageError when a slot is missing a value or a value names no slot.
  std::string render(const std::map<std::string, std::string, std::less<>>& values) const;

  const std::vector<std::string>& slot_names() const { return slots_; }
  // Literal text before the first slot and after the last one.
  const std::string& role_preamble() const { return literals_.front(); }
  const std::string& suffix() const { return literals_.back(); }
  const std::vector<std::string>& literals() const { return literals_; }

 private:
  // literals_.size() == slots_.size() + 1
  std::vector<std::string> literals_;
  std::vector<std::string> slots_;
};

}  // namespace verco::prompt
