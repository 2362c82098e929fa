#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verco/kitchen/types.hpp"
#include "verco/prompt/prompts.hpp"

namespace verco::teacher {

inline constexpr int kMaxMessageWords = 10;

// Words of a message: whitespace separated pieces that contain a letter or
// digit, so stand-alone punctuation does not count.
int count_words(std::string_view text);

struct Message {
  int sender = 0;
  std::string text;
  int word_count = 0;

  // Throws UsageError for empty text or more than kMaxMessageWords words.
  static Message make(int sender, std::string text);
  friend bool operator==(const Message&, const Message&) = default;
};

enum class TargetItem : std::uint8_t { kTomato, kPlate, kDish, kNone };

// What the teacher knows beyond the agents' own views: every item resting on
// a cell, and the static layout (via the map id).
struct TaskProgress {
  kitchen::MapId map = kitchen::MapId::kSingleRoom;
  std::vector<std::pair<kitchen::Pos, kitchen::Item>> items;
};
TaskProgress summarize(const kitchen::KitchenState& state);

struct Assignment {
  std::string subtask;
  TargetItem target = TargetItem::kNone;
  kitchen::Verb next = kitchen::Verb::kNoop;
};

struct Labels {
  std::string rule;                  // name of the rule that fired
  std::vector<Assignment> assigned;  // assigned[j] is what agent j is asked to do
  std::vector<Message> messages;     // messages[i] is sent by agent i to its teammate
};

// The deterministic coordinator driven by the bundled rule table.
class ScriptedTeacher {
 public:
  ScriptedTeacher();
  // Custom rule and subtask tables in the bundled formats.
  ScriptedTeacher(std::string_view rules, std::string_view subtasks);

  // observations[i] is agent i's view; poses come from the windows.
  Labels plan(std::span<const prompt::TextObservation> observations, const TaskProgress& progress) const;
  std::vector<Message> label(std::span<const prompt::TextObservation> observations,
                             const TaskProgress& progress) const;

  // Every word the teacher can emit, for vocabulary construction.
  std::vector<std::string> message_words() const;
  std::size_t rule_count() const { return rules_.size(); }

  struct Rule {
    std::string name;
    std::vector<std::pair<std::string, bool>> conditions;  // predicate, negated
    std::string selector;
    std::string first_subtask;
    std::string second_subtask;
  };
  struct Subtask {
    std::string name;
    std::string target;  // tomato, plate, dish, held or none
    std::string text;
  };
  static std::vector<Rule> parse_rules(std::string_view text);
  static std::vector<Subtask> parse_subtasks(std::string_view text);

 private:
  const Subtask& subtask(std::string_view name) const;

  std::vector<Rule> rules_;
  std::vector<Subtask> subtasks_;
};

// Interface shared by the scripted teacher and remote ones.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::vector<Message> label(std::span<const prompt::TextObservation> observations,
                                     const TaskProgress& progress) = 0;
};

class ScriptedTeacherAdapter : public Teacher {
 public:
  std::vector<Message> label(std::span<const prompt::TextObservation> observations,
                             const TaskProgress& progress) override {
    return scripted_.label(observations, progress);
  }

 private:
  ScriptedTeacher scripted_;
};

}  // namespace verco::teacher
