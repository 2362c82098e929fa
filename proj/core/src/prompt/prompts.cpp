#include "verco/prompt/prompts.hpp"

#include <cstdlib>

#include "verco/common/error.hpp"
#include "verco/prompt/template.hpp"
#include "verco/textgen/vocabulary.hpp"

namespace verco::prompt {

using kitchen::CellKind;

namespace {

const PromptTemplate& message_template() {
  static const PromptTemplate t = PromptTemplate::bundled("message.tmpl");
  return t;
}
const PromptTemplate& action_template() {
  static const PromptTemplate t = PromptTemplate::bundled("action.tmpl");
  return t;
}
const PromptTemplate& received_template() {
  static const PromptTemplate t = PromptTemplate::bundled("received_message.tmpl");
  return t;
}
const PromptTemplate& teacher_template() {
  static const PromptTemplate t = PromptTemplate::bundled("teacher.tmpl");
  return t;
}
const PromptTemplate& teacher_observation_template() {
  static const PromptTemplate t = PromptTemplate::bundled("teacher_observation.tmpl");
  return t;
}

std::string_view count_word(int n) {
  switch (n) {
    case 1: return "one";
    case 2: return "two";
    case 3: return "three";
    default: return "many";
  }
}

bool notable(const kitchen::CellSnapshot& c) {
  if (c.agent || c.item) return true;
  switch (c.kind) {
    case CellKind::kTomatoSource:
    case CellKind::kCutboard:
    case CellKind::kPlateSource:
    case CellKind::kDelivery: return true;
    default: return false;
  }
}

std::string entity_phrase(const kitchen::CellSnapshot& c) {
  if (c.agent) return "partner";
  if (c.item) return item_phrase(*c.item) + " on " + std::string(kitchen::to_string(c.kind));
  return std::string(kitchen::to_string(c.kind));
}

}  // namespace

std::string item_phrase(const kitchen::Item& item) {
  if (item.is_whole_tomato()) return "whole tomato";
  if (item.is_chopped_tomato()) return "chopped tomato";
  if (item.is_dish()) return "tomato salad";
  return "empty plate";
}

std::string locator(int dr, int dc) {
  if (dr == 0 && dc == 0) throw UsageError("locator of the agent's own cell");
  std::string out;
  if (dr != 0) {
    out += count_word(std::abs(dr));
    out += dr < 0 ? " north" : " south";
  }
  if (dc != 0) {
    if (!out.empty()) out += ' ';
    out += count_word(std::abs(dc));
    out += dc < 0 ? " west" : " east";
  }
  return out;
}

TextObservation textualize(const kitchen::ObservationWindow& w) {
  std::string text = "you hold ";
  text += w.own_held ? item_phrase(*w.own_held) : "nothing";
  text += " . you face ";
  text += kitchen::to_string(w.own_facing);
  text += " .";
  bool any = false;
  for (int dr = -kitchen::kWindowRadius; dr <= kitchen::kWindowRadius; ++dr) {
    for (int dc = -kitchen::kWindowRadius; dc <= kitchen::kWindowRadius; ++dc) {
      if (dr == 0 && dc == 0) continue;
      const auto& cell = w.at(dr, dc);
      if (!cell || !notable(*cell)) continue;
      text += ' ';
      text += entity_phrase(*cell);
      text += ' ';
      text += locator(dr, dc);
      text += " .";
      any = true;
    }
  }
  if (!any) {
    text += ' ';
    text += kNothingNotable;
  }
  return TextObservation{std::move(text), w};
}

std::vector<std::string> policy_words() {
  std::vector<std::string> words;
  auto add = [&](std::string_view text) {
    for (auto& w : textgen::tokenize_words(text)) words.push_back(std::move(w));
  };
  add("you hold nothing . you face on partner");
  add(kNothingNotable);
  for (auto d : {kitchen::Direction::kNorth, kitchen::Direction::kSouth, kitchen::Direction::kWest, kitchen::Direction::kEast}) {
    add(kitchen::to_string(d));
  }
  for (int k = 0; k < kitchen::kNumCellKinds; ++k) add(kitchen::to_string(static_cast<CellKind>(k)));
  for (const auto& item : {kitchen::Item::whole_tomato(), kitchen::Item::chopped_tomato(), kitchen::Item::empty_plate(),
                           kitchen::Item::salad()}) {
    add(item_phrase(item));
  }
  for (int d = 1; d <= kitchen::kWindowRadius; ++d) add(locator(-d, d));
  for (const PromptTemplate* t : {&message_template(), &action_template(), &received_template()}) {
    for (const auto& lit : t->literals()) add(lit);
  }
  for (int i = 1; i <= kitchen::kNumAgents; ++i) add(std::to_string(i));
  for (const auto& a : kitchen::AgentAction::all()) add(a.surface_text());
  return words;
}

std::string environment_description() {
  return "two cooks share a 7x7 kitchen with a tomato source, cutboards, a plate source and a delivery window, "
         "and each cook only sees the 5x5 square around itself";
}

std::string task_goal() { return "a tomato salad (chop a tomato, put it on a plate, deliver the plate)"; }

std::string teacher_prompt(std::span<const TextObservation> observations, int n) {
  if (n < 2 || static_cast<std::size_t>(n) != observations.size()) {
    throw UsageError("teacher_prompt needs n == number of observations >= 2");
  }
  std::string per_agent;
  for (int i = 0; i < n; ++i) {
    per_agent += teacher_observation_template().render({
        {"index", std::to_string(i + 1)},
        {"observation", observations[static_cast<std::size_t>(i)].text},
        {"separator", i + 1 == n ? ".\n" : ",\n"},
    });
  }
  return teacher_template().render({
      {"n", std::to_string(n)},
      {"environment", environment_description()},
      {"observations", per_agent},
      {"goal", task_goal()},
  });
}

std::string message_prompt(const TextObservation& obs) {
  return message_template().render({{"observation", obs.text}});
}

std::string action_prompt(const TextObservation& obs, std::span<const ReceivedMessage> received) {
  std::string section;
  for (const ReceivedMessage& m : received) {
    section += received_template().render({{"sender", std::to_string(m.sender + 1)}, {"text", m.text}});
  }
  return action_template().render({{"observation", obs.text}, {"messages", section}});
}

std::size_t action_prompt_observation_length(const TextObservation& obs) {
  return action_template().role_preamble().size() + obs.text.size();
}

}  // namespace verco::prompt
