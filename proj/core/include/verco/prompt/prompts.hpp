#pragma once

#include <span>
#include <string>
#include <vector>

#include "verco/kitchen/types.hpp"

namespace verco::prompt {

struct TextObservation {
  std::string text;
  kitchen::ObservationWindow source_window;
};

// A message as received by a teammate: who sent it and what it says.
struct ReceivedMessage {
  int sender = 0;
  std::string text;
};

inline constexpr const char* kNothingNotable = "you see nothing notable .";

// Deterministic description of a window: held item, facing, then every
// notable visible entity (stations, items, the teammate) in row-major order
// with a relative locator such as "two north one east".
TextObservation textualize(const kitchen::ObservationWindow& window);

// Phrase for an item ("whole tomato", "tomato salad", ...).
std::string item_phrase(const kitchen::Item& item);
// Relative locator for an offset; dr/dc must not both be zero.
std::string locator(int dr, int dc);

// Teacher prompt over all agents' observations; throws UsageError unless
// n == observations.size() >= 2.
std::string teacher_prompt(std::span<const TextObservation> observations, int n);

// Message-policy prompt: the local observation followed by the send question.
std::string message_prompt(const TextObservation& obs);

// Action-policy prompt: observation, then each received message attributed
// to its sender (the section is omitted when `received` is empty), then the
// choice suffix. Because the observation is a prefix, any causal read at the
// end of the observation is independent of the messages.
std::string action_prompt(const TextObservation& obs, std::span<const ReceivedMessage> received);

// Length in characters of the observation prefix of action_prompt().
std::size_t action_prompt_observation_length(const TextObservation& obs);

// Every word that observations, message prompts and action prompts (with
// agent indices as senders) can contain, received message text excluded.
std::vector<std::string> policy_words();

// Fixed wording filling the teacher template's description slots.
std::string environment_description();
std::string task_goal();

}  // namespace verco::prompt
