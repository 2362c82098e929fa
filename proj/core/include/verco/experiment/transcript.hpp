#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "verco/experiment/run.hpp"

namespace verco::experiment {

// One recorded episode in a plain-text layout that parses back losslessly.
struct ReplayTranscript {
  rl::EnvSpec env;
  std::uint64_t env_seed = 0;
  std::string policy;    // checkpoint the episode came from
  std::string messages;  // message source
  std::vector<rl::StepRecord> steps;

  double total_return() const { return steps.empty() ? 0.0 : steps.back().cumulative; }
  std::string render() const;
  // FormatError with a line number on malformed input.
  static ReplayTranscript parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static ReplayTranscript load(const std::filesystem::path& path);
};

// Re-simulates the recorded joint actions. Returns one line per problem;
// empty when rewards match bit-for-bit and every message is within bounds.
std::vector<std::string> validate_transcript(const ReplayTranscript& t);

ReplayTranscript record_replay(Agent& agent, std::uint64_t env_seed, bool greedy = true,
                               std::optional<rl::MessageSource> messages = std::nullopt);

// Writes <run dir>/replays/<checkpoint>-seed-<seed>.txt unless `out` is given.
std::filesystem::path cmd_replay(const std::filesystem::path& checkpoint, std::uint64_t seed,
                                 const std::filesystem::path& out = {},
                                 std::optional<rl::MessageSource> messages = std::nullopt);

}  // namespace verco::experiment
