#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "verco/experiment/run.hpp"

namespace verco::experiment {

// Linear-interpolation quartiles.
struct Quartiles {
  double mean = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  friend bool operator==(const Quartiles&, const Quartiles&) = default;
};
Quartiles summarize(std::vector<double> values);

struct EvalOptions {
  int episodes = 10;
  std::uint64_t seed = 0;  // episode k uses env seed seed + k
  bool sample = false;     // greedy unless set
  std::optional<rl::MessageSource> messages;
};

struct EvalSummary {
  int episodes = 0;
  std::string messages;
  bool sampled = false;
  Quartiles episode_return;
  Quartiles length;
  double entropy = 0.0;  // mean over episodes
  std::vector<rl::EpisodeMetrics> per_episode;

  nlohmann::json to_json() const;
  friend bool operator==(const EvalSummary& a, const EvalSummary& b) { return a.to_json() == b.to_json(); }
};

EvalSummary evaluate(Agent& agent, const EvalOptions& options);
// checkpoint may also be a run directory.
EvalSummary cmd_eval(const std::filesystem::path& checkpoint, const EvalOptions& options);

}  // namespace verco::experiment
