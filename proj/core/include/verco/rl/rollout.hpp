#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "verco/kitchen/kitchen_env.hpp"
#include "verco/rl/action_policy.hpp"
#include "verco/rl/ppo.hpp"
#include "verco/rl/symbolic.hpp"
#include "verco/teacher/teacher.hpp"

namespace verco::rl {

// Where the messages an agent receives come from.
enum class MessageSource : std::uint8_t {
  kPolicy,   // the partner's message slot, greedy
  kTeacher,  // teacher labels piped straight to the partner
  kNone,     // no message section at all
};
std::string_view to_string(MessageSource m);
MessageSource parse_message_source(std::string_view name);

struct EnvSpec {
  kitchen::MapId map = kitchen::MapId::kSingleRoom;
  kitchen::Dish dish = kitchen::Dish::kTomatoSalad;
  int horizon = kitchen::kDefaultHorizon;
  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

// Both agents' choices at one state.
struct Decision {
  std::vector<AgentSample> samples;
  std::vector<std::string> observations;  // text views; empty for symbolic agents
  std::vector<std::string> messages;      // messages[i] sent by agent i, empty when none
  std::vector<kitchen::AgentAction> actions;
};

// Turns states into joint actions with one shared policy.
class TeamController {
 public:
  // Language agents; `teacher` is required for MessageSource::kTeacher.
  TeamController(LanguagePolicy& policy, MessageSource source, teacher::Teacher* teacher = nullptr);
  explicit TeamController(SymbolicPolicy& policy);

  ActorCritic& policy() { return *policy_; }
  bool symbolic() const { return symbolic_ != nullptr; }
  MessageSource source() const { return source_; }

  // greedy picks argmax; otherwise samples with rng.
  Decision decide(const kitchen::KitchenState& state, bool greedy, std::mt19937_64& rng);
  // Value estimates of both agents without choosing actions.
  std::vector<double> values(const kitchen::KitchenState& state);

 private:
  std::vector<ActionInput> inputs(const kitchen::KitchenState& state, Decision& d);

  ActorCritic* policy_;
  LanguagePolicy* language_ = nullptr;
  SymbolicPolicy* symbolic_ = nullptr;
  MessageSource source_ = MessageSource::kNone;
  teacher::Teacher* teacher_ = nullptr;
};

struct EpisodeMetrics {
  long long episode = 0;
  double episode_return = 0.0;
  int length = 0;
  double entropy = 0.0;  // mean over agent decisions
};

// One row of a replay transcript.
struct StepRecord {
  int t = 0;
  std::string grid;  // before the step
  std::vector<std::string> observations;
  std::vector<std::string> messages;
  std::vector<kitchen::Verb> actions;
  std::vector<double> entropies;
  std::vector<int> candidates;
  double reward = 0.0;
  double cumulative = 0.0;
  bool done = false;
};

// Steps environments with the controller and keeps an episode open across
// collect calls. Episode k uses env seed base_seed + k.
class RolloutRunner {
 public:
  RolloutRunner(EnvSpec env, std::uint64_t seed);

  // Appends `steps` transitions and computes their advantages. Metrics of
  // episodes finished during the call are appended to `finished`.
  void collect(TeamController& team, RlBuffer& buffer, int steps, const RlConfig& config,
               std::vector<EpisodeMetrics>& finished);

  long long episodes_started() const { return episode_; }
  long long env_steps() const { return env_steps_; }
  std::mt19937_64& rng() { return rng_; }

  // Resumable position: counters, rng state and the open episode.
  std::map<std::string, std::string> export_state() const;
  void import_state(const std::map<std::string, std::string>& attributes);

 private:
  void start_episode();

  EnvSpec env_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::optional<kitchen::KitchenState> state_;
  long long episode_ = 0;
  long long env_steps_ = 0;
  EpisodeMetrics current_;
  double entropy_sum_ = 0.0;
  int decisions_ = 0;
};

// One full episode from a fresh environment; fills `records` when given.
EpisodeMetrics run_episode(TeamController& team, const EnvSpec& env, std::uint64_t env_seed, bool greedy,
                           std::mt19937_64& rng, std::vector<StepRecord>* records = nullptr);

}  // namespace verco::rl
