#pragma once

#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "verco/kitchen/types.hpp"
#include "verco/prompt/prompts.hpp"
#include "verco/textgen/model.hpp"

namespace verco::rl {

// Softmax over candidate scores; sums to one for any finite input.
std::vector<double> softmax(std::span<const double> scores);
double entropy(std::span<const double> probs);

struct ActionDistribution {
  std::vector<kitchen::Verb> candidates;
  std::vector<double> logprobs;  // per-candidate sequence scores
  std::vector<double> probs;     // softmax of logprobs

  int argmax() const;
  int sample(std::mt19937_64& rng) const;
  double entropy() const { return rl::entropy(probs); }
  double log_prob(int index) const;
};

// Everything needed to score one agent's action choice again later.
struct ActionInput {
  textgen::TokenSequence prompt;
  int value_row = 0;  // hidden row of the last observation token
  std::vector<kitchen::Verb> verbs;
  std::vector<textgen::TokenSequence> candidates;
  // Numeric observation, used by policies that do not read text.
  std::vector<double> features;
};

// Differentiable scores of an ActionInput.
struct ActionEval {
  textgen::ad::Var log_probs;  // n x 1, normalized over candidates
  textgen::ad::Var value;      // 1 x 1, or empty when not requested
};

struct PolicyOptions {
  // Divide each candidate's score by its token count.
  bool token_norm = false;
  int message_tokens = 10;
};

// What PPO needs from a policy. Both agents share one instance.
class ActorCritic {
 public:
  virtual ~ActorCritic() = default;
  // Grad-free distribution plus the value estimate.
  virtual ActionDistribution distribution(const ActionInput& input, double* value = nullptr) const = 0;
  virtual ActionEval evaluate(const ActionInput& input, bool with_value) const = 0;
  virtual textgen::NamedParameters actor_parameters() const = 0;
  virtual textgen::NamedParameters critic_parameters() const = 0;
};

// The language agent: message slot for talking, action slot for acting,
// value head for the critic.
class LanguagePolicy : public ActorCritic {
 public:
  LanguagePolicy(textgen::LanguageModel& model, const textgen::Vocabulary& vocab, PolicyOptions options = {});

  textgen::LanguageModel& model() { return model_; }
  const textgen::LanguageModel& model() const { return model_; }
  const textgen::Vocabulary& vocab() const { return vocab_; }
  const PolicyOptions& options() const { return options_; }

  // Greedy message for an observation. Cached by observation text, which is
  // valid as long as the message slot does not change.
  std::string message(const prompt::TextObservation& obs);
  void clear_message_cache() { message_cache_.clear(); }
  std::size_t message_cache_size() const { return message_cache_.size(); }

  ActionInput action_input(const prompt::TextObservation& obs, std::span<const prompt::ReceivedMessage> received,
                           std::span<const kitchen::AgentAction> legal) const;
  ActionDistribution distribution(const ActionInput& input, double* value = nullptr) const override;
  ActionEval evaluate(const ActionInput& input, bool with_value) const override;
  textgen::NamedParameters actor_parameters() const override;
  textgen::NamedParameters critic_parameters() const override;

 private:
  textgen::LanguageModel& model_;
  const textgen::Vocabulary& vocab_;
  PolicyOptions options_;
  std::map<std::string, std::string, std::less<>> message_cache_;
};

// Scores legal actions for one observation and its received messages with
// the action slot.
ActionDistribution action_distribution(const textgen::LanguageModel& model, const textgen::Vocabulary& vocab,
                                       const prompt::TextObservation& obs,
                                       std::span<const prompt::ReceivedMessage> received,
                                       std::span<const kitchen::AgentAction> legal, bool token_norm = false);

}  // namespace verco::rl
