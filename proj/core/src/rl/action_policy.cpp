#include "verco/rl/action_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "verco/common/error.hpp"

namespace verco::rl {

namespace ad = textgen::ad;
using textgen::LanguageModel;
using textgen::SlotId;
using textgen::Tensor;

std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("softmax of an empty score list");
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += (p[i] = std::exp(scores[i] - m));
  for (double& v : p) v /= z;
  return p;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

int ActionDistribution::argmax() const {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

int ActionDistribution::sample(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

double ActionDistribution::log_prob(int index) const {
  // log softmax computed from the scores rather than log(probs) for accuracy.
  const double m = *std::max_element(logprobs.begin(), logprobs.end());
  double z = 0.0;
  for (double s : logprobs) z += std::exp(s - m);
  return logprobs[static_cast<std::size_t>(index)] - m - std::log(z);
}

LanguagePolicy::LanguagePolicy(LanguageModel& model, const textgen::Vocabulary& vocab, PolicyOptions options)
    : model_(model), vocab_(vocab), options_(options) {
  if (options_.message_tokens < 1) throw ConfigError("policy.message_tokens must be at least 1");
}

std::string LanguagePolicy::message(const prompt::TextObservation& obs) {
  if (auto it = message_cache_.find(obs.text); it != message_cache_.end()) return it->second;
  const auto prompt = vocab_.encode(prompt::message_prompt(obs));
  const auto out = model_.generate(prompt, &model_.slot(SlotId::kMessage), options_.message_tokens,
                                   textgen::GenerationMode::greedy_mode(), &vocab_);
  std::string text = vocab_.decode(out.ids);
  message_cache_.emplace(obs.text, text);
  return text;
}

ActionInput LanguagePolicy::action_input(const prompt::TextObservation& obs,
                                         std::span<const prompt::ReceivedMessage> received,
                                         std::span<const kitchen::AgentAction> legal) const {
  if (legal.empty()) throw UsageError("action_input needs at least one candidate action");
  ActionInput in;
  const std::string text = prompt::action_prompt(obs, received);
  in.prompt = vocab_.encode(text);
  const auto obs_tokens = vocab_.encode(text.substr(0, prompt::action_prompt_observation_length(obs)));
  in.value_row = LanguageModel::prompt_row(static_cast<int>(obs_tokens.size()) - 1);
  for (const auto& a : legal) {
    in.verbs.push_back(a.verb);
    in.candidates.push_back(vocab_.encode(a.surface_text()));
  }
  return in;
}

ActionEval LanguagePolicy::evaluate(const ActionInput& input, bool with_value) const {
  const auto& slot = model_.slot(SlotId::kAction);
  auto scores = model_.score_candidates(input.prompt, input.candidates, &slot);
  ad::Var raw = scores.logprobs;
  if (options_.token_norm) {
    Tensor inv(static_cast<int>(input.candidates.size()), 1);
    for (std::size_t i = 0; i < input.candidates.size(); ++i) inv.data[i] = 1.0 / static_cast<double>(input.candidates[i].size());
    raw = ad::mul(raw, ad::constant(std::move(inv)));
  }
  ActionEval out;
  out.log_probs = ad::log_softmax_vector(raw);
  if (with_value) out.value = model_.value_at(scores.hidden, input.value_row);
  return out;
}

ActionDistribution LanguagePolicy::distribution(const ActionInput& input, double* value) const {
  ad::NoGradGuard no_grad;
  const auto& slot = model_.slot(SlotId::kAction);
  auto scores = model_.score_candidates(input.prompt, input.candidates, &slot);
  ActionDistribution d;
  d.candidates = input.verbs;
  d.logprobs = scores.logprobs.value().data;
  if (options_.token_norm) {
    for (std::size_t i = 0; i < d.logprobs.size(); ++i) d.logprobs[i] /= static_cast<double>(input.candidates[i].size());
  }
  d.probs = softmax(d.logprobs);
  if (value) *value = model_.value_at(scores.hidden, input.value_row).item();
  return d;
}

textgen::NamedParameters LanguagePolicy::actor_parameters() const {
  return model_.slot(SlotId::kAction).parameters();
}

textgen::NamedParameters LanguagePolicy::critic_parameters() const { return model_.value_head().parameters(); }

ActionDistribution action_distribution(const LanguageModel& model, const textgen::Vocabulary& vocab,
                                       const prompt::TextObservation& obs,
                                       std::span<const prompt::ReceivedMessage> received,
                                       std::span<const kitchen::AgentAction> legal, bool token_norm) {
  // LanguagePolicy only mutates its message cache, which this path never touches.
  LanguagePolicy policy(const_cast<LanguageModel&>(model), vocab, PolicyOptions{token_norm, 10});
  return policy.distribution(policy.action_input(obs, received, legal));
}

}  // namespace verco::rl
