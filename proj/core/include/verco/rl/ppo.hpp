#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "verco/rl/action_policy.hpp"
#include "verco/textgen/optim.hpp"

namespace verco::rl {

// Which squared error the critic keeps per sample.
enum class CriticClipMode : std::uint8_t { kMax, kMin, kNone };
std::string_view to_string(CriticClipMode m);
CriticClipMode parse_critic_clip_mode(std::string_view name);

struct RlConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double critic_coef = 0.5;
  double entropy_coef = 0.01;
  int epochs = 4;
  int minibatch = 32;
  double lr = 1e-3;
  int rollout_steps = 512;
  long long total_steps = 50000;
  bool token_norm = false;
  CriticClipMode critic_clip = CriticClipMode::kMax;
  bool normalize_advantages = true;
  // 0 disables clipping.
  double max_grad_norm = 0.5;
  // Losses of the agents are summed, so a minibatch mean is scaled by this.
  int agent_weight = 2;

  // Throws ConfigError naming the offending field.
  void validate() const;
  std::map<std::string, std::string> to_attributes() const;
  static RlConfig from_attributes(const std::map<std::string, std::string>& attrs);
  friend bool operator==(const RlConfig&, const RlConfig&) = default;
};

// One agent's decision at one step.
struct AgentSample {
  ActionInput input;
  int action = 0;
  double behavior_logprob = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  int candidates = 0;
  double advantage = 0.0;
  double target = 0.0;  // advantage + value
};

struct Transition {
  std::vector<AgentSample> agents;
  double reward = 0.0;  // team reward
  bool done = false;
};

// Ordered transitions of one rollout phase.
class RlBuffer {
 public:
  void add(Transition t) { transitions_.push_back(std::move(t)); }
  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  void clear();
  std::vector<Transition>& transitions() { return transitions_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  std::size_t sample_count() const;

  // Fills advantages and targets. Segments end at done flags; bootstrap[i]
  // is agent i's value after the last transition when it is not done.
  void compute_advantages(double gamma, double lambda, std::span<const double> bootstrap);
  bool advantages_ready() const { return ready_; }

 private:
  std::vector<Transition> transitions_;
  bool ready_ = false;
};

// delta_t = r_t + gamma V_{t+1} - V_t, A_t = delta_t + gamma lambda A_{t+1},
// with V_T = bootstrap.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                        double gamma, double lambda);

// -mean(min(r A, clip(r, 1 - eps, 1 + eps) A)), r = exp(new - behavior).
// new_logprobs is B x 1.
textgen::ad::Var policy_loss(const textgen::ad::Var& new_logprobs, std::span<const double> behavior_logprobs,
                             std::span<const double> advantages, double eps);
// Mean squared error of the value against its target, with the old-value
// anchored clipped branch combined per `mode`. values is B x 1.
textgen::ad::Var critic_loss(const textgen::ad::Var& values, std::span<const double> old_values,
                             std::span<const double> targets, double eps, CriticClipMode mode);
// Entropy of a normalized n x 1 log-probability vector as a 1 x 1 Var.
textgen::ad::Var entropy_of(const textgen::ad::Var& log_probs);

struct UpdateStats {
  double policy_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

// Owns the optimizer over the policy's actor and critic parameters.
class PpoTrainer {
 public:
  PpoTrainer(ActorCritic& policy, RlConfig config, std::uint64_t seed);

  // Minibatch passes over the buffer, then clears it. Requires computed
  // advantages.
  UpdateStats update(RlBuffer& buffer);

  const RlConfig& config() const { return config_; }
  textgen::Adam& optimizer() { return adam_; }
  std::uint64_t updates() const { return updates_; }

  void export_state(std::map<std::string, textgen::Tensor>& tensors,
                    std::map<std::string, std::string>& attributes) const;
  void import_state(const std::map<std::string, textgen::Tensor>& tensors,
                    const std::map<std::string, std::string>& attributes);

 private:
  ActorCritic& policy_;
  RlConfig config_;
  textgen::Adam adam_;
  std::uint64_t seed_;
  std::uint64_t updates_ = 0;
};

}  // namespace verco::rl
