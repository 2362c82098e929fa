#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "verco/kitchen/types.hpp"
#include "verco/rl/action_policy.hpp"

namespace verco::rl {

// Per window cell: one-hot kind and one-hot item state (all zero when
// occluded). Then held item (none + item states) and facing, one-hot.
inline constexpr int kSymbolicCellFeatures = kitchen::kNumCellKinds + kitchen::kNumItemStates;
inline constexpr int kSymbolicPoseFeatures = 1 + kitchen::kNumItemStates + 4;
inline constexpr int kSymbolicFeatures =
    kitchen::kWindowSize * kitchen::kWindowSize * kSymbolicCellFeatures + kSymbolicPoseFeatures;

std::vector<double> encode_window(const kitchen::ObservationWindow& window);

struct SymbolicConfig {
  int hidden = 64;
  std::uint64_t seed = 0;
  friend bool operator==(const SymbolicConfig&, const SymbolicConfig&) = default;
};

// Separate two-layer MLPs for the actor (one logit per verb) and the critic.
class SymbolicPolicy : public ActorCritic {
 public:
  explicit SymbolicPolicy(SymbolicConfig config);

  const SymbolicConfig& config() const { return config_; }
  ActionInput action_input(const kitchen::ObservationWindow& window,
                           std::span<const kitchen::AgentAction> legal) const;

  ActionDistribution distribution(const ActionInput& input, double* value = nullptr) const override;
  ActionEval evaluate(const ActionInput& input, bool with_value) const override;
  textgen::NamedParameters actor_parameters() const override;
  textgen::NamedParameters critic_parameters() const override;
  textgen::NamedParameters parameters() const;
  void load_parameters(const std::map<std::string, textgen::Tensor>& values);

 private:
  textgen::ad::Var logits(const ActionInput& input) const;  // n x 1 over the legal verbs
  textgen::ad::Var value(const ActionInput& input) const;

  SymbolicConfig config_;
  textgen::ad::Var a_w1_, a_b1_, a_w2_, a_b2_;
  textgen::ad::Var c_w1_, c_b1_, c_w2_, c_b2_;
};

}  // namespace verco::rl
