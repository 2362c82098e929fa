#include "verco/rl/symbolic.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "verco/common/error.hpp"

namespace verco::rl {

namespace ad = textgen::ad;
using textgen::Tensor;

std::vector<double> encode_window(const kitchen::ObservationWindow& window) {
  std::vector<double> f(kSymbolicFeatures, 0.0);
  for (std::size_t i = 0; i < window.cells.size(); ++i) {
    const auto& cell = window.cells[i];
    if (!cell) continue;
    double* base = f.data() + i * kSymbolicCellFeatures;
    base[static_cast<int>(cell->kind)] = 1.0;
    if (cell->item) base[kitchen::kNumCellKinds + kitchen::item_state_index(*cell->item)] = 1.0;
  }
  double* pose = f.data() + kitchen::kWindowSize * kitchen::kWindowSize * kSymbolicCellFeatures;
  pose[window.own_held ? 1 + kitchen::item_state_index(*window.own_held) : 0] = 1.0;
  pose[1 + kitchen::kNumItemStates + static_cast<int>(window.own_facing)] = 1.0;
  return f;
}

namespace {

Tensor normal(int rows, int cols, double sd, std::mt19937_64& rng) {
  Tensor t(rows, cols);
  std::normal_distribution<double> d(0.0, sd);
  for (double& v : t.data) v = d(rng);
  return t;
}

}  // namespace

SymbolicPolicy::SymbolicPolicy(SymbolicConfig config) : config_(config) {
  if (config_.hidden < 1) throw ConfigError("symbolic.hidden must be at least 1");
  std::mt19937_64 rng(config_.seed ^ 0x5eedb10cULL);
  const int h = config_.hidden, in = kSymbolicFeatures;
  const double in_sd = 1.0 / std::sqrt(static_cast<double>(in));
  a_w1_ = ad::parameter(normal(h, in, in_sd, rng), true);
  a_b1_ = ad::parameter(Tensor(1, h), true);
  // Small output layer so the untrained actor is close to uniform.
  a_w2_ = ad::parameter(normal(kitchen::kNumVerbs, h, 0.01, rng), true);
  a_b2_ = ad::parameter(Tensor(kitchen::kNumVerbs, 1), true);
  c_w1_ = ad::parameter(normal(h, in, in_sd, rng), true);
  c_b1_ = ad::parameter(Tensor(1, h), true);
  c_w2_ = ad::parameter(Tensor(1, h), true);
  c_b2_ = ad::parameter(Tensor(1, 1), true);
}

ActionInput SymbolicPolicy::action_input(const kitchen::ObservationWindow& window,
                                         std::span<const kitchen::AgentAction> legal) const {
  if (legal.empty()) throw UsageError("action_input needs at least one candidate action");
  ActionInput in;
  in.features = encode_window(window);
  for (const auto& a : legal) in.verbs.push_back(a.verb);
  return in;
}

ad::Var SymbolicPolicy::logits(const ActionInput& input) const {
  if (input.features.size() != static_cast<std::size_t>(kSymbolicFeatures)) {
    throw UsageError(fmt::format("symbolic input has {} features, expected {}", input.features.size(),
                                 kSymbolicFeatures));
  }
  Tensor x(1, kSymbolicFeatures);
  x.data = input.features;
  const ad::Var h = ad::gelu(ad::add_row(ad::matmul_nt(ad::constant(std::move(x)), a_w1_), a_b1_));
  const ad::Var all = ad::add(ad::matmul_nt(a_w2_, h), a_b2_);  // verbs x 1
  std::vector<int> rows;
  for (kitchen::Verb v : input.verbs) rows.push_back(static_cast<int>(v));
  return ad::gather_rows(all, rows);
}

ad::Var SymbolicPolicy::value(const ActionInput& input) const {
  Tensor x(1, kSymbolicFeatures);
  x.data = input.features;
  const ad::Var h = ad::gelu(ad::add_row(ad::matmul_nt(ad::constant(std::move(x)), c_w1_), c_b1_));
  return ad::add_row(ad::matmul_nt(h, c_w2_), c_b2_);
}

ActionDistribution SymbolicPolicy::distribution(const ActionInput& input, double* v) const {
  ad::NoGradGuard no_grad;
  ActionDistribution d;
  d.candidates = input.verbs;
  d.logprobs = logits(input).value().data;
  d.probs = softmax(d.logprobs);
  if (v) *v = value(input).item();
  return d;
}

ActionEval SymbolicPolicy::evaluate(const ActionInput& input, bool with_value) const {
  ActionEval out;
  out.log_probs = ad::log_softmax_vector(logits(input));
  if (with_value) out.value = value(input);
  return out;
}

textgen::NamedParameters SymbolicPolicy::actor_parameters() const {
  return {{"symbolic.actor.w1", a_w1_}, {"symbolic.actor.b1", a_b1_}, {"symbolic.actor.w2", a_w2_},
          {"symbolic.actor.b2", a_b2_}};
}

textgen::NamedParameters SymbolicPolicy::critic_parameters() const {
  return {{"symbolic.critic.w1", c_w1_}, {"symbolic.critic.b1", c_b1_}, {"symbolic.critic.w2", c_w2_},
          {"symbolic.critic.b2", c_b2_}};
}

textgen::NamedParameters SymbolicPolicy::parameters() const {
  auto out = actor_parameters();
  auto c = critic_parameters();
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

void SymbolicPolicy::load_parameters(const std::map<std::string, Tensor>& values) {
  for (auto& [name, var] : parameters()) {
    auto it = values.find(name);
    if (it == values.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (!it->second.same_shape(var.value())) throw FormatError("tensor '" + name + "' has the wrong shape");
    ad::Var v = var;
    v.mutable_value() = it->second;
  }
}

}  // namespace verco::rl
