#include "verco/rl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "verco/common/error.hpp"

namespace verco::rl {

namespace ad = textgen::ad;
using textgen::Tensor;

std::string_view to_string(CriticClipMode m) {
  switch (m) {
    case CriticClipMode::kMax: return "max";
    case CriticClipMode::kMin: return "min";
    case CriticClipMode::kNone: return "none";
  }
  return "max";
}

CriticClipMode parse_critic_clip_mode(std::string_view name) {
  if (name == "max") return CriticClipMode::kMax;
  if (name == "min") return CriticClipMode::kMin;
  if (name == "none") return CriticClipMode::kNone;
  throw ConfigError(fmt::format("rl.critic_clip must be max, min or none, got '{}'", name));
}

void RlConfig::validate() const {
  auto fail = [](std::string_view field, std::string_view why) {
    throw ConfigError(fmt::format("rl.{} {}", field, why));
  };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma", "must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda", "must be in [0, 1]");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail("clip_eps", "must be in (0, 1)");
  if (!(critic_coef >= 0.0)) fail("critic_coef", "must be non-negative");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef", "must be non-negative");
  if (epochs < 1) fail("epochs", "must be at least 1");
  if (minibatch < 1) fail("minibatch", "must be at least 1");
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (rollout_steps < 1) fail("rollout_steps", "must be at least 1");
  if (total_steps < 1) fail("total_steps", "must be at least 1");
  if (!(max_grad_norm >= 0.0)) fail("max_grad_norm", "must be non-negative");
  if (agent_weight < 1) fail("agent_weight", "must be at least 1");
}

std::map<std::string, std::string> RlConfig::to_attributes() const {
  auto num = [](double v) { return fmt::format("{:.17g}", v); };
  return {
      {"rl.gamma", num(gamma)},
      {"rl.gae_lambda", num(gae_lambda)},
      {"rl.clip_eps", num(clip_eps)},
      {"rl.critic_coef", num(critic_coef)},
      {"rl.entropy_coef", num(entropy_coef)},
      {"rl.epochs", std::to_string(epochs)},
      {"rl.minibatch", std::to_string(minibatch)},
      {"rl.lr", num(lr)},
      {"rl.rollout_steps", std::to_string(rollout_steps)},
      {"rl.total_steps", std::to_string(total_steps)},
      {"rl.token_norm", token_norm ? "true" : "false"},
      {"rl.critic_clip", std::string(to_string(critic_clip))},
      {"rl.normalize_advantages", normalize_advantages ? "true" : "false"},
      {"rl.max_grad_norm", num(max_grad_norm)},
      {"rl.agent_weight", std::to_string(agent_weight)},
  };
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{} must be a boolean, got '{}'", key, v));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    T out;
    if constexpr (std::is_same_v<T, double>) {
      out = std::stod(v, &used);
    } else {
      out = static_cast<T>(std::stoll(v, &used));
    }
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{} must be a number, got '{}'", key, v));
  }
}

}  // namespace

RlConfig RlConfig::from_attributes(const std::map<std::string, std::string>& attrs) {
  RlConfig c;
  for (const auto& [key, v] : attrs) {
    if (key == "rl.gamma") c.gamma = parse_number<double>(key, v);
    else if (key == "rl.gae_lambda") c.gae_lambda = parse_number<double>(key, v);
    else if (key == "rl.clip_eps") c.clip_eps = parse_number<double>(key, v);
    else if (key == "rl.critic_coef") c.critic_coef = parse_number<double>(key, v);
    else if (key == "rl.entropy_coef") c.entropy_coef = parse_number<double>(key, v);
    else if (key == "rl.epochs") c.epochs = parse_number<int>(key, v);
    else if (key == "rl.minibatch") c.minibatch = parse_number<int>(key, v);
    else if (key == "rl.lr") c.lr = parse_number<double>(key, v);
    else if (key == "rl.rollout_steps") c.rollout_steps = parse_number<int>(key, v);
    else if (key == "rl.total_steps") c.total_steps = parse_number<long long>(key, v);
    else if (key == "rl.token_norm") c.token_norm = parse_bool(key, v);
    else if (key == "rl.critic_clip") c.critic_clip = parse_critic_clip_mode(v);
    else if (key == "rl.normalize_advantages") c.normalize_advantages = parse_bool(key, v);
    else if (key == "rl.max_grad_norm") c.max_grad_norm = parse_number<double>(key, v);
    else if (key == "rl.agent_weight") c.agent_weight = parse_number<int>(key, v);
    else if (key.starts_with("rl.")) throw ConfigError(fmt::format("unknown key '{}'", key));
  }
  return c;
}

// ---------------------------------------------------------------------------

void RlBuffer::clear() {
  transitions_.clear();
  ready_ = false;
}

std::size_t RlBuffer::sample_count() const {
  std::size_t n = 0;
  for (const auto& t : transitions_) n += t.agents.size();
  return n;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                        double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw UsageError(fmt::format("gae: {} rewards but {} values", rewards.size(), values.size()));
  }
  std::vector<double> adv(rewards.size());
  double next_value = bootstrap, running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    adv[i] = running;
    next_value = values[i];
  }
  return adv;
}

void RlBuffer::compute_advantages(double gamma, double lambda, std::span<const double> bootstrap) {
  if (transitions_.empty()) throw UsageError("compute_advantages on an empty buffer");
  const std::size_t n_agents = transitions_.front().agents.size();
  for (const auto& t : transitions_) {
    if (t.agents.size() != n_agents) throw UsageError("transitions disagree on the number of agents");
  }
  if (!transitions_.back().done && bootstrap.size() != n_agents) {
    throw UsageError("an open trailing segment needs one bootstrap value per agent");
  }
  std::size_t begin = 0;
  while (begin < transitions_.size()) {
    std::size_t end = begin;
    while (end < transitions_.size() && !transitions_[end].done) ++end;
    const bool closed = end < transitions_.size();
    if (closed) ++end;  // include the terminal transition
    for (std::size_t a = 0; a < n_agents; ++a) {
      std::vector<double> r, v;
      for (std::size_t t = begin; t < end; ++t) {
        r.push_back(transitions_[t].reward);
        v.push_back(transitions_[t].agents[a].value);
      }
      const auto adv = gae(r, v, closed ? 0.0 : bootstrap[a], gamma, lambda);
      for (std::size_t t = begin; t < end; ++t) {
        auto& s = transitions_[t].agents[a];
        s.advantage = adv[t - begin];
        s.target = s.advantage + s.value;
      }
    }
    begin = end;
  }
  ready_ = true;
}

// ---------------------------------------------------------------------------

namespace {

ad::Var column(std::span<const double> xs) {
  Tensor t(static_cast<int>(xs.size()), 1);
  std::copy(xs.begin(), xs.end(), t.data.begin());
  return ad::constant(std::move(t));
}

}  // namespace

ad::Var policy_loss(const ad::Var& new_logprobs, std::span<const double> behavior_logprobs,
                    std::span<const double> advantages, double eps) {
  const auto n = static_cast<std::size_t>(new_logprobs.rows());
  if (new_logprobs.cols() != 1 || behavior_logprobs.size() != n || advantages.size() != n || n == 0) {
    throw UsageError("policy_loss: batch shapes disagree");
  }
  const ad::Var ratio = ad::exp(ad::sub(new_logprobs, column(behavior_logprobs)));
  const ad::Var adv = column(advantages);
  const ad::Var unclipped = ad::mul(ratio, adv);
  const ad::Var clipped = ad::mul(ad::clamp(ratio, 1.0 - eps, 1.0 + eps), adv);
  return ad::neg(ad::mean(ad::minimum(unclipped, clipped)));
}

ad::Var critic_loss(const ad::Var& values, std::span<const double> old_values, std::span<const double> targets,
                    double eps, CriticClipMode mode) {
  const auto n = static_cast<std::size_t>(values.rows());
  if (values.cols() != 1 || old_values.size() != n || targets.size() != n || n == 0) {
    throw UsageError("critic_loss: batch shapes disagree");
  }
  const ad::Var target = column(targets);
  const ad::Var plain = ad::square(ad::sub(values, target));
  if (mode == CriticClipMode::kNone) return ad::mean(plain);
  const ad::Var old = column(old_values);
  const ad::Var anchored = ad::add(old, ad::clamp(ad::sub(values, old), -eps, eps));
  const ad::Var clipped = ad::square(ad::sub(anchored, target));
  return ad::mean(mode == CriticClipMode::kMax ? ad::maximum(plain, clipped) : ad::minimum(plain, clipped));
}

ad::Var entropy_of(const ad::Var& log_probs) {
  return ad::neg(ad::sum(ad::mul(ad::exp(log_probs), log_probs)));
}

// ---------------------------------------------------------------------------

namespace {

textgen::NamedParameters joined(const ActorCritic& p) {
  auto out = p.actor_parameters();
  auto critic = p.critic_parameters();
  out.insert(out.end(), critic.begin(), critic.end());
  return out;
}

}  // namespace

PpoTrainer::PpoTrainer(ActorCritic& policy, RlConfig config, std::uint64_t seed)
    : policy_(policy), config_((config.validate(), config)), adam_(joined(policy), {config.lr}), seed_(seed) {}

UpdateStats PpoTrainer::update(RlBuffer& buffer) {
  if (buffer.empty()) throw UsageError("update on an empty buffer");
  if (!buffer.advantages_ready()) throw UsageError("update before compute_advantages");

  std::vector<const AgentSample*> samples;
  for (const auto& t : buffer.transitions()) {
    for (const auto& s : t.agents) samples.push_back(&s);
  }
  std::vector<double> advantages(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) advantages[i] = samples[i]->advantage;
  if (config_.normalize_advantages && samples.size() > 1) {
    const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / advantages.size();
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / advantages.size());
    for (double& a : advantages) a = (a - mean) / (sd + 1e-8);
  }

  std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (updates_ + 1)));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto params = adam_.parameters();
  const bool need_critic = config_.critic_coef > 0.0;
  const bool need_entropy = config_.entropy_coef > 0.0;

  UpdateStats stats;
  std::size_t clipped = 0, seen = 0;
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config_.minibatch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config_.minibatch));
      std::vector<ad::Var> picked, values, entropies;
      std::vector<double> behavior, adv, old_values, targets;
      for (std::size_t k = start; k < stop; ++k) {
        const AgentSample& s = *samples[order[k]];
        const ActionEval eval = policy_.evaluate(s.input, need_critic);
        const int chosen[] = {s.action};
        picked.push_back(ad::gather_rows(eval.log_probs, chosen));
        if (need_critic) values.push_back(eval.value);
        if (need_entropy) entropies.push_back(entropy_of(eval.log_probs));
        behavior.push_back(s.behavior_logprob);
        adv.push_back(advantages[order[k]]);
        old_values.push_back(s.value);
        targets.push_back(s.target);
      }
      const ad::Var logprobs = ad::concat_rows(picked);
      ad::Var loss = policy_loss(logprobs, behavior, adv, config_.clip_eps);
      stats.policy_loss += loss.item();
      if (need_critic) {
        const ad::Var c = critic_loss(ad::concat_rows(values), old_values, targets, config_.clip_eps,
                                      config_.critic_clip);
        stats.critic_loss += c.item();
        loss = ad::add(loss, ad::scale(c, config_.critic_coef));
      }
      if (need_entropy) {
        const ad::Var h = ad::mean(ad::concat_rows(entropies));
        stats.entropy += h.item();
        loss = ad::sub(loss, ad::scale(h, config_.entropy_coef));
      }
      loss = ad::scale(loss, static_cast<double>(config_.agent_weight));

      for (std::size_t k = 0; k < behavior.size(); ++k) {
        const double log_ratio = logprobs.value().data[k] - behavior[k];
        stats.approx_kl += std::expm1(log_ratio) - log_ratio;
        if (std::abs(std::exp(log_ratio) - 1.0) > config_.clip_eps) ++clipped;
        ++seen;
      }

      adam_.zero_grad();
      ad::backward(loss);
      if (config_.max_grad_norm > 0.0) textgen::clip_grad_norm(params, config_.max_grad_norm);
      adam_.step();
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    stats.policy_loss /= stats.minibatches;
    stats.critic_loss /= stats.minibatches;
    stats.entropy /= stats.minibatches;
  }
  if (seen > 0) {
    stats.approx_kl /= static_cast<double>(seen);
    stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(seen);
  }
  ++updates_;
  buffer.clear();
  return stats;
}

void PpoTrainer::export_state(std::map<std::string, Tensor>& tensors,
                              std::map<std::string, std::string>& attributes) const {
  adam_.export_state("ppo.adam.", tensors, attributes);
  attributes["ppo.updates"] = std::to_string(updates_);
}

void PpoTrainer::import_state(const std::map<std::string, Tensor>& tensors,
                              const std::map<std::string, std::string>& attributes) {
  adam_.import_state("ppo.adam.", tensors, attributes);
  auto it = attributes.find("ppo.updates");
  if (it == attributes.end()) throw FormatError("checkpoint lacks 'ppo.updates'");
  updates_ = std::stoull(it->second);
}

}  // namespace verco::rl
