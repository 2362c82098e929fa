#include "verco/rl/rollout.hpp"

#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "verco/common/error.hpp"

namespace verco::rl {

std::string_view to_string(MessageSource m) {
  switch (m) {
    case MessageSource::kPolicy: return "policy";
    case MessageSource::kTeacher: return "teacher";
    case MessageSource::kNone: return "none";
  }
  return "none";
}

MessageSource parse_message_source(std::string_view name) {
  if (name == "policy") return MessageSource::kPolicy;
  if (name == "teacher") return MessageSource::kTeacher;
  if (name == "none") return MessageSource::kNone;
  throw ConfigError(fmt::format("message source must be policy, teacher or none, got '{}'", name));
}

TeamController::TeamController(LanguagePolicy& policy, MessageSource source, teacher::Teacher* teacher)
    : policy_(&policy), language_(&policy), source_(source), teacher_(teacher) {
  if (source == MessageSource::kTeacher && !teacher) throw UsageError("teacher messages need a teacher");
}

TeamController::TeamController(SymbolicPolicy& policy) : policy_(&policy), symbolic_(&policy) {}

std::vector<ActionInput> TeamController::inputs(const kitchen::KitchenState& state, Decision& d) {
  const auto views = kitchen::all_views(state);
  const int n = static_cast<int>(views.size());
  std::vector<ActionInput> out;
  if (symbolic_) {
    d.messages.assign(static_cast<std::size_t>(n), "");
    for (int i = 0; i < n; ++i) out.push_back(symbolic_->action_input(views[i], kitchen::legal_actions(state, i)));
    return out;
  }
  std::vector<prompt::TextObservation> obs;
  for (const auto& w : views) obs.push_back(prompt::textualize(w));
  for (const auto& o : obs) d.observations.push_back(o.text);
  d.messages.assign(static_cast<std::size_t>(n), "");
  if (source_ == MessageSource::kPolicy) {
    for (int i = 0; i < n; ++i) d.messages[i] = language_->message(obs[i]);
  } else if (source_ == MessageSource::kTeacher) {
    const auto labels = teacher_->label(obs, teacher::summarize(state));
    for (const auto& m : labels) d.messages.at(static_cast<std::size_t>(m.sender)) = m.text;
  }
  for (int i = 0; i < n; ++i) {
    std::vector<prompt::ReceivedMessage> received;
    if (source_ != MessageSource::kNone) {
      for (int j = 0; j < n; ++j) {
        if (j != i) received.push_back({j, d.messages[j]});
      }
    }
    out.push_back(language_->action_input(obs[i], received, kitchen::legal_actions(state, i)));
  }
  return out;
}

Decision TeamController::decide(const kitchen::KitchenState& state, bool greedy, std::mt19937_64& rng) {
  Decision d;
  auto in = inputs(state, d);
  for (auto& input : in) {
    AgentSample s;
    const ActionDistribution dist = policy_->distribution(input, &s.value);
    s.action = greedy ? dist.argmax() : dist.sample(rng);
    s.behavior_logprob = dist.log_prob(s.action);
    s.entropy = dist.entropy();
    s.candidates = static_cast<int>(dist.probs.size());
    d.actions.push_back({input.verbs[static_cast<std::size_t>(s.action)]});
    s.input = std::move(input);
    d.samples.push_back(std::move(s));
  }
  return d;
}

std::vector<double> TeamController::values(const kitchen::KitchenState& state) {
  Decision d;
  std::vector<double> out;
  for (const auto& input : inputs(state, d)) {
    double v = 0.0;
    policy_->distribution(input, &v);
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------

RolloutRunner::RolloutRunner(EnvSpec env, std::uint64_t seed) : env_(env), seed_(seed), rng_(seed) {}

void RolloutRunner::start_episode() {
  state_ = kitchen::create(env_.map, env_.dish, seed_ + static_cast<std::uint64_t>(episode_), env_.horizon);
  current_ = EpisodeMetrics{episode_, 0.0, 0, 0.0};
  entropy_sum_ = 0.0;
  decisions_ = 0;
  ++episode_;
}

void RolloutRunner::collect(TeamController& team, RlBuffer& buffer, int steps, const RlConfig& config,
                            std::vector<EpisodeMetrics>& finished) {
  if (steps < 1) throw UsageError("collect needs at least one step");
  if (!buffer.empty()) throw UsageError("collect expects an empty buffer");
  for (int k = 0; k < steps; ++k) {
    if (!state_ || state_->done) start_episode();
    Decision d = team.decide(*state_, false, rng_);
    const auto outcome = kitchen::step(*state_, d.actions);
    ++env_steps_;
    for (const auto& s : d.samples) {
      entropy_sum_ += s.entropy;
      ++decisions_;
    }
    current_.episode_return += outcome.reward;
    ++current_.length;
    buffer.add(Transition{std::move(d.samples), outcome.reward, outcome.done});
    if (outcome.done) {
      current_.entropy = decisions_ > 0 ? entropy_sum_ / decisions_ : 0.0;
      finished.push_back(current_);
    }
  }
  std::vector<double> bootstrap;
  if (!state_->done) bootstrap = team.values(*state_);
  buffer.compute_advantages(config.gamma, config.gae_lambda, bootstrap);
}

namespace {

using nlohmann::json;

json item_json(const std::optional<kitchen::Item>& item) {
  if (!item) return nullptr;
  return json{{"kind", static_cast<int>(item->kind)},
              {"chop", static_cast<int>(item->chop)},
              {"assembled", item->assembled ? json(static_cast<int>(*item->assembled)) : json(nullptr)}};
}

std::optional<kitchen::Item> item_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  kitchen::Item it;
  it.kind = static_cast<kitchen::ItemKind>(j.at("kind").get<int>());
  it.chop = static_cast<kitchen::ChopState>(j.at("chop").get<int>());
  if (!j.at("assembled").is_null()) it.assembled = static_cast<kitchen::Dish>(j.at("assembled").get<int>());
  return it;
}

std::string state_json(const kitchen::KitchenState& s) {
  json cells = json::array();
  for (const auto& c : s.grid) cells.push_back({static_cast<int>(c.kind), item_json(c.item)});
  json agents = json::array();
  for (const auto& a : s.agents) {
    agents.push_back({{"row", a.pos.row}, {"col", a.pos.col}, {"facing", static_cast<int>(a.facing)},
                      {"held", item_json(a.held)}});
  }
  return json{{"map", static_cast<int>(s.map)}, {"task", static_cast<int>(s.task)}, {"grid", cells},
              {"agents", agents}, {"timestep", s.timestep}, {"horizon", s.horizon},
              {"rng_seed", s.rng_seed}, {"done", s.done}}
      .dump();
}

kitchen::KitchenState state_from(const std::string& text) {
  const json j = json::parse(text);
  kitchen::KitchenState s;
  s.map = static_cast<kitchen::MapId>(j.at("map").get<int>());
  s.task = static_cast<kitchen::Dish>(j.at("task").get<int>());
  const auto& cells = j.at("grid");
  if (cells.size() != s.grid.size()) throw FormatError("saved kitchen state has the wrong grid size");
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    s.grid[i].kind = static_cast<kitchen::CellKind>(cells[i].at(0).get<int>());
    s.grid[i].item = item_from(cells[i].at(1));
  }
  for (const auto& a : j.at("agents")) {
    kitchen::AgentPose p;
    p.pos = {a.at("row").get<int>(), a.at("col").get<int>()};
    p.facing = static_cast<kitchen::Direction>(a.at("facing").get<int>());
    p.held = item_from(a.at("held"));
    s.agents.push_back(p);
  }
  s.timestep = j.at("timestep").get<int>();
  s.horizon = j.at("horizon").get<int>();
  s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  s.done = j.at("done").get<bool>();
  return s;
}

}  // namespace

std::map<std::string, std::string> RolloutRunner::export_state() const {
  std::ostringstream rng;
  rng << rng_;
  std::map<std::string, std::string> out{{"rollout.episode", std::to_string(episode_)},
                                         {"rollout.env_steps", std::to_string(env_steps_)},
                                         {"rollout.rng", rng.str()}};
  if (state_ && !state_->done) {
    out["rollout.open_state"] = state_json(*state_);
    out["rollout.open_metrics"] = json{{"episode", current_.episode},
                                       {"return", current_.episode_return},
                                       {"length", current_.length},
                                       {"entropy_sum", entropy_sum_},
                                       {"decisions", decisions_}}
                                      .dump();
  }
  return out;
}

void RolloutRunner::import_state(const std::map<std::string, std::string>& attributes) {
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = attributes.find(key);
    if (it == attributes.end()) throw FormatError("checkpoint lacks '" + key + "'");
    return it->second;
  };
  episode_ = std::stoll(get("rollout.episode"));
  env_steps_ = std::stoll(get("rollout.env_steps"));
  std::istringstream rng(get("rollout.rng"));
  rng >> rng_;
  if (!rng) throw FormatError("checkpoint has a malformed 'rollout.rng'");
  state_.reset();
  if (auto it = attributes.find("rollout.open_state"); it != attributes.end()) {
    try {
      state_ = state_from(it->second);
      const json m = json::parse(get("rollout.open_metrics"));
      current_.episode = m.at("episode").get<long long>();
      current_.episode_return = m.at("return").get<double>();
      current_.length = m.at("length").get<int>();
      current_.entropy = 0.0;
      entropy_sum_ = m.at("entropy_sum").get<double>();
      decisions_ = m.at("decisions").get<int>();
    } catch (const json::exception& e) {
      throw FormatError(std::string("checkpoint has a malformed open episode: ") + e.what());
    }
  }
}

EpisodeMetrics run_episode(TeamController& team, const EnvSpec& env, std::uint64_t env_seed, bool greedy,
                           std::mt19937_64& rng, std::vector<StepRecord>* records) {
  auto state = kitchen::create(env.map, env.dish, env_seed, env.horizon);
  EpisodeMetrics m;
  double entropy_sum = 0.0;
  int decisions = 0;
  while (!state.done) {
    StepRecord rec;
    if (records) rec.grid = kitchen::render_ascii(state);
    Decision d = team.decide(state, greedy, rng);
    const auto outcome = kitchen::step(state, d.actions);
    m.episode_return += outcome.reward;
    ++m.length;
    for (const auto& s : d.samples) {
      entropy_sum += s.entropy;
      ++decisions;
    }
    if (records) {
      rec.t = state.timestep - 1;
      rec.observations = d.observations;
      rec.messages = d.messages;
      for (const auto& a : d.actions) rec.actions.push_back(a.verb);
      for (const auto& s : d.samples) {
        rec.entropies.push_back(s.entropy);
        rec.candidates.push_back(s.candidates);
      }
      rec.reward = outcome.reward;
      rec.cumulative = m.episode_return;
      rec.done = outcome.done;
      records->push_back(std::move(rec));
    }
  }
  m.entropy = decisions > 0 ? entropy_sum / decisions : 0.0;
  return m;
}

}  // namespace verco::rl
