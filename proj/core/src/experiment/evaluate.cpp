#include "verco/experiment/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "verco/common/error.hpp"

namespace verco::experiment {

Quartiles summarize(std::vector<double> values) {
  if (values.empty()) throw UsageError("summarize needs at least one value");
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  Quartiles q;
  q.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  q.q25 = at(0.25);
  q.median = at(0.5);
  q.q75 = at(0.75);
  return q;
}

nlohmann::json EvalSummary::to_json() const {
  auto quart = [](const Quartiles& q) {
    return nlohmann::json{{"mean", q.mean}, {"q25", q.q25}, {"median", q.median}, {"q75", q.q75}};
  };
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& m : per_episode) {
    eps.push_back({{"episode", m.episode}, {"return", m.episode_return}, {"length", m.length}, {"entropy", m.entropy}});
  }
  return {{"episodes", episodes}, {"messages", messages}, {"sampled", sampled}, {"return", quart(episode_return)},
          {"length", quart(length)}, {"entropy", entropy}, {"per_episode", eps}};
}

EvalSummary evaluate(Agent& agent, const EvalOptions& options) {
  if (options.episodes < 1) throw UsageError("eval needs at least one episode");
  auto team = agent.team(options.messages);
  std::mt19937_64 rng(options.seed);
  EvalSummary s;
  s.episodes = options.episodes;
  s.messages = std::string(rl::to_string(team.source()));
  s.sampled = options.sample;
  std::vector<double> returns, lengths;
  double entropy = 0.0;
  for (int k = 0; k < options.episodes; ++k) {
    auto m = rl::run_episode(team, agent.config().env, options.seed + static_cast<std::uint64_t>(k), !options.sample,
                             rng);
    m.episode = k;
    returns.push_back(m.episode_return);
    lengths.push_back(m.length);
    entropy += m.entropy;
    s.per_episode.push_back(m);
  }
  s.episode_return = summarize(returns);
  s.length = summarize(lengths);
  s.entropy = entropy / options.episodes;
  return s;
}

EvalSummary cmd_eval(const std::filesystem::path& checkpoint, const EvalOptions& options) {
  const auto ckpt = textgen::Checkpoint::load(resolve_checkpoint(checkpoint));
  Agent agent(ckpt);
  return evaluate(agent, options);
}

}  // namespace verco::experiment
