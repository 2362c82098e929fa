#include "verco/experiment/transcript.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "verco/common/error.hpp"

namespace verco::experiment {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kHeader = "# verco replay transcript";
constexpr std::string_view kGridIndent = "    ";

std::string num(double v) { return fmt::format("{:.17g}", v); }

class LineReader {
 public:
  explicit LineReader(std::string_view text) {
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      lines_.emplace_back(text.substr(start, end - start));
      start = end + 1;
    }
  }

  bool done() {
    while (pos_ < lines_.size() && lines_[pos_].empty()) ++pos_;
    return pos_ >= lines_.size();
  }
  const std::string& peek() const { return lines_.at(pos_); }
  bool peek_is(std::string_view prefix) const { return pos_ < lines_.size() && lines_[pos_].starts_with(prefix); }
  std::string next() {
    if (pos_ >= lines_.size()) fail("unexpected end of transcript");
    return lines_[pos_++];
  }
  // Value after "<key>: " on the next line.
  std::string field(std::string_view key) {
    const std::string line = next();
    const std::string prefix = std::string(key) + ":";
    if (!line.starts_with(prefix)) fail(fmt::format("expected '{}'", prefix));
    std::string v = line.substr(prefix.size());
    if (!v.empty() && v.front() == ' ') v.erase(0, 1);
    return v;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(fmt::format("transcript line {}: {}", pos_, what));
  }

  template <class T>
  T number(std::string_view key) {
    const std::string s = field(key);
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail(fmt::format("'{}' is not a number", s));
    return v;
  }
  bool boolean(std::string_view key) {
    const std::string s = field(key);
    if (s == "true") return true;
    if (s == "false") return false;
    fail(fmt::format("'{}' is not true or false", s));
  }

 private:
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string ReplayTranscript::render() const {
  std::string out;
  out += fmt::format("{}\n", kHeader);
  out += fmt::format("map: {}\ntask: {}\nhorizon: {}\nenv_seed: {}\npolicy: {}\nmessages: {}\nsteps: {}\n",
                     kitchen::to_string(env.map), kitchen::to_string(env.dish), env.horizon, env_seed, policy,
                     messages, steps.size());
  for (const auto& s : steps) {
    out += fmt::format("\n== step {} ==\ngrid:\n", s.t);
    std::istringstream grid(s.grid);
    for (std::string row; std::getline(grid, row);) out += fmt::format("{}{}\n", kGridIndent, row);
    for (std::size_t i = 0; i < s.actions.size(); ++i) {
      const int who = static_cast<int>(i) + 1;
      if (i < s.observations.size()) out += fmt::format("agent {} sees: {}\n", who, s.observations[i]);
      out += fmt::format("agent {} says: {}\n", who, i < s.messages.size() ? s.messages[i] : "");
      out += fmt::format("agent {} does: {}\n", who, kitchen::AgentAction{s.actions[i]}.surface_text());
      out += fmt::format("agent {} entropy: {} over {} candidates\n", who, num(s.entropies.at(i)), s.candidates.at(i));
    }
    out += fmt::format("reward: {}\nreturn: {}\ndone: {}\n", num(s.reward), num(s.cumulative), s.done ? "true" : "false");
  }
  return out;
}

ReplayTranscript ReplayTranscript::parse(std::string_view text) {
  LineReader in(text);
  ReplayTranscript t;
  if (in.done() || in.next() != kHeader) in.fail("missing transcript header");
  try {
    t.env.map = kitchen::parse_map_id(in.field("map"));
    t.env.dish = kitchen::parse_dish(in.field("task"));
  } catch (const ConfigError& e) {
    in.fail(e.what());
  }
  t.env.horizon = in.number<int>("horizon");
  t.env_seed = in.number<std::uint64_t>("env_seed");
  t.policy = in.field("policy");
  t.messages = in.field("messages");
  const auto count = in.number<std::size_t>("steps");
  while (!in.done()) {
    rl::StepRecord s;
    const std::string head = in.next();
    if (std::sscanf(head.c_str(), "== step %d ==", &s.t) != 1) in.fail("expected '== step <t> =='");
    if (in.next() != "grid:") in.fail("expected 'grid:'");
    while (in.peek_is(kGridIndent)) s.grid += in.next().substr(kGridIndent.size()) + "\n";
    for (int who = 1; in.peek_is(fmt::format("agent {} ", who)); ++who) {
      const std::string tag = fmt::format("agent {}", who);
      if (in.peek_is(tag + " sees:")) s.observations.push_back(in.field(tag + " sees"));
      s.messages.push_back(in.field(tag + " says"));
      try {
        s.actions.push_back(kitchen::AgentAction::from_surface_text(in.field(tag + " does")).verb);
      } catch (const std::exception& e) {
        in.fail(e.what());
      }
      const std::string ent = in.field(tag + " entropy");
      char value[64] = {};
      char rest[16] = {};
      int candidates = 0;
      if (std::sscanf(ent.c_str(), "%63s over %d %15s", value, &candidates, rest) != 3 ||
          std::strcmp(rest, "candidates") != 0) {
        in.fail("expected '<entropy> over <n> candidates'");
      }
      double e = 0.0;
      auto [p, ec] = std::from_chars(value, value + std::strlen(value), e);
      if (ec != std::errc{} || *p != '\0') in.fail("bad entropy value");
      s.entropies.push_back(e);
      s.candidates.push_back(candidates);
    }
    if (s.actions.empty()) in.fail("a step needs agent lines");
    s.reward = in.number<double>("reward");
    s.cumulative = in.number<double>("return");
    s.done = in.boolean("done");
    t.steps.push_back(std::move(s));
  }
  if (t.steps.size() != count) throw FormatError(fmt::format("transcript announces {} steps but holds {}", count, t.steps.size()));
  return t;
}

void ReplayTranscript::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
  out << render();
}

ReplayTranscript ReplayTranscript::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot read '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<std::string> validate_transcript(const ReplayTranscript& t) {
  std::vector<std::string> problems;
  auto state = kitchen::create(t.env.map, t.env.dish, t.env_seed, t.env.horizon);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    auto bad = [&](const std::string& what) { problems.push_back(fmt::format("step {}: {}", s.t, what)); };
    if (state.done) {
      bad("recorded after the episode ended");
      break;
    }
    if (s.t != static_cast<int>(i)) bad(fmt::format("expected step index {}", i));
    if (s.grid != kitchen::render_ascii(state)) bad("grid differs from the simulated state");
    if (s.actions.size() != state.agents.size()) {
      bad(fmt::format("{} actions for {} agents", s.actions.size(), state.agents.size()));
      break;
    }
    for (std::size_t a = 0; a < s.messages.size(); ++a) {
      const int words = teacher::count_words(s.messages[a]);
      if (words > teacher::kMaxMessageWords) bad(fmt::format("agent {} message has {} words", a + 1, words));
    }
    for (std::size_t a = 0; a < s.entropies.size(); ++a) {
      const double cap = std::log(static_cast<double>(std::max(1, s.candidates.at(a))));
      if (s.entropies[a] < 0.0 || s.entropies[a] > cap + 1e-12) {
        bad(fmt::format("agent {} entropy {} outside [0, ln {}]", a + 1, s.entropies[a], s.candidates[a]));
      }
    }
    std::vector<kitchen::AgentAction> joint;
    for (auto v : s.actions) joint.push_back({v});
    const auto outcome = kitchen::step(state, joint);
    cumulative += outcome.reward;
    if (outcome.reward != s.reward) bad(fmt::format("reward {} recorded, {} simulated", num(s.reward), num(outcome.reward)));
    if (cumulative != s.cumulative) bad(fmt::format("return {} recorded, {} simulated", num(s.cumulative), num(cumulative)));
    if (outcome.done != s.done) bad("done flag differs");
  }
  return problems;
}

ReplayTranscript record_replay(Agent& agent, std::uint64_t env_seed, bool greedy,
                               std::optional<rl::MessageSource> messages) {
  auto team = agent.team(messages);
  std::mt19937_64 rng(env_seed);
  ReplayTranscript t;
  t.env = agent.config().env;
  t.env_seed = env_seed;
  t.messages = std::string(rl::to_string(team.source()));
  rl::run_episode(team, t.env, env_seed, greedy, rng, &t.steps);
  return t;
}

fs::path cmd_replay(const fs::path& checkpoint, std::uint64_t seed, const fs::path& out,
                    std::optional<rl::MessageSource> messages) {
  const fs::path ckpt_path = resolve_checkpoint(checkpoint);
  Agent agent(textgen::Checkpoint::load(ckpt_path));
  auto t = record_replay(agent, seed, true, messages);
  t.policy = ckpt_path.string();
  fs::path target = out;
  if (target.empty()) {
    target = ckpt_path.parent_path().parent_path() / "replays" /
             fmt::format("{}-seed-{}.txt", ckpt_path.stem().string(), seed);
  }
  t.save(target);
  return target;
}

}  // namespace verco::experiment
