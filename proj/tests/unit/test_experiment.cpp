#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "verco/common/error.hpp"
#include "verco/experiment/evaluate.hpp"
#include "verco/experiment/plot.hpp"
#include "verco/experiment/run.hpp"
#include "verco/experiment/transcript.hpp"

using namespace verco;
using namespace verco::experiment;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("verco_exp_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig tiny(const fs::path& out, Baseline b = Baseline::kVerco) {
  const std::string ini = R"(
[run]
name = tiny
seeds = 3
checkpoint_every = 1
[model]
d_model = 16
n_heads = 2
n_layers = 1
context_length = 256
lora_rank = 2
[sft]
episodes = 1
epochs = 1
batch_size = 32
[rl]
rollout_steps = 60
total_steps = 180
minibatch = 30
epochs = 1
)";
  RunConfig c = parse_config(ini, std::vector<std::string>{"run.output=" + out.string()});
  c.baseline = b;
  return c;
}

}  // namespace

TEST(RunConfig, IniRoundTrip) {
  RunConfig c;
  c.name = "abc";
  c.seeds = {0, 5, 9};
  c.env.map = kitchen::MapId::kSeparateRooms;
  c.baseline = Baseline::kSymbolic;
  c.model.lora_targets = textgen::parse_lora_targets("q,mlp_up");
  c.rl.lr = 3e-3;
  c.rl.critic_clip = rl::CriticClipMode::kNone;
  c.sft.lr = 0.1 + 0.2;
  EXPECT_EQ(parse_config(c.to_ini()), c);
  EXPECT_EQ(parse_config(RunConfig{}.to_ini()), RunConfig{});
}

TEST(RunConfig, DiagnosticsNameTheKey) {
  auto message = [](const std::string& ini, std::vector<std::string> overrides = {}) {
    try {
      parse_config(ini, overrides);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("[run]\nhorizont = 3\n").find("run.horizont"), std::string::npos);
  EXPECT_NE(message("[rl]\nlr = fast\n").find("rl.lr"), std::string::npos);
  EXPECT_NE(message("[rl]\nlr = -1\n").find("rl.lr"), std::string::npos);
  EXPECT_NE(message("[sft]\nepochs = 0\n").find("sft.epochs"), std::string::npos);
  EXPECT_NE(message("[run]\nbaseline = oracle\n").find("run.baseline"), std::string::npos);
  EXPECT_NE(message("[model]\nn_heads = 3\n").find("n_heads"), std::string::npos);
  EXPECT_NE(message("", {"rl.gama=1"}).find("rl.gama"), std::string::npos);
  EXPECT_NE(message("", {"nonsense"}).find("nonsense"), std::string::npos);
  EXPECT_NE(message("[teacher]\nmode = http\n").find("teacher.url"), std::string::npos);
}

TEST(RunConfig, OverridesApplyInOrder) {
  const auto c = parse_config("[rl]\nlr = 1e-3\n", std::vector<std::string>{"rl.lr=2e-3", "run.seeds=4, 7", "rl.lr=5e-4"});
  EXPECT_EQ(c.rl.lr, 5e-4);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{4, 7}));
}

TEST(Summarize, QuartilesInterpolate) {
  const auto q = summarize({4.0, 1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(q.mean, 2.5);
  EXPECT_DOUBLE_EQ(q.q25, 1.75);
  EXPECT_DOUBLE_EQ(q.median, 2.5);
  EXPECT_DOUBLE_EQ(q.q75, 3.25);
  EXPECT_THROW(summarize({}), UsageError);
}

TEST(Train, VercoRunsAllPhasesAndIsDeterministic) {
  const auto out = scratch("det");
  auto a = tiny(out / "a");
  const auto ra = train_seed(a, 3, {0, false});
  ASSERT_TRUE(ra.complete);
  EXPECT_EQ(ra.env_steps, 180);
  EXPECT_TRUE(fs::exists(ra.dir / "sft_data.jsonl"));
  EXPECT_TRUE(fs::exists(ra.dir / "config.ini"));
  const std::string metrics = slurp(ra.dir / "metrics.jsonl");
  EXPECT_NE(metrics.find("\"kind\":\"sft_step\""), std::string::npos);
  EXPECT_NE(metrics.find("\"kind\":\"episode\""), std::string::npos);
  EXPECT_EQ(metrics.find("time"), std::string::npos);

  auto b = tiny(out / "b");
  const auto rb = train_seed(b, 3, {0, false});
  EXPECT_EQ(slurp(rb.dir / "metrics.jsonl"), metrics);

  // A finished run is left alone.
  train_seed(a, 3, {0, false});
  EXPECT_EQ(slurp(ra.dir / "metrics.jsonl"), metrics);

  // Same directory, different config.
  a.rl.lr = 0.5;
  EXPECT_THROW(train_seed(a, 3, {0, false}), ConfigError);
  fs::remove_all(out);
}

TEST(Train, InterruptedRunResumesToIdenticalLogs) {
  const auto out = scratch("resume");
  auto full = tiny(out / "full");
  full.checkpoint_every = 2;
  const auto rf = train_seed(full, 3, {0, false});
  auto part = tiny(out / "part");
  part.checkpoint_every = 2;
  const auto p1 = train_seed(part, 3, {1, false});
  EXPECT_FALSE(p1.complete);
  EXPECT_EQ(p1.env_steps, 60);
  // Junk past the checkpoint, as left by a crash, is dropped on resume.
  { std::ofstream(p1.dir / "metrics.jsonl", std::ios::app) << "{\"kind\":\"episode\",\"partial\":1}\n"; }
  const auto p2 = train_seed(part, 3, {0, false});
  EXPECT_TRUE(p2.complete);
  EXPECT_EQ(slurp(p2.dir / "metrics.jsonl"), slurp(rf.dir / "metrics.jsonl"));
  const auto ca = textgen::Checkpoint::load(rf.checkpoint);
  const auto cb = textgen::Checkpoint::load(p2.checkpoint);
  EXPECT_EQ(ca.tensors, cb.tensors);
  fs::remove_all(out);
}

TEST(Train, NoCommSkipsSftAndMessageSlotStaysAtInit) {
  const auto out = scratch("nocomm");
  const auto c = tiny(out, Baseline::kNoComm);
  const auto r = train_seed(c, 3, {0, false});
  EXPECT_FALSE(fs::exists(r.dir / "sft_data.jsonl"));
  const std::string metrics = slurp(r.dir / "metrics.jsonl");
  EXPECT_EQ(metrics.find("sft"), std::string::npos);
  for (const auto& e : fs::directory_iterator(r.dir / "checkpoints")) {
    EXPECT_TRUE(e.path().filename().string().starts_with("rl-")) << e.path();
  }
  Agent fresh(c, 3);
  Agent trained(textgen::Checkpoint::load(r.checkpoint));
  for (const auto& [name, p] : fresh.model().slot(textgen::SlotId::kMessage).parameters()) {
    bool found = false;
    for (const auto& [n2, q] : trained.model().slot(textgen::SlotId::kMessage).parameters()) {
      if (n2 == name) {
        found = true;
        EXPECT_EQ(p.value(), q.value()) << name;
      }
    }
    EXPECT_TRUE(found) << name;
  }
  fs::remove_all(out);
}

TEST(Train, SymbolicBaselineTrains) {
  const auto out = scratch("symbolic");
  const auto r = train_seed(tiny(out, Baseline::kSymbolic), 3, {0, false});
  EXPECT_TRUE(r.complete);
  const auto s = cmd_eval(r.dir, {2, 0, false, std::nullopt});
  EXPECT_EQ(s.messages, "none");
  fs::remove_all(out);
}

TEST(Eval, UntrainedPolicyLosesAndRepeats) {
  const auto out = scratch("eval");
  Agent agent(tiny(out), 1);
  textgen::Checkpoint ckpt;
  agent.store(ckpt, "init");
  fs::create_directories(out);
  ckpt.save(out / "init.ckpt");
  for (bool sample : {false, true}) {
    const EvalOptions o{8, 11, sample, std::nullopt};
    const auto a = cmd_eval(out / "init.ckpt", o);
    EXPECT_LE(a.episode_return.mean, 0.0);
    EXPECT_EQ(a.per_episode.size(), 8u);
    EXPECT_EQ(a, cmd_eval(out / "init.ckpt", o));
    EXPECT_GE(a.entropy, 0.0);
  }
  EXPECT_THROW(cmd_eval(out / "missing.ckpt", {}), FormatError);
  fs::remove_all(out);
}

TEST(Eval, UniformPolicyReportsLogCandidates) {
  RunConfig c;
  c.baseline = Baseline::kSymbolic;
  Agent agent(c, 0);
  for (auto [name, p] : agent.symbolic_policy().actor_parameters()) {
    if (name == "symbolic.actor.w2" || name == "symbolic.actor.b2") p.mutable_value().fill(0.0);
  }
  const auto t = record_replay(agent, 2);
  double expected = 0.0;
  int decisions = 0;
  bool saw_five = false;
  for (const auto& s : t.steps) {
    for (std::size_t i = 0; i < s.entropies.size(); ++i) {
      EXPECT_NEAR(s.entropies[i], std::log(static_cast<double>(s.candidates[i])), 1e-12);
      if (s.candidates[i] == 5) {
        saw_five = true;
        EXPECT_NEAR(s.entropies[i], 1.6094379124341003, 1e-12);
      }
      expected += s.entropies[i];
      ++decisions;
    }
  }
  EXPECT_TRUE(saw_five);
  const auto summary = evaluate(agent, {1, 2, false, std::nullopt});
  EXPECT_NEAR(summary.entropy, expected / decisions, 1e-12);
}

TEST(Transcript, RoundTripsAndValidates) {
  const auto out = scratch("transcript");
  Agent agent(tiny(out), 0);
  auto t = record_replay(agent, 5, false, rl::MessageSource::kTeacher);
  t.policy = "memory";
  ASSERT_EQ(t.steps.size(), 100u);
  const auto back = ReplayTranscript::parse(t.render());
  EXPECT_EQ(back.render(), t.render());
  EXPECT_TRUE(validate_transcript(back).empty());
  for (const auto& s : back.steps) {
    for (const auto& m : s.messages) EXPECT_FALSE(m.empty());
  }

  auto wrong_reward = back;
  wrong_reward.steps[10].reward = std::nextafter(wrong_reward.steps[10].reward, 1.0);
  EXPECT_FALSE(validate_transcript(wrong_reward).empty());

  auto wrong_action = back;
  bool changed = false;
  for (auto& s : wrong_action.steps) {
    if (s.actions[0] != kitchen::Verb::kNoop) {
      s.actions[0] = kitchen::Verb::kNoop;
      changed = true;
      break;
    }
  }
  ASSERT_TRUE(changed);
  EXPECT_FALSE(validate_transcript(wrong_action).empty());

  auto long_message = back;
  long_message.steps[0].messages[0] = "one two three four five six seven eight nine ten eleven";
  const auto problems = validate_transcript(long_message);
  ASSERT_EQ(problems.size(), 1u);
  EXPECT_NE(problems[0].find("11 words"), std::string::npos);

  EXPECT_THROW(ReplayTranscript::parse("hello"), FormatError);
  std::string cut = t.render();
  cut.resize(cut.size() / 2);
  EXPECT_THROW(ReplayTranscript::parse(cut), FormatError);
  fs::remove_all(out);
}

TEST(Replay, CommandWritesAValidTranscript) {
  const auto out = scratch("replay");
  const auto r = train_seed(tiny(out), 3, {0, false});
  const auto path = cmd_replay(r.dir, 4);
  EXPECT_TRUE(fs::exists(path));
  const auto t = ReplayTranscript::load(path);
  EXPECT_EQ(t.env_seed, 4u);
  EXPECT_EQ(t.messages, "policy");
  EXPECT_TRUE(validate_transcript(t).empty());
  fs::remove_all(out);
}

TEST(Plot, OneRunGivesThreeFilesAndSchemasAreChecked) {
  const auto out = scratch("plot");
  const auto r = train_seed(tiny(out), 3, {0, false});
  const std::vector<fs::path> one{r.dir};
  const auto files = cmd_plot(one, out / "plots");
  ASSERT_EQ(files.size(), 3u);
  for (const auto& f : files) {
    EXPECT_TRUE(fs::exists(f));
    EXPECT_EQ(slurp(f).rfind("<svg", 0), 0u);
  }
  EXPECT_EQ(files[0].filename(), "return.svg");

  const fs::path odd = out / "odd" / "seed-0";
  fs::create_directories(odd);
  std::ofstream(odd / "metrics.jsonl")
      << "{\"kind\":\"episode\",\"phase\":\"rl\",\"episode\":0,\"env_steps\":5,\"return\":0,\"length\":5}\n";
  const std::vector<fs::path> both{r.dir, odd};
  try {
    cmd_plot(both, out / "plots2");
    ADD_FAILURE() << "expected a schema error";
  } catch (const FormatError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(odd.string()), std::string::npos) << what;
    EXPECT_NE(what.find("-entropy"), std::string::npos) << what;
    EXPECT_EQ(what.find(r.dir.string() + " "), std::string::npos) << what;
  }
  fs::remove_all(out);
}
