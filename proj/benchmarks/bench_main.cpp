// Throughput of the hot paths: env stepping, model forward, candidate scoring
// and one PPO update.
#include <random>

#include <benchmark/benchmark.h>

#include "verco/kitchen/kitchen_env.hpp"
#include "verco/prompt/prompts.hpp"
#include "verco/rl/action_policy.hpp"
#include "verco/rl/ppo.hpp"
#include "verco/rl/rollout.hpp"
#include "verco/sft/sft.hpp"

using namespace verco;

namespace {

textgen::ModelConfig bench_model(int vocab, int d_model) {
  textgen::ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = d_model;
  c.n_layers = 2;
  c.n_heads = 4;
  c.context_length = 256;
  c.lora_targets = textgen::parse_lora_targets("q,k,v,o,mlp_up,mlp_down,lm_head");
  c.lora_rank = 8;
  return c;
}

struct Fixture {
  teacher::ScriptedTeacher scripted;
  textgen::Vocabulary vocab = sft::default_vocabulary(scripted);
  textgen::LanguageModel model;
  rl::LanguagePolicy policy{model, vocab};
  kitchen::KitchenState state = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  explicit Fixture(int d_model) : model(bench_model(static_cast<int>(vocab.size()), d_model)) {}

  rl::ActionInput input() {
    const auto obs = prompt::textualize(kitchen::local_view(state, 0));
    const std::vector<prompt::ReceivedMessage> got{{1, "get a tomato , move east"}};
    return policy.action_input(obs, got, kitchen::legal_actions(state, 0));
  }
};

void BM_EnvStep(benchmark::State& st) {
  std::mt19937_64 rng(1);
  auto s = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  std::uint64_t episode = 0;
  for (auto _ : st) {
    if (s.done) s = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, ++episode);
    std::vector<kitchen::AgentAction> joint;
    for (int i = 0; i < 2; ++i) {
      const auto legal = kitchen::legal_actions(s, i);
      joint.push_back(legal[rng() % legal.size()]);
    }
    benchmark::DoNotOptimize(kitchen::step(s, joint));
  }
}
BENCHMARK(BM_EnvStep);

void BM_Forward(benchmark::State& st) {
  Fixture f(static_cast<int>(st.range(0)));
  const auto in = f.input();
  const auto* slot = &f.model.slot(textgen::SlotId::kAction);
  for (auto _ : st) benchmark::DoNotOptimize(f.model.forward(in.prompt, slot).value());
  st.counters["tokens"] = static_cast<double>(in.prompt.size());
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ScoreCandidates(benchmark::State& st) {
  Fixture f(static_cast<int>(st.range(0)));
  const auto in = f.input();
  for (auto _ : st) benchmark::DoNotOptimize(f.policy.distribution(in));
  st.counters["candidates"] = static_cast<double>(in.candidates.size());
}
BENCHMARK(BM_ScoreCandidates)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_PpoUpdate(benchmark::State& st) {
  Fixture f(32);
  rl::RlConfig cfg;
  cfg.minibatch = 32;
  cfg.epochs = 1;
  rl::PpoTrainer trainer(f.policy, cfg, 1);
  rl::TeamController team(f.policy, rl::MessageSource::kNone);
  rl::RolloutRunner runner({}, 7);
  std::vector<rl::EpisodeMetrics> done;
  for (auto _ : st) {
    st.PauseTiming();
    rl::RlBuffer buf;
    runner.collect(team, buf, 32, cfg, done);
    st.ResumeTiming();
    trainer.update(buf);
  }
}
BENCHMARK(BM_PpoUpdate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
