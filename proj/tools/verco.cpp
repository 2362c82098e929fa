// verco: train, evaluate, replay and plot kitchen agents.
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "verco/common/error.hpp"
#include "verco/experiment/evaluate.hpp"
#include "verco/experiment/plot.hpp"
#include "verco/experiment/run.hpp"
#include "verco/experiment/transcript.hpp"

namespace fs = std::filesystem;
using namespace verco;
using namespace verco::experiment;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", path, "run config (INI)")->required()->check(CLI::ExistingFile);
    cmd->add_option("-s,--set", overrides, "override a key, e.g. rl.lr=3e-4 (repeatable)");
    cmd->add_option("--seed", seed, "only this seed instead of run.seeds");
  }
  RunConfig load() const {
    RunConfig c = load_config(path, overrides);
    if (seed) c.seeds = {*seed};
    return c;
  }
};

std::optional<rl::MessageSource> source_of(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return rl::parse_message_source(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verco: language agents for a cooperative kitchen"};
  app.require_subcommand(1);

  ConfigArgs train_args;
  int stop_after = 0;
  auto* train = app.add_subcommand("train", "collect-sft, train-sft and rl for every seed (resumes)");
  train_args.attach(train);
  train->add_option("--stop-after-updates", stop_after, "pause after this many rl updates");

  ConfigArgs collect_args;
  auto* collect = app.add_subcommand("collect-sft", "gather teacher-labelled prompts");
  collect_args.attach(collect);

  ConfigArgs sft_args;
  auto* train_sft = app.add_subcommand("train-sft", "fine-tune the message adapter on collected labels");
  sft_args.attach(train_sft);

  std::string eval_ckpt, eval_messages;
  EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and print a json summary");
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file or run directory")->required();
  eval->add_option("-n,--episodes", eval_opts.episodes, "episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_opts.seed, "seed of the first episode");
  eval->add_flag("--sample", eval_opts.sample, "sample actions instead of greedy");
  eval->add_option("--messages", eval_messages, "policy, teacher or none")
      ->check(CLI::IsMember({"policy", "teacher", "none"}));
  bool eval_episodes = false;
  eval->add_flag("--per-episode", eval_episodes, "include per-episode metrics");

  std::string replay_ckpt, replay_out, replay_messages;
  std::uint64_t replay_seed = 0;
  auto* replay = app.add_subcommand("replay", "write a replay transcript of one greedy episode");
  replay->add_option("checkpoint", replay_ckpt, "checkpoint file or run directory")->required();
  replay->add_option("--seed", replay_seed, "environment seed");
  replay->add_option("-o,--out", replay_out, "transcript path");
  replay->add_option("--messages", replay_messages, "policy, teacher or none")
      ->check(CLI::IsMember({"policy", "teacher", "none"}));

  std::string check_path;
  auto* check = app.add_subcommand("check-replay", "re-simulate a transcript and report mismatches");
  check->add_option("transcript", check_path)->required()->check(CLI::ExistingFile);

  std::vector<std::string> plot_runs;
  std::string plot_out = "plots";
  int plot_bins = 25;
  auto* plot = app.add_subcommand("plot", "return, length and entropy curves across seeds (svg)");
  plot->add_option("runs", plot_runs, "run directories")->required();
  plot->add_option("-o,--out", plot_out, "output directory");
  plot->add_option("--bins", plot_bins, "points per curve")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      TrainOptions opts;
      opts.stop_after_updates = stop_after;
      for (const auto& r : cmd_train(train_args.load(), opts)) {
        fmt::print("{} {} {} env steps, checkpoint {}\n", r.dir.string(), r.complete ? "complete" : "paused",
                   r.env_steps, r.checkpoint.string());
      }
    } else if (*collect) {
      const RunConfig c = collect_args.load();
      for (auto seed : c.seeds) fmt::print("{}\n", cmd_collect_sft(c, seed).string());
    } else if (*train_sft) {
      const RunConfig c = sft_args.load();
      for (auto seed : c.seeds) fmt::print("{}\n", cmd_train_sft(c, seed).string());
    } else if (*eval) {
      eval_opts.messages = source_of(eval_messages);
      auto j = cmd_eval(eval_ckpt, eval_opts).to_json();
      if (!eval_episodes) j.erase("per_episode");
      fmt::print("{}\n", j.dump(2));
    } else if (*replay) {
      fmt::print("{}\n", cmd_replay(replay_ckpt, replay_seed, replay_out, source_of(replay_messages)).string());
    } else if (*check) {
      const auto t = ReplayTranscript::load(check_path);
      const auto problems = validate_transcript(t);
      for (const auto& p : problems) fmt::print("{}\n", p);
      fmt::print("{} steps, return {:.6g}: {}\n", t.steps.size(), t.total_return(), problems.empty() ? "ok" : "MISMATCH");
      return problems.empty() ? 0 : 1;
    } else if (*plot) {
      std::vector<fs::path> runs(plot_runs.begin(), plot_runs.end());
      for (const auto& p : cmd_plot(runs, plot_out, plot_bins)) fmt::print("{}\n", p.string());
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
