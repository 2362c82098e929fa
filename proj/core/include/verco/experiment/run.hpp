#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "verco/experiment/config.hpp"
#include "verco/textgen/checkpoint.hpp"

namespace verco::experiment {

// <output>/<name>/seed-<seed>
std::filesystem::path run_directory(const RunConfig& config, std::uint64_t seed);

// Where a run stands; stored as progress.json in the run directory.
struct Progress {
  std::string stage = "new";  // new, collected, sft, rl, complete
  std::string checkpoint;     // file name inside checkpoints/, empty before the first one
  std::uintmax_t metrics_bytes = 0;  // metrics.jsonl length matching the checkpoint
};
Progress read_progress(const std::filesystem::path& run_dir);
void write_progress(const std::filesystem::path& run_dir, const Progress& p);

// A policy plus everything needed to act with it: model, vocabulary and teacher.
class Agent {
 public:
  // Fresh initialization for one run seed.
  Agent(const RunConfig& config, std::uint64_t seed);
  // Weights from a checkpoint written by save().
  explicit Agent(const textgen::Checkpoint& ckpt);
  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const RunConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  bool symbolic() const { return config_.baseline == Baseline::kSymbolic; }

  rl::ActorCritic& policy();
  rl::LanguagePolicy& language();  // UsageError for symbolic agents
  textgen::LanguageModel& model();
  rl::SymbolicPolicy& symbolic_policy();  // UsageError for language agents
  const textgen::Vocabulary& vocab() const { return vocab_; }
  teacher::Teacher& teacher() { return *teacher_; }

  // Message source of the baseline unless overridden.
  rl::MessageSource default_source() const;
  rl::TeamController team(std::optional<rl::MessageSource> source = std::nullopt);

  // Weights and run attributes; callers add optimizer/runner state.
  void store(textgen::Checkpoint& out, const std::string& phase) const;

 private:
  void build_runtime();

  RunConfig config_;
  std::uint64_t seed_ = 0;
  textgen::Vocabulary vocab_;
  std::unique_ptr<textgen::LanguageModel> model_;
  std::unique_ptr<rl::LanguagePolicy> language_;
  std::unique_ptr<rl::SymbolicPolicy> symbolic_;
  std::unique_ptr<teacher::Teacher> teacher_;
};

struct TrainOptions {
  // Stop after this many rl updates in this invocation (0: run to the end).
  // Used to exercise resume.
  int stop_after_updates = 0;
  bool console = true;  // mirror train.log to stderr
};

struct TrainResult {
  std::filesystem::path dir;
  std::filesystem::path checkpoint;  // newest checkpoint
  bool complete = false;
  long long env_steps = 0;
};

// Runs collect-sft, train-sft and rl for one seed, resuming where the run
// directory left off.
TrainResult train_seed(const RunConfig& config, std::uint64_t seed, const TrainOptions& options = {});
std::vector<TrainResult> cmd_train(const RunConfig& config, const TrainOptions& options = {});

// The two sft phases alone; both resume like train_seed.
std::filesystem::path cmd_collect_sft(const RunConfig& config, std::uint64_t seed);
std::filesystem::path cmd_train_sft(const RunConfig& config, std::uint64_t seed);

// Newest checkpoint recorded in a run directory; FormatError when none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);
// Accepts a checkpoint file or a run directory.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

}  // namespace verco::experiment
