#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "verco/rl/action_policy.hpp"
#include "verco/rl/rollout.hpp"
#include "verco/teacher/teacher.hpp"
#include "verco/textgen/model.hpp"

namespace verco::sft {

// Policy prompt words plus every teacher word.
textgen::Vocabulary default_vocabulary(const teacher::ScriptedTeacher& teacher);

struct SftExample {
  std::string prompt;  // message prompt text
  std::string target;  // label message text
  textgen::TokenSequence prompt_tokens;
  textgen::TokenSequence target_tokens;  // label tokens followed by eos
  int agent = 0;
  long long episode = 0;
  int step = 0;

  // Encodes prompt and target with the vocabulary.
  static SftExample make(std::string prompt, std::string target, const textgen::Vocabulary& vocab, int agent,
                         long long episode, int step);
};

class SftBuffer {
 public:
  explicit SftBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  // Throws UsageError once the capacity (when non-zero) is reached.
  void add(SftExample e);
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<SftExample>& examples() const { return examples_; }

  // One JSON object per line with prompt, target, agent, episode and step.
  void save(const std::filesystem::path& path) const;
  static SftBuffer load(const std::filesystem::path& path, const textgen::Vocabulary& vocab);

 private:
  std::size_t capacity_;
  std::vector<SftExample> examples_;
};

struct CollectConfig {
  rl::EnvSpec env;
  int episodes = 20;
  std::uint64_t seed = 0;
  // The rollout policy picks its argmax instead of sampling.
  bool greedy = false;
};

// Teacher labels every step from both views; actions come from the given
// (untrained) policy, which reads the labels as received messages.
SftBuffer collect(const CollectConfig& config, teacher::Teacher& teacher, rl::LanguagePolicy& policy);

// Mean negative log-likelihood per target token under the message slot.
textgen::ad::Var sft_loss(std::span<const SftExample* const> batch, const textgen::LanguageModel& model);
textgen::ad::Var sft_loss(std::span<const SftExample> batch, const textgen::LanguageModel& model);

struct SftConfig {
  int epochs = 20;
  int batch_size = 16;
  double lr = 1e-3;
  // Stop after this many optimizer steps; 0 means run every epoch.
  int max_steps = 0;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const SftConfig&, const SftConfig&) = default;
};

struct SftResult {
  std::vector<double> losses;  // one per optimizer step
};

// Optimizes the message slot only. on_step, when set, sees (step, loss).
SftResult train_sft(const SftBuffer& buffer, textgen::LanguageModel& model, const SftConfig& config,
                    const std::function<void(int, double)>& on_step = {});

// Fraction of examples whose greedy message reproduces the label.
double label_accuracy(std::span<const SftExample> examples, const textgen::LanguageModel& model,
                      const textgen::Vocabulary& vocab);

}  // namespace verco::sft
