#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "verco/textgen/autodiff.hpp"
#include "verco/textgen/vocabulary.hpp"

namespace verco::textgen {

// Dense matrices an adapter slot may attach to.
enum class LoraTarget : std::uint8_t { kQuery, kKey, kValue, kOutput, kMlpUp, kMlpDown, kLmHead };
std::string_view to_string(LoraTarget t);
LoraTarget parse_lora_target(std::string_view name);
// Comma separated list such as "q,v".
std::vector<LoraTarget> parse_lora_targets(std::string_view list);
std::string format_lora_targets(std::span<const LoraTarget> targets);

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int context_length = 256;
  int d_ff = 0;  // 0 means 4 * d_model
  int lora_rank = 4;
  double lora_alpha = 8.0;
  std::vector<LoraTarget> lora_targets{LoraTarget::kQuery, LoraTarget::kValue};
  int value_hidden = 32;
  // Standard deviation of the initial logits for a unit-rms hidden state.
  double logit_scale = 1.0;
  std::uint64_t seed = 0;

  int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  // Throws ConfigError naming the offending field.
  void validate() const;
  std::map<std::string, std::string> to_attributes() const;
  static ModelConfig from_attributes(const std::map<std::string, std::string>& attrs);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class SlotId : std::uint8_t { kMessage, kAction };
std::string_view to_string(SlotId s);

// W0 x + (alpha / r) * B (A x): A is r x k, B is d x r.
struct LoraPair {
  ad::Var a;
  ad::Var b;
};

using NamedParameters = std::vector<std::pair<std::string, ad::Var>>;

// One named set of low-rank adapters over the frozen base.
class AdapterSlot {
 public:
  AdapterSlot(SlotId id, const ModelConfig& config, std::uint64_t seed);

  SlotId id() const { return id_; }
  std::string_view name() const { return to_string(id_); }
  int rank() const { return rank_; }
  double scaling() const { return scaling_; }

  // Adapter for one matrix, or nullptr when that matrix is not targeted.
  // layer is ignored for kLmHead.
  const LoraPair* find(int layer, LoraTarget target) const;
  NamedParameters parameters() const;
  std::vector<ad::Var> trainable() const;
  std::size_t trainable_count() const;

 private:
  SlotId id_;
  int rank_;
  double scaling_;
  std::map<std::pair<int, LoraTarget>, LoraPair> pairs_;
};

// MLP on the final normed hidden state at one position; input is detached
// so critic gradients stay out of the adapters.
class ValueHead {
 public:
  ValueHead(const ModelConfig& config, std::uint64_t seed);
  // hidden_row is 1 x d.
  ad::Var forward(const ad::Var& hidden_row) const;
  NamedParameters parameters() const;
  std::vector<ad::Var> trainable() const;

 private:
  ad::Var w1_, b1_, w2_, b2_;
};

// All tokens of one forward pass, possibly several branches sharing a
// prefix. Rows are the input tokens; positions are what rope sees.
struct PackedInput {
  std::vector<int> ids;
  std::vector<int> positions;
  std::shared_ptr<const ad::AttentionMask> mask;  // null means plain causal
};

struct CandidateScores {
  ad::Var logprobs;  // n x 1, one per candidate, differentiable
  ad::Var hidden;    // final normed hidden states of the packed rows
};

struct GenerationMode {
  bool greedy = true;
  std::uint64_t seed = 0;
  double temperature = 1.0;

  static GenerationMode greedy_mode() { return {}; }
  static GenerationMode sample(std::uint64_t seed, double temperature) { return {false, seed, temperature}; }
};

class LanguageModel {
 public:
  explicit LanguageModel(const ModelConfig& config);
  // Parameters are shared handles, so copying would alias weights.
  LanguageModel(const LanguageModel&) = delete;
  LanguageModel& operator=(const LanguageModel&) = delete;
  LanguageModel(LanguageModel&&) = default;
  LanguageModel& operator=(LanguageModel&&) = default;

  const ModelConfig& config() const { return config_; }
  const AdapterSlot& slot(SlotId id) const { return id == SlotId::kMessage ? message_ : action_; }
  const ValueHead& value_head() const { return value_head_; }

  // Every sequence is fed with a leading bos token; row 0 of any hidden
  // state tensor is that bos, prompt token k sits at row k + 1.
  static constexpr int prompt_row(int token_index) { return token_index + 1; }

  // Per-position logits for bos + seq. Throws UsageError when the sequence
  // does not fit in the context.
  ad::Var forward(const TokenSequence& seq, const AdapterSlot* slot) const;

  // Final normed hidden states for a packed input (ids without the implicit
  // bos; the caller owns the layout).
  ad::Var hidden_states(const PackedInput& input, const AdapterSlot* slot) const;
  // Logits at the given hidden rows.
  ad::Var logits_at(const ad::Var& hidden, std::span<const int> rows, const AdapterSlot* slot) const;

  // Sum over continuation tokens of log P(token | prefix, earlier tokens).
  ad::Var sequence_logprob(const TokenSequence& prefix, const TokenSequence& continuation,
                           const AdapterSlot* slot) const;

  // Scores every candidate continuation of `prefix` in one packed pass;
  // candidates sharing leading tokens share rows.
  CandidateScores score_candidates(const TokenSequence& prefix, std::span<const TokenSequence> candidates,
                                   const AdapterSlot* slot) const;

  // Stops at eos (not included in the result) or after max_tokens.
  TokenSequence generate(const TokenSequence& prompt, const AdapterSlot* slot, int max_tokens,
                         const GenerationMode& mode, const Vocabulary* vocab = nullptr) const;

  // Value at the last prompt token.
  ad::Var value(const TokenSequence& prompt, const AdapterSlot* slot) const;
  // Value read at one row of an existing hidden tensor.
  ad::Var value_at(const ad::Var& hidden, int row) const;

  NamedParameters base_parameters() const;
  // base, both slots and the value head, with stable names.
  NamedParameters all_parameters() const;

  // Copies values from a same-shaped parameter set by name; throws
  // FormatError on missing names or shape mismatches.
  void load_parameters(const std::map<std::string, Tensor>& values);

 private:
  struct Block {
    ad::Var norm1, wq, wk, wv, wo, norm2, w_up, w_down;
  };

  ad::Var dense(const ad::Var& x, const ad::Var& w, int layer, LoraTarget target, const AdapterSlot* slot) const;
  void check_fits(std::size_t tokens) const;

  ModelConfig config_;
  ad::Var tok_emb_;
  std::vector<Block> blocks_;
  ad::Var final_norm_;
  ad::Var lm_head_;
  AdapterSlot message_;
  AdapterSlot action_;
  ValueHead value_head_;
};

}  // namespace verco::textgen
