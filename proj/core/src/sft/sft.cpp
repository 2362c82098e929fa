#include "verco/sft/sft.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "verco/common/error.hpp"
#include "verco/kitchen/kitchen_env.hpp"
#include "verco/textgen/optim.hpp"

namespace verco::sft {

namespace ad = textgen::ad;
using textgen::SlotId;

textgen::Vocabulary default_vocabulary(const teacher::ScriptedTeacher& teacher) {
  auto words = prompt::policy_words();
  const auto extra = teacher.message_words();
  words.insert(words.end(), extra.begin(), extra.end());
  return textgen::Vocabulary::from_words(words);
}

SftExample SftExample::make(std::string prompt, std::string target, const textgen::Vocabulary& vocab, int agent,
                            long long episode, int step) {
  SftExample e;
  e.prompt_tokens = vocab.encode(prompt);
  e.target_tokens = vocab.encode(target);
  if (e.target_tokens.empty()) throw UsageError("an sft target needs at least one token");
  e.target_tokens.ids.push_back(textgen::Vocabulary::kEos);
  e.prompt = std::move(prompt);
  e.target = std::move(target);
  e.agent = agent;
  e.episode = episode;
  e.step = step;
  return e;
}

void SftBuffer::add(SftExample e) {
  if (capacity_ > 0 && examples_.size() >= capacity_) {
    throw UsageError(fmt::format("sft buffer is full ({} examples)", capacity_));
  }
  examples_.push_back(std::move(e));
}

void SftBuffer::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& e : examples_) {
    out << nlohmann::json{{"prompt", e.prompt}, {"target", e.target}, {"agent", e.agent},
                          {"episode", e.episode}, {"step", e.step}}
               .dump()
        << '\n';
  }
}

SftBuffer SftBuffer::load(const std::filesystem::path& path, const textgen::Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  SftBuffer buffer;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      buffer.add(SftExample::make(j.at("prompt").get<std::string>(), j.at("target").get<std::string>(), vocab,
                                  j.at("agent").get<int>(), j.at("episode").get<long long>(),
                                  j.at("step").get<int>()));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return buffer;
}

SftBuffer collect(const CollectConfig& config, teacher::Teacher& teacher, rl::LanguagePolicy& policy) {
  if (config.episodes < 1) throw UsageError("collect needs at least one episode");
  const auto& vocab = policy.vocab();
  std::mt19937_64 rng(config.seed);
  SftBuffer buffer;
  for (int ep = 0; ep < config.episodes; ++ep) {
    auto state = kitchen::create(config.env.map, config.env.dish, config.seed + static_cast<std::uint64_t>(ep),
                                 config.env.horizon);
    while (!state.done) {
      std::vector<prompt::TextObservation> obs;
      for (const auto& w : kitchen::all_views(state)) obs.push_back(prompt::textualize(w));
      const auto labels = teacher.label(obs, teacher::summarize(state));
      std::vector<std::string> sent(obs.size());
      for (const auto& m : labels) sent.at(static_cast<std::size_t>(m.sender)) = m.text;

      std::vector<kitchen::AgentAction> joint;
      for (int i = 0; i < static_cast<int>(obs.size()); ++i) {
        // Normalized through the vocabulary so stored text matches decoding.
        const auto& label = sent[static_cast<std::size_t>(i)];
        buffer.add(SftExample::make(prompt::message_prompt(obs[i]), vocab.decode(vocab.encode(label).ids), vocab, i,
                                    ep, state.timestep));
        std::vector<prompt::ReceivedMessage> received;
        for (int j = 0; j < static_cast<int>(obs.size()); ++j) {
          if (j != i) received.push_back({j, sent[static_cast<std::size_t>(j)]});
        }
        const auto legal = kitchen::legal_actions(state, i);
        const auto dist = policy.distribution(policy.action_input(obs[i], received, legal));
        const int pick = config.greedy ? dist.argmax() : dist.sample(rng);
        joint.push_back(legal[static_cast<std::size_t>(pick)]);
      }
      kitchen::step(state, joint);
    }
  }
  return buffer;
}

ad::Var sft_loss(std::span<const SftExample* const> batch, const textgen::LanguageModel& model) {
  if (batch.empty()) throw UsageError("sft_loss of an empty batch");
  const auto& slot = model.slot(SlotId::kMessage);
  std::vector<ad::Var> sums;
  std::size_t tokens = 0;
  for (const SftExample* e : batch) {
    const ad::Var lp = model.sequence_logprob(e->prompt_tokens, e->target_tokens, &slot);
    sums.push_back(lp);
    tokens += e->target_tokens.size();
  }
  const ad::Var total = ad::sum(ad::concat_rows(sums));
  return ad::scale(total, -1.0 / static_cast<double>(tokens));
}

ad::Var sft_loss(std::span<const SftExample> batch, const textgen::LanguageModel& model) {
  std::vector<const SftExample*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  return sft_loss(std::span<const SftExample* const>(ptrs), model);
}

void SftConfig::validate() const {
  if (epochs < 1) throw ConfigError("sft.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("sft.batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("sft.lr must be positive");
  if (max_steps < 0) throw ConfigError("sft.max_steps must be non-negative");
}

SftResult train_sft(const SftBuffer& buffer, textgen::LanguageModel& model, const SftConfig& config,
                    const std::function<void(int, double)>& on_step) {
  config.validate();
  if (buffer.empty()) throw UsageError("train_sft on an empty buffer");
  textgen::Adam adam(model.slot(SlotId::kMessage).parameters(), {config.lr});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(buffer.size());
  std::iota(order.begin(), order.end(), 0);
  SftResult result;
  const auto& examples = buffer.examples();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const SftExample*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&examples[order[k]]);
      adam.zero_grad();
      const ad::Var loss = sft_loss(std::span<const SftExample* const>(batch), model);
      ad::backward(loss);
      adam.step();
      result.losses.push_back(loss.item());
      if (on_step) on_step(static_cast<int>(result.losses.size()), loss.item());
      if (config.max_steps > 0 && static_cast<int>(result.losses.size()) >= config.max_steps) return result;
    }
  }
  return result;
}

double label_accuracy(std::span<const SftExample> examples, const textgen::LanguageModel& model,
                      const textgen::Vocabulary& vocab) {
  if (examples.empty()) return 0.0;
  const auto& slot = model.slot(SlotId::kMessage);
  const int budget = static_cast<int>(std::max_element(examples.begin(), examples.end(), [](auto& a, auto& b) {
                                        return a.target_tokens.size() < b.target_tokens.size();
                                      })->target_tokens.size());
  std::map<std::string, std::string> cache;
  int hits = 0;
  for (const auto& e : examples) {
    auto it = cache.find(e.prompt);
    if (it == cache.end()) {
      const auto out =
          model.generate(e.prompt_tokens, &slot, budget, textgen::GenerationMode::greedy_mode(), &vocab);
      it = cache.emplace(e.prompt, vocab.decode(out.ids)).first;
    }
    if (it->second == vocab.decode(vocab.encode(e.target).ids)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace verco::sft
