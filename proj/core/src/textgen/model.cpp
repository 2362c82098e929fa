#include "verco/textgen/model.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

#include "verco/common/error.hpp"

namespace verco::textgen {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over seed ^ salt
  std::uint64_t z = seed ^ (salt * 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor normal_tensor(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(rows, cols);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

Tensor uniform_tensor(int rows, int cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

constexpr LoraTarget kAllTargets[] = {LoraTarget::kQuery, LoraTarget::kKey,    LoraTarget::kValue, LoraTarget::kOutput,
                                      LoraTarget::kMlpUp, LoraTarget::kMlpDown, LoraTarget::kLmHead};

// (out, in) shape of a targeted matrix.
std::pair<int, int> target_shape(const ModelConfig& c, LoraTarget t) {
  switch (t) {
    case LoraTarget::kQuery:
    case LoraTarget::kKey:
    case LoraTarget::kValue:
    case LoraTarget::kOutput: return {c.d_model, c.d_model};
    case LoraTarget::kMlpUp: return {c.ff_dim(), c.d_model};
    case LoraTarget::kMlpDown: return {c.d_model, c.ff_dim()};
    case LoraTarget::kLmHead: return {c.vocab_size, c.d_model};
  }
  return {0, 0};
}

int parse_int(const std::map<std::string, std::string>& attrs, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw FormatError("model attributes lack '" + key + "'");
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw FormatError("model attribute '" + key + "' is not an integer: " + it->second);
  }
}

double parse_double(const std::map<std::string, std::string>& attrs, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw FormatError("model attributes lack '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw FormatError("model attribute '" + key + "' is not a number: " + it->second);
  }
}

}  // namespace

std::string_view to_string(LoraTarget t) {
  switch (t) {
    case LoraTarget::kQuery: return "q";
    case LoraTarget::kKey: return "k";
    case LoraTarget::kValue: return "v";
    case LoraTarget::kOutput: return "o";
    case LoraTarget::kMlpUp: return "mlp_up";
    case LoraTarget::kMlpDown: return "mlp_down";
    case LoraTarget::kLmHead: return "lm_head";
  }
  return "?";
}

LoraTarget parse_lora_target(std::string_view name) {
  for (LoraTarget t : kAllTargets) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown adapter target '" + std::string(name) + "' (expected q, k, v, o, mlp_up, mlp_down, lm_head)");
}

std::vector<LoraTarget> parse_lora_targets(std::string_view list) {
  std::vector<LoraTarget> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    std::string_view item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      const LoraTarget t = parse_lora_target(item);
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    start = end + 1;
  }
  return out;
}

std::string format_lora_targets(std::span<const LoraTarget> targets) {
  std::string out;
  for (LoraTarget t : targets) {
    if (!out.empty()) out += ',';
    out += to_string(t);
  }
  return out;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("model." + field + ": " + why); };
  if (vocab_size <= Vocabulary::kNumSpecial) fail("vocab_size", "must exceed the number of special tokens");
  if (d_model <= 0) fail("d_model", "must be positive");
  if (n_layers <= 0) fail("n_layers", "must be positive");
  if (n_heads <= 0 || d_model % n_heads != 0) fail("n_heads", "must divide d_model");
  if ((d_model / n_heads) % 2 != 0) fail("n_heads", "head dimension must be even for rotary encoding");
  if (context_length < 2) fail("context_length", "must be at least 2");
  if (d_ff < 0) fail("d_ff", "must be non-negative");
  if (lora_rank <= 0) fail("lora_rank", "must be positive");
  for (LoraTarget t : lora_targets) {
    auto [out, in] = target_shape(*this, t);
    if (lora_rank >= std::min(out, in)) fail("lora_rank", fmt::format("must be below min(d, k) of target {}", to_string(t)));
  }
  if (!(lora_alpha > 0.0)) fail("lora_alpha", "must be positive");
  if (value_hidden <= 0) fail("value_hidden", "must be positive");
  if (!(logit_scale > 0.0)) fail("logit_scale", "must be positive");
}

std::map<std::string, std::string> ModelConfig::to_attributes() const {
  return {
      {"model.vocab_size", std::to_string(vocab_size)},
      {"model.d_model", std::to_string(d_model)},
      {"model.n_layers", std::to_string(n_layers)},
      {"model.n_heads", std::to_string(n_heads)},
      {"model.context_length", std::to_string(context_length)},
      {"model.d_ff", std::to_string(d_ff)},
      {"model.lora_rank", std::to_string(lora_rank)},
      {"model.lora_alpha", fmt::format("{:.17g}", lora_alpha)},
      {"model.lora_targets", format_lora_targets(lora_targets)},
      {"model.value_hidden", std::to_string(value_hidden)},
      {"model.logit_scale", fmt::format("{:.17g}", logit_scale)},
      {"model.seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_attributes(const std::map<std::string, std::string>& attrs) {
  ModelConfig c;
  c.vocab_size = parse_int(attrs, "model.vocab_size");
  c.d_model = parse_int(attrs, "model.d_model");
  c.n_layers = parse_int(attrs, "model.n_layers");
  c.n_heads = parse_int(attrs, "model.n_heads");
  c.context_length = parse_int(attrs, "model.context_length");
  c.d_ff = parse_int(attrs, "model.d_ff");
  c.lora_rank = parse_int(attrs, "model.lora_rank");
  c.lora_alpha = parse_double(attrs, "model.lora_alpha");
  auto it = attrs.find("model.lora_targets");
  if (it == attrs.end()) throw FormatError("model attributes lack 'model.lora_targets'");
  c.lora_targets = parse_lora_targets(it->second);
  c.value_hidden = parse_int(attrs, "model.value_hidden");
  c.logit_scale = parse_double(attrs, "model.logit_scale");
  auto seed_it = attrs.find("model.seed");
  if (seed_it == attrs.end()) throw FormatError("model attributes lack 'model.seed'");
  c.seed = std::stoull(seed_it->second);
  return c;
}

std::string_view to_string(SlotId s) { return s == SlotId::kMessage ? "message" : "action"; }

// ---------------------------------------------------------------------------

AdapterSlot::AdapterSlot(SlotId id, const ModelConfig& config, std::uint64_t seed)
    : id_(id), rank_(config.lora_rank), scaling_(config.lora_alpha / config.lora_rank) {
  std::mt19937_64 rng(seed);
  for (int layer = 0; layer < config.n_layers; ++layer) {
    for (LoraTarget t : kAllTargets) {
      if (t == LoraTarget::kLmHead) continue;
      if (std::find(config.lora_targets.begin(), config.lora_targets.end(), t) == config.lora_targets.end()) continue;
      auto [out, in] = target_shape(config, t);
      pairs_[{layer, t}] = LoraPair{
          ad::parameter(uniform_tensor(rank_, in, 1.0 / std::sqrt(static_cast<double>(in)), rng), true),
          ad::parameter(Tensor(out, rank_), true)};
    }
  }
  if (std::find(config.lora_targets.begin(), config.lora_targets.end(), LoraTarget::kLmHead) !=
      config.lora_targets.end()) {
    auto [out, in] = target_shape(config, LoraTarget::kLmHead);
    pairs_[{-1, LoraTarget::kLmHead}] = LoraPair{
        ad::parameter(uniform_tensor(rank_, in, 1.0 / std::sqrt(static_cast<double>(in)), rng), true),
        ad::parameter(Tensor(out, rank_), true)};
  }
}

const LoraPair* AdapterSlot::find(int layer, LoraTarget target) const {
  if (target == LoraTarget::kLmHead) layer = -1;
  auto it = pairs_.find({layer, target});
  return it == pairs_.end() ? nullptr : &it->second;
}

NamedParameters AdapterSlot::parameters() const {
  NamedParameters out;
  const std::string prefix = "slot." + std::string(name()) + ".";
  for (const auto& [key, pair] : pairs_) {
    const std::string where =
        key.second == LoraTarget::kLmHead ? "lm_head" : fmt::format("block{}.{}", key.first, to_string(key.second));
    out.emplace_back(prefix + where + ".a", pair.a);
    out.emplace_back(prefix + where + ".b", pair.b);
  }
  return out;
}

std::vector<ad::Var> AdapterSlot::trainable() const {
  std::vector<ad::Var> out;
  for (auto& [name, v] : parameters()) out.push_back(v);
  return out;
}

std::size_t AdapterSlot::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [key, pair] : pairs_) n += pair.a.value().size() + pair.b.value().size();
  return n;
}

// ---------------------------------------------------------------------------

ValueHead::ValueHead(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = config.d_model, h = config.value_hidden;
  w1_ = ad::parameter(normal_tensor(h, d, 1.0 / std::sqrt(static_cast<double>(d)), rng), true);
  b1_ = ad::parameter(Tensor(1, h), true);
  // Zero output layer: every prompt starts at value 0.
  w2_ = ad::parameter(Tensor(1, h), true);
  b2_ = ad::parameter(Tensor(1, 1), true);
}

ad::Var ValueHead::forward(const ad::Var& hidden_row) const {
  ad::Var h = ad::gelu(ad::add_row(ad::matmul_nt(ad::detach(hidden_row), w1_), b1_));
  return ad::add_row(ad::matmul_nt(h, w2_), b2_);
}

NamedParameters ValueHead::parameters() const {
  return {{"value.w1", w1_}, {"value.b1", b1_}, {"value.w2", w2_}, {"value.b2", b2_}};
}

std::vector<ad::Var> ValueHead::trainable() const { return {w1_, b1_, w2_, b2_}; }

// ---------------------------------------------------------------------------

LanguageModel::LanguageModel(const ModelConfig& config)
    : config_((config.validate(), config)),
      message_(SlotId::kMessage, config, mix_seed(config.seed, 11)),
      action_(SlotId::kAction, config, mix_seed(config.seed, 12)),
      value_head_(config, mix_seed(config.seed, 13)) {
  std::mt19937_64 rng(mix_seed(config.seed, 10));
  const int d = config_.d_model, f = config_.ff_dim(), v = config_.vocab_size;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  tok_emb_ = ad::parameter(normal_tensor(v, d, 1.0, rng), false);
  for (int l = 0; l < config_.n_layers; ++l) {
    Block b;
    b.norm1 = ad::parameter(Tensor(1, d, 1.0), false);
    b.wq = ad::parameter(normal_tensor(d, d, sd, rng), false);
    b.wk = ad::parameter(normal_tensor(d, d, sd, rng), false);
    b.wv = ad::parameter(normal_tensor(d, d, sd, rng), false);
    b.wo = ad::parameter(normal_tensor(d, d, sd, rng), false);
    b.norm2 = ad::parameter(Tensor(1, d, 1.0), false);
    b.w_up = ad::parameter(normal_tensor(f, d, sd, rng), false);
    b.w_down = ad::parameter(normal_tensor(d, f, sf, rng), false);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = ad::parameter(Tensor(1, d, 1.0), false);
  lm_head_ = ad::parameter(normal_tensor(v, d, config_.logit_scale * sd, rng), false);
}

void LanguageModel::check_fits(std::size_t tokens) const {
  if (tokens > static_cast<std::size_t>(config_.context_length)) {
    throw UsageError(fmt::format("sequence of {} tokens (with bos) exceeds the context length {}", tokens,
                                 config_.context_length));
  }
}

ad::Var LanguageModel::dense(const ad::Var& x, const ad::Var& w, int layer, LoraTarget target,
                             const AdapterSlot* slot) const {
  ad::Var y = ad::matmul_nt(x, w);
  if (slot) {
    if (const LoraPair* p = slot->find(layer, target)) {
      y = ad::add(y, ad::scale(ad::matmul_nt(ad::matmul_nt(x, p->a), p->b), slot->scaling()));
    }
  }
  return y;
}

ad::Var LanguageModel::hidden_states(const PackedInput& input, const AdapterSlot* slot) const {
  if (input.ids.empty()) throw UsageError("forward on an empty input");
  if (input.ids.size() != input.positions.size()) throw UsageError("one position per packed token");
  for (int p : input.positions) {
    if (p < 0 || p >= config_.context_length) throw UsageError("packed position outside the context");
  }
  for (int id : input.ids) {
    if (id < 0 || id >= config_.vocab_size) throw UsageError("token id outside the vocabulary");
  }
  ad::Var x = ad::embedding(tok_emb_, input.ids);
  for (int l = 0; l < config_.n_layers; ++l) {
    const Block& b = blocks_[static_cast<std::size_t>(l)];
    ad::Var h = ad::rms_norm(x, b.norm1);
    ad::Var q = ad::rope(dense(h, b.wq, l, LoraTarget::kQuery, slot), input.positions, config_.n_heads);
    ad::Var k = ad::rope(dense(h, b.wk, l, LoraTarget::kKey, slot), input.positions, config_.n_heads);
    ad::Var v = dense(h, b.wv, l, LoraTarget::kValue, slot);
    ad::Var a = ad::attention(q, k, v, config_.n_heads, input.mask);
    x = ad::add(x, dense(a, b.wo, l, LoraTarget::kOutput, slot));
    ad::Var h2 = ad::rms_norm(x, b.norm2);
    ad::Var u = ad::gelu(dense(h2, b.w_up, l, LoraTarget::kMlpUp, slot));
    x = ad::add(x, dense(u, b.w_down, l, LoraTarget::kMlpDown, slot));
  }
  return ad::rms_norm(x, final_norm_);
}

ad::Var LanguageModel::logits_at(const ad::Var& hidden, std::span<const int> rows, const AdapterSlot* slot) const {
  return dense(ad::gather_rows(hidden, rows), lm_head_, -1, LoraTarget::kLmHead, slot);
}

ad::Var LanguageModel::forward(const TokenSequence& seq, const AdapterSlot* slot) const {
  check_fits(seq.size() + 1);
  PackedInput in;
  in.ids.push_back(Vocabulary::kBos);
  in.ids.insert(in.ids.end(), seq.ids.begin(), seq.ids.end());
  for (int i = 0; i < static_cast<int>(in.ids.size()); ++i) in.positions.push_back(i);
  ad::Var hidden = hidden_states(in, slot);
  std::vector<int> rows(in.ids.size());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) rows[static_cast<std::size_t>(i)] = i;
  return logits_at(hidden, rows, slot);
}

ad::Var LanguageModel::sequence_logprob(const TokenSequence& prefix, const TokenSequence& continuation,
                                        const AdapterSlot* slot) const {
  if (continuation.empty()) throw UsageError("sequence_logprob needs a non-empty continuation");
  // The last continuation token is only predicted, never fed.
  const std::size_t fed = prefix.size() + continuation.size();
  check_fits(fed + 1);
  PackedInput in;
  in.ids.push_back(Vocabulary::kBos);
  in.ids.insert(in.ids.end(), prefix.ids.begin(), prefix.ids.end());
  in.ids.insert(in.ids.end(), continuation.ids.begin(), continuation.ids.end() - 1);
  for (int i = 0; i < static_cast<int>(in.ids.size()); ++i) in.positions.push_back(i);
  ad::Var hidden = hidden_states(in, slot);
  std::vector<int> rows;
  for (std::size_t j = 0; j < continuation.size(); ++j) rows.push_back(static_cast<int>(prefix.size() + j));
  ad::Var picked = ad::log_softmax_pick(logits_at(hidden, rows, slot), continuation.ids);
  return ad::sum(picked);
}

CandidateScores LanguageModel::score_candidates(const TokenSequence& prefix, std::span<const TokenSequence> candidates,
                                                const AdapterSlot* slot) const {
  if (candidates.empty()) throw UsageError("score_candidates needs at least one candidate");
  const int p_rows = static_cast<int>(prefix.size()) + 1;  // bos + prefix

  // Trie of fed candidate tokens (all but each candidate's last token).
  std::map<std::pair<int, int>, int> children;  // (parent node, token) -> node
  std::vector<int> node_token, node_parent, node_depth;
  // For every predicted token: the row it is read from.
  std::vector<int> read_rows, picked, segment;
  std::size_t longest = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& ids = candidates[c].ids;
    if (ids.empty()) throw UsageError("score_candidates: empty candidate");
    longest = std::max(longest, ids.size());
    int parent = -1;
    for (std::size_t j = 0; j < ids.size(); ++j) {
      read_rows.push_back(parent < 0 ? p_rows - 1 : p_rows + parent);
      picked.push_back(ids[j]);
      segment.push_back(static_cast<int>(c));
      if (j + 1 == ids.size()) break;
      auto [it, inserted] = children.try_emplace({parent, ids[j]}, static_cast<int>(node_token.size()));
      if (inserted) {
        node_token.push_back(ids[j]);
        node_parent.push_back(parent);
        node_depth.push_back(parent < 0 ? 0 : node_depth[static_cast<std::size_t>(parent)] + 1);
      }
      parent = it->second;
    }
  }
  check_fits(prefix.size() + longest);

  PackedInput in;
  in.ids.push_back(Vocabulary::kBos);
  in.ids.insert(in.ids.end(), prefix.ids.begin(), prefix.ids.end());
  for (int i = 0; i < p_rows; ++i) in.positions.push_back(i);
  for (std::size_t n = 0; n < node_token.size(); ++n) {
    in.ids.push_back(node_token[n]);
    in.positions.push_back(p_rows + node_depth[n]);
  }
  if (!node_token.empty()) {
    auto mask = std::make_shared<ad::AttentionMask>();
    const int t = static_cast<int>(in.ids.size());
    mask->size = t;
    mask->allowed.assign(static_cast<std::size_t>(t) * t, 0);
    for (int i = 0; i < p_rows; ++i) {
      for (int j = 0; j <= i; ++j) mask->allowed[static_cast<std::size_t>(i) * t + j] = 1;
    }
    for (int n = 0; n < static_cast<int>(node_token.size()); ++n) {
      const int row = p_rows + n;
      auto* allowed = mask->allowed.data() + static_cast<std::size_t>(row) * t;
      for (int j = 0; j < p_rows; ++j) allowed[j] = 1;
      for (int a = n; a >= 0; a = node_parent[static_cast<std::size_t>(a)]) allowed[p_rows + a] = 1;
    }
    in.mask = std::move(mask);
  }
  ad::Var hidden = hidden_states(in, slot);

  // Logits once per distinct read row.
  std::vector<int> unique_rows;
  std::map<int, int> where;
  std::vector<int> gather;
  for (int r : read_rows) {
    auto [it, inserted] = where.try_emplace(r, static_cast<int>(unique_rows.size()));
    if (inserted) unique_rows.push_back(r);
    gather.push_back(it->second);
  }
  ad::Var logits = logits_at(hidden, unique_rows, slot);
  ad::Var per_token = ad::log_softmax_pick(ad::gather_rows(logits, gather), picked);
  return CandidateScores{ad::segment_sum(per_token, segment, static_cast<int>(candidates.size())), hidden};
}

TokenSequence LanguageModel::generate(const TokenSequence& prompt, const AdapterSlot* slot, int max_tokens,
                                      const GenerationMode& mode, const Vocabulary* vocab) const {
  if (max_tokens < 1) throw UsageError("generate needs max_tokens >= 1");
  check_fits(prompt.size() + 1);
  ad::NoGradGuard no_grad;
  std::mt19937_64 rng(mode.seed);
  const bool greedy = mode.greedy || mode.temperature <= 1e-8;
  PackedInput in;
  in.ids.push_back(Vocabulary::kBos);
  in.ids.insert(in.ids.end(), prompt.ids.begin(), prompt.ids.end());
  TokenSequence out;
  while (static_cast<int>(out.ids.size()) < max_tokens && static_cast<int>(in.ids.size()) <= config_.context_length) {
    in.positions.resize(in.ids.size());
    for (int i = 0; i < static_cast<int>(in.ids.size()); ++i) in.positions[static_cast<std::size_t>(i)] = i;
    const int last = static_cast<int>(in.ids.size()) - 1;
    ad::Var logits = logits_at(hidden_states(in, slot), std::span<const int>(&last, 1), slot);
    const auto& row = logits.value().data;
    int next = 0;
    if (greedy) {
      for (int v = 1; v < static_cast<int>(row.size()); ++v) {
        if (row[static_cast<std::size_t>(v)] > row[static_cast<std::size_t>(next)]) next = v;
      }
    } else {
      double mx = row[0];
      for (double x : row) mx = std::max(mx, x);
      std::vector<double> w(row.size());
      double z = 0.0;
      for (std::size_t v = 0; v < row.size(); ++v) {
        w[v] = std::exp((row[v] - mx) / mode.temperature);
        z += w[v];
      }
      double u = std::uniform_real_distribution<double>(0.0, z)(rng);
      next = static_cast<int>(row.size()) - 1;
      for (std::size_t v = 0; v < w.size(); ++v) {
        if (u < w[v]) {
          next = static_cast<int>(v);
          break;
        }
        u -= w[v];
      }
    }
    if (next == Vocabulary::kEos) break;
    out.ids.push_back(next);
    in.ids.push_back(next);
  }
  if (vocab) out.text = vocab->decode(out.ids);
  return out;
}

ad::Var LanguageModel::value_at(const ad::Var& hidden, int row) const {
  return value_head_.forward(ad::gather_rows(hidden, std::span<const int>(&row, 1)));
}

ad::Var LanguageModel::value(const TokenSequence& prompt, const AdapterSlot* slot) const {
  check_fits(prompt.size() + 1);
  PackedInput in;
  in.ids.push_back(Vocabulary::kBos);
  in.ids.insert(in.ids.end(), prompt.ids.begin(), prompt.ids.end());
  for (int i = 0; i < static_cast<int>(in.ids.size()); ++i) in.positions.push_back(i);
  return value_at(hidden_states(in, slot), static_cast<int>(in.ids.size()) - 1);
}

NamedParameters LanguageModel::base_parameters() const {
  NamedParameters out{{"base.tok_emb", tok_emb_}};
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    const std::string p = fmt::format("base.block{}.", l);
    out.emplace_back(p + "norm1", b.norm1);
    out.emplace_back(p + "wq", b.wq);
    out.emplace_back(p + "wk", b.wk);
    out.emplace_back(p + "wv", b.wv);
    out.emplace_back(p + "wo", b.wo);
    out.emplace_back(p + "norm2", b.norm2);
    out.emplace_back(p + "w_up", b.w_up);
    out.emplace_back(p + "w_down", b.w_down);
  }
  out.emplace_back("base.final_norm", final_norm_);
  out.emplace_back("base.lm_head", lm_head_);
  return out;
}

NamedParameters LanguageModel::all_parameters() const {
  NamedParameters out = base_parameters();
  for (const AdapterSlot* s : {&message_, &action_}) {
    auto p = s->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  auto v = value_head_.parameters();
  out.insert(out.end(), v.begin(), v.end());
  return out;
}

void LanguageModel::load_parameters(const std::map<std::string, Tensor>& values) {
  for (auto& [name, var] : all_parameters()) {
    auto it = values.find(name);
    if (it == values.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (!it->second.same_shape(var.value())) {
      throw FormatError(fmt::format("tensor '{}' has shape {}x{}, expected {}x{}", name, it->second.rows,
                                    it->second.cols, var.rows(), var.cols()));
    }
    ad::Var v = var;
    v.mutable_value() = it->second;
  }
}

}  // namespace verco::textgen
