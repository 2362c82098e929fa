#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "support/gradcheck.hpp"
#include "verco/common/error.hpp"
#include "verco/kitchen/kitchen_env.hpp"
#include "verco/rl/action_policy.hpp"
#include "verco/rl/ppo.hpp"
#include "verco/rl/rollout.hpp"
#include "verco/rl/symbolic.hpp"
#include "verco/sft/sft.hpp"

using namespace verco;
using namespace verco::rl;
using textgen::LanguageModel;
using textgen::ModelConfig;
using textgen::NamedParameters;
using textgen::SlotId;
using textgen::Tensor;
using textgen::TokenSequence;
namespace ad = textgen::ad;

namespace {

ModelConfig tiny_config(int vocab, std::uint64_t seed = 5) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 4;
  c.context_length = 256;
  c.seed = seed;
  return c;
}

TokenSequence seq(std::vector<int> ids) { return TokenSequence{std::move(ids), ""}; }

void randomize(const NamedParameters& params, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto [name, p] : params) {
    for (double& v : p.mutable_value().data) v = d(rng);
  }
}

std::map<std::string, Tensor> snapshot(const NamedParameters& params) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, p] : params) out[name] = p.value();
  return out;
}

textgen::Vocabulary toy_vocab() {
  return textgen::Vocabulary::from_words(std::vector<std::string>{"a", "b", "c", "d"});
}

// The env vocabulary plus a model over it.
struct Kit {
  teacher::ScriptedTeacher scripted;
  textgen::Vocabulary vocab = sft::default_vocabulary(scripted);
  LanguageModel model;
  explicit Kit(std::uint64_t seed = 5) : model(tiny_config(vocab.size(), seed)) {}
};

}  // namespace

// ---------------------------------------------------------------------------
// Candidate distribution

TEST(Softmax, SingleCandidateAndShiftInvariance) {
  EXPECT_EQ(softmax(std::vector<double>{-3.7}), std::vector<double>{1.0});
  const std::vector<double> s{-1.0, -4.0, -2.5, -0.3};
  std::vector<double> shifted = s;
  for (double& v : shifted) v += 123.25;
  const auto p = softmax(s), q = softmax(shifted);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(entropy(std::vector<double>(5, 0.2)), std::log(5.0), 1e-12);
  EXPECT_THROW(softmax(std::vector<double>{}), UsageError);
}

TEST(ActionDistribution, IdenticalCandidatesSplitEvenly) {
  const auto vocab = toy_vocab();
  LanguageModel m(tiny_config(vocab.size()));
  randomize(m.slot(SlotId::kAction).parameters(), 0.3, 2);
  LanguagePolicy policy(m, vocab);
  ActionInput in{seq({4, 5}), 2, {kitchen::Verb::kNoop, kitchen::Verb::kChop}, {seq({6, 7}), seq({6, 7})}, {}};
  const auto d = policy.distribution(in);
  EXPECT_DOUBLE_EQ(d.probs[0], 0.5);
  EXPECT_DOUBLE_EQ(d.probs[1], 0.5);
}

// Every word sequence up to length 3 is a candidate; the packed scores must
// match products of per-token softmax entries computed row by row.
TEST(ActionDistribution, MatchesExhaustivePerTokenProducts) {
  const auto vocab = toy_vocab();
  LanguageModel m(tiny_config(vocab.size(), 9));
  randomize(m.slot(SlotId::kAction).parameters(), 0.3, 4);
  const auto* slot = &m.slot(SlotId::kAction);
  std::vector<TokenSequence> cands;
  for (int len = 1; len <= 3; ++len) {
    std::vector<int> ids(static_cast<std::size_t>(len), 4);
    while (true) {
      cands.push_back(seq(ids));
      int k = len - 1;
      while (k >= 0 && ids[static_cast<std::size_t>(k)] == 7) ids[static_cast<std::size_t>(k--)] = 4;
      if (k < 0) break;
      ++ids[static_cast<std::size_t>(k)];
    }
  }
  ASSERT_EQ(cands.size(), 4u + 16u + 64u);
  const TokenSequence prefix = seq({5, 4, 6});
  std::vector<double> products;
  for (const auto& c : cands) {
    TokenSequence full = prefix;
    full.ids.insert(full.ids.end(), c.ids.begin(), c.ids.end());
    const Tensor logits = m.forward(full, slot).value();
    double prod = 1.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const int row = static_cast<int>(prefix.size() + j);
      double z = 0.0;
      for (int v = 0; v < logits.cols; ++v) z += std::exp(logits(row, v));
      prod *= std::exp(logits(row, c.ids[j])) / z;
    }
    products.push_back(prod);
  }
  const double total = std::accumulate(products.begin(), products.end(), 0.0);
  LanguagePolicy policy(m, vocab);
  ActionInput in{prefix, 3, std::vector<kitchen::Verb>(cands.size(), kitchen::Verb::kNoop), cands, {}};
  const auto d = policy.distribution(in);
  double sum = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    EXPECT_NEAR(d.probs[i], products[i] / total, 1e-6) << i;
    sum += d.probs[i];
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  // The differentiable path agrees with the grad-free one.
  const auto eval = policy.evaluate(in, false);
  for (std::size_t i = 0; i < cands.size(); ++i) EXPECT_NEAR(std::exp(eval.log_probs.value().data[i]), d.probs[i], 1e-12);
}

TEST(ActionDistribution, KitchenCandidatesAreLegalActions) {
  Kit kit;
  LanguagePolicy policy(kit.model, kit.vocab);
  auto s = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 40; ++t) {
    for (int i = 0; i < 2; ++i) {
      const auto legal = kitchen::legal_actions(s, i);
      const auto obs = prompt::textualize(kitchen::local_view(s, i));
      const auto d = action_distribution(kit.model, kit.vocab, obs, {}, legal);
      ASSERT_EQ(d.candidates.size(), legal.size());
      for (std::size_t k = 0; k < legal.size(); ++k) EXPECT_EQ(d.candidates[k], legal[k].verb);
      EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-9);
      EXPECT_GE(d.entropy(), 0.0);
      EXPECT_LE(d.entropy(), std::log(static_cast<double>(legal.size())) + 1e-12);
    }
    std::vector<kitchen::AgentAction> joint;
    for (int i = 0; i < 2; ++i) {
      const auto legal = kitchen::legal_actions(s, i);
      joint.push_back(legal[rng() % legal.size()]);
    }
    kitchen::step(s, joint);
  }
}

TEST(ActionDistribution, TokenNormDividesByLength) {
  const auto vocab = toy_vocab();
  LanguageModel m(tiny_config(vocab.size()));
  LanguagePolicy raw(m, vocab), norm(m, vocab, PolicyOptions{true, 10});
  ActionInput in{seq({4}), 1, {kitchen::Verb::kNoop, kitchen::Verb::kChop}, {seq({5}), seq({6, 7, 5})}, {}};
  const auto a = raw.distribution(in), b = norm.distribution(in);
  EXPECT_DOUBLE_EQ(b.logprobs[0], a.logprobs[0]);
  EXPECT_NEAR(b.logprobs[1], a.logprobs[1] / 3.0, 1e-15);
}

// ---------------------------------------------------------------------------
// GAE

TEST(Gae, OneStepReduction) {
  const std::vector<double> r{0.5, -1.0, 2.0}, v{0.1, 0.3, -0.2};
  const auto a = gae(r, v, 0.7, 0.9, 0.0);
  EXPECT_EQ(a[0], r[0] + 0.9 * v[1] - v[0]);
  EXPECT_EQ(a[1], r[1] + 0.9 * v[2] - v[1]);
  EXPECT_EQ(a[2], r[2] + 0.9 * 0.7 - v[2]);
}

TEST(Gae, MonteCarloReduction) {
  const std::vector<double> r{1.0, -2.0, 0.5, 4.0}, v(4, 0.0);
  const auto a = gae(r, v, 0.0, 1.0, 1.0);
  EXPECT_EQ(a, (std::vector<double>{3.5, 2.5, 4.5, 4.0}));
}

TEST(Gae, MatchesDoubleSumOnRandomInstances) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = 1 + rng() % 20;
    std::vector<double> r(len), v(len);
    for (auto& x : r) x = n(rng);
    for (auto& x : v) x = n(rng);
    const double boot = n(rng), gamma = 0.5 + 0.5 * u(rng), lambda = u(rng);
    const auto a = gae(r, v, boot, gamma, lambda);
    for (std::size_t t = 0; t < len; ++t) {
      double direct = 0.0;
      for (std::size_t k = t; k < len; ++k) {
        const double next = k + 1 < len ? v[k + 1] : boot;
        direct += std::pow(gamma * lambda, static_cast<double>(k - t)) * (r[k] + gamma * next - v[k]);
      }
      ASSERT_NEAR(a[t], direct, 1e-10);
    }
  }
}

TEST(Gae, LengthMismatchIsUsageError) {
  EXPECT_THROW(gae(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 0.0, 0.9, 0.9), UsageError);
}

TEST(RlBuffer, SegmentsEndAtDoneAndTailBootstraps) {
  RlBuffer buf;
  const std::vector<double> rewards{1.0, 0.0, 2.0, -1.0, 0.5};
  const std::vector<bool> done{false, true, false, false, false};
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    Transition tr;
    tr.reward = rewards[t];
    tr.done = done[t];
    for (int a = 0; a < 2; ++a) {
      AgentSample s;
      s.value = 0.1 * static_cast<double>(t) + a;
      tr.agents.push_back(s);
    }
    buf.add(tr);
  }
  EXPECT_THROW(buf.compute_advantages(0.9, 0.8, std::vector<double>{}), UsageError);
  buf.compute_advantages(0.9, 0.8, std::vector<double>{3.0, -3.0});
  for (int a = 0; a < 2; ++a) {
    const auto first = gae(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0 + a, 0.1 + a}, 0.0, 0.9, 0.8);
    const auto second = gae(std::vector<double>{2.0, -1.0, 0.5}, std::vector<double>{0.2 + a, 0.3 + a, 0.4 + a},
                            a == 0 ? 3.0 : -3.0, 0.9, 0.8);
    const auto& tr = buf.transitions();
    EXPECT_EQ(tr[0].agents[a].advantage, first[0]);
    EXPECT_EQ(tr[1].agents[a].advantage, first[1]);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(tr[2 + k].agents[a].advantage, second[k]);
    for (const auto& t : tr) EXPECT_EQ(t.agents[a].target, t.agents[a].advantage + t.agents[a].value);
  }
}

// ---------------------------------------------------------------------------
// Losses

TEST(PolicyLoss, RatioOneIsNegativeMeanAdvantage) {
  ad::Var lp = ad::parameter(Tensor(3, 1), true);
  lp.mutable_value().data = {-0.5, -1.2, -0.1};
  const std::vector<double> behavior{-0.5, -1.2, -0.1}, adv{2.0, -1.0, 0.5};
  const ad::Var loss = policy_loss(lp, behavior, adv, 0.2);
  EXPECT_NEAR(loss.item(), -(2.0 - 1.0 + 0.5) / 3.0, 1e-15);
  ad::backward(loss);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(lp.grad().data[i], -adv[i] / 3.0, 1e-15);
}

TEST(PolicyLoss, ClipArithmetic) {
  ad::Var lp = ad::parameter(Tensor(1, 1, std::log(1.5)), true);
  // A > 0: the clipped branch 1.2 A is the minimum and has no gradient.
  ad::Var pos = policy_loss(lp, std::vector<double>{0.0}, std::vector<double>{2.0}, 0.2);
  EXPECT_NEAR(pos.item(), -1.2 * 2.0, 1e-12);
  ad::backward(pos);
  EXPECT_EQ(lp.grad().data[0], 0.0);
  lp.zero_grad();
  // A < 0: min(1.5 A, 1.2 A) = 1.5 A, unclipped and differentiable.
  ad::Var neg = policy_loss(lp, std::vector<double>{0.0}, std::vector<double>{-2.0}, 0.2);
  EXPECT_NEAR(neg.item(), 1.5 * 2.0, 1e-12);
  ad::backward(neg);
  EXPECT_NEAR(lp.grad().data[0], 1.5 * 2.0, 1e-12);
}

TEST(PolicyLoss, ZeroAdvantageGivesZeroAdapterGradient) {
  const auto vocab = toy_vocab();
  LanguageModel m(tiny_config(vocab.size()));
  randomize(m.slot(SlotId::kAction).parameters(), 0.3, 8);
  LanguagePolicy policy(m, vocab);
  ActionInput in{seq({4, 5}), 2, {kitchen::Verb::kNoop, kitchen::Verb::kChop}, {seq({6}), seq({7, 4})}, {}};
  const auto eval = policy.evaluate(in, false);
  const int chosen[] = {1};
  const double behavior = eval.log_probs.value().data[1];
  ad::backward(policy_loss(ad::gather_rows(eval.log_probs, chosen), std::vector<double>{behavior + 0.1},
                           std::vector<double>{0.0}, 0.2));
  for (const auto& [name, p] : m.slot(SlotId::kAction).parameters()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad().data) EXPECT_EQ(g, 0.0) << name;
  }
}

TEST(CriticLoss, Examples) {
  auto col = [](std::vector<double> xs) {
    Tensor t(static_cast<int>(xs.size()), 1);
    t.data = std::move(xs);
    return ad::constant(std::move(t));
  };
  const double eps = 0.2;
  EXPECT_EQ(critic_loss(col({0.3, -1.0}), std::vector<double>{0.3, -1.0}, std::vector<double>{0.3, -1.0}, eps,
                        CriticClipMode::kMax)
                .item(),
            0.0);
  // V - V_old = 2 eps with the target far below: the anchored branch
  // V_old + eps is further from the target, so max keeps it.
  const double v_old = 1.0, v = v_old + 2 * eps, target = -5.0;
  const double clipped = (v_old + eps - target) * (v_old + eps - target);
  const double plain = (v - target) * (v - target);
  EXPECT_NEAR(critic_loss(col({v}), std::vector<double>{v_old}, std::vector<double>{-5.0}, eps, CriticClipMode::kMax)
                  .item(),
              std::max(plain, clipped), 1e-12);
  // Target far above: the anchored branch is the larger error.
  const double up = 9.0;
  EXPECT_NEAR(critic_loss(col({v}), std::vector<double>{v_old}, std::vector<double>{up}, eps, CriticClipMode::kMax)
                  .item(),
              (v_old + eps - up) * (v_old + eps - up), 1e-12);
  EXPECT_NEAR(critic_loss(col({v}), std::vector<double>{v_old}, std::vector<double>{up}, eps, CriticClipMode::kMin)
                  .item(),
              (v - up) * (v - up), 1e-12);
  EXPECT_NEAR(critic_loss(col({v}), std::vector<double>{v_old}, std::vector<double>{up}, eps, CriticClipMode::kNone)
                  .item(),
              (v - up) * (v - up), 1e-12);
  // Constant offset c from the targets.
  const double c = 0.37;
  EXPECT_NEAR(critic_loss(col({1.0 + c, -2.0 + c, 0.5 + c}), std::vector<double>{1.0 + c, -2.0 + c, 0.5 + c},
                          std::vector<double>{1.0, -2.0, 0.5}, eps, CriticClipMode::kMax)
                  .item(),
              c * c, 1e-12);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Kit kit(31);
  auto& m = kit.model;
  randomize(m.slot(SlotId::kAction).parameters(), 0.2, 3);
  randomize(m.value_head().parameters(), 0.3, 4);
  LanguagePolicy policy(m, kit.vocab);
  auto s = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  const auto obs = prompt::textualize(kitchen::local_view(s, 0));
  const std::vector<prompt::ReceivedMessage> got{{1, "fetch a plate , move up"}};
  const auto in = policy.action_input(obs, got, kitchen::legal_actions(s, 0));
  const auto base = policy.distribution(in);
  const double behavior = base.log_prob(1) + 0.05;
  // The critic reads detached hidden states, so its loss is checked against
  // the head only; the actor terms against the adapters.
  auto actor = [&] {
    const auto e = policy.evaluate(in, false);
    const int chosen[] = {1};
    const ad::Var l = policy_loss(ad::gather_rows(e.log_probs, chosen), std::vector<double>{behavior},
                                  std::vector<double>{0.8}, 0.2);
    return ad::sub(l, ad::scale(entropy_of(e.log_probs), 0.01));
  };
  auto critic = [&] {
    const auto e = policy.evaluate(in, true);
    return critic_loss(e.value, std::vector<double>{0.05}, std::vector<double>{0.6}, 0.2, CriticClipMode::kMax);
  };
  const auto ra = verco::testing::gradient_check(actor, m.slot(SlotId::kAction).parameters(), 100, 1e-4, 12);
  EXPECT_EQ(ra.probes, 100);
  EXPECT_LE(ra.max_relative_error, 1e-4);
  const auto rc = verco::testing::gradient_check(critic, m.value_head().parameters(), 100, 1e-4, 13);
  EXPECT_LE(rc.max_relative_error, 1e-4);
}

// ---------------------------------------------------------------------------
// Updates

namespace {

// One prompt, two single-step candidates, reward 1 for candidate 0.
struct Bandit {
  textgen::Vocabulary vocab = toy_vocab();
  LanguageModel model{tiny_config(vocab.size(), 13)};
  LanguagePolicy policy{model, vocab};
  ActionInput input{seq({4, 5, 6}), 3, {kitchen::Verb::kNoop, kitchen::Verb::kChop}, {seq({6, 7}), seq({7})}, {}};

  double p0() const { return policy.distribution(input).probs[0]; }

  void fill(RlBuffer& buf, int n, std::mt19937_64& rng) const {
    for (int k = 0; k < n; ++k) {
      AgentSample s;
      const auto d = policy.distribution(input, &s.value);
      s.action = d.sample(rng);
      s.behavior_logprob = d.log_prob(s.action);
      s.input = input;
      buf.add(Transition{{s}, s.action == 0 ? 1.0 : 0.0, true});
    }
    buf.compute_advantages(0.99, 0.95, {});
  }
};

}  // namespace

TEST(Ppo, BanditReachesNinetyPercent) {
  Bandit b;
  RlConfig cfg;
  cfg.lr = 3e-3;
  cfg.minibatch = 8;
  cfg.agent_weight = 1;
  PpoTrainer trainer(b.policy, cfg, 1);
  std::mt19937_64 rng(2);
  const double before = b.p0();
  for (int u = 0; u < 200; ++u) {
    RlBuffer buf;
    b.fill(buf, 8, rng);
    trainer.update(buf);
    EXPECT_TRUE(buf.empty());
  }
  EXPECT_LT(before, 0.9);
  EXPECT_GT(b.p0(), 0.9);
}

TEST(Ppo, CoefficientsZeroLeaveValueHeadAndFrozenWeightsAlone) {
  Bandit b;
  RlConfig cfg;
  cfg.critic_coef = 0.0;
  cfg.entropy_coef = 0.0;
  cfg.minibatch = 4;
  PpoTrainer trainer(b.policy, cfg, 1);
  const auto head = snapshot(b.model.value_head().parameters());
  const auto base = snapshot(b.model.base_parameters());
  const auto message = snapshot(b.model.slot(SlotId::kMessage).parameters());
  const auto action = snapshot(b.model.slot(SlotId::kAction).parameters());
  std::mt19937_64 rng(4);
  RlBuffer buf;
  b.fill(buf, 8, rng);
  trainer.update(buf);
  EXPECT_EQ(snapshot(b.model.value_head().parameters()), head);
  EXPECT_EQ(snapshot(b.model.base_parameters()), base);
  EXPECT_EQ(snapshot(b.model.slot(SlotId::kMessage).parameters()), message);
  EXPECT_NE(snapshot(b.model.slot(SlotId::kAction).parameters()), action);
}

TEST(Ppo, LargeEntropyCoefficientRaisesEntropy) {
  Bandit b;
  randomize(b.model.slot(SlotId::kAction).parameters(), 0.4, 17);
  const double before = b.policy.distribution(b.input).entropy();
  ASSERT_LT(before, std::log(2.0) - 0.05);
  RlConfig cfg;
  cfg.entropy_coef = 100.0;
  cfg.lr = 3e-3;
  cfg.minibatch = 8;
  PpoTrainer trainer(b.policy, cfg, 1);
  std::mt19937_64 rng(5);
  RlBuffer buf;
  b.fill(buf, 8, rng);
  trainer.update(buf);
  EXPECT_GT(b.policy.distribution(b.input).entropy(), before);
}

TEST(Ppo, UpdateRequiresAdvantages) {
  Bandit b;
  PpoTrainer trainer(b.policy, RlConfig{}, 1);
  RlBuffer empty;
  EXPECT_THROW(trainer.update(empty), UsageError);
  RlBuffer raw;
  raw.add(Transition{{AgentSample{b.input, 0, -0.7, 0.0, 0.0, 2, 0.0, 0.0}}, 1.0, true});
  EXPECT_THROW(trainer.update(raw), UsageError);
}

TEST(RlConfig, ValidationNamesTheField) {
  auto message_of = [](RlConfig c) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  RlConfig c;
  EXPECT_EQ(message_of(c), "");
  c.gamma = 0.0;
  EXPECT_NE(message_of(c).find("rl.gamma"), std::string::npos);
  c = RlConfig{};
  c.clip_eps = 1.0;
  EXPECT_NE(message_of(c).find("rl.clip_eps"), std::string::npos);
  c = RlConfig{};
  c.gae_lambda = 1.5;
  EXPECT_NE(message_of(c).find("rl.gae_lambda"), std::string::npos);
  RlConfig d;
  d.critic_clip = CriticClipMode::kMin;
  d.total_steps = 777;
  EXPECT_EQ(RlConfig::from_attributes(d.to_attributes()), d);
  EXPECT_THROW(RlConfig::from_attributes({{"rl.bogus", "1"}}), ConfigError);
  EXPECT_THROW(RlConfig::from_attributes({{"rl.gamma", "abc"}}), ConfigError);
}

// ---------------------------------------------------------------------------
// Rollouts

TEST(Rollout, StoredLogprobsReproduceAndMessagesStayFrozen) {
  Kit kit;
  kit.model = LanguageModel(tiny_config(kit.vocab.size(), 8));
  LanguagePolicy policy(kit.model, kit.vocab);
  TeamController team(policy, MessageSource::kPolicy);
  RlConfig cfg;
  cfg.minibatch = 16;
  cfg.epochs = 1;
  PpoTrainer trainer(policy, cfg, 3);
  RolloutRunner runner({}, 40);
  const auto message = snapshot(kit.model.slot(SlotId::kMessage).parameters());
  const auto base = snapshot(kit.model.base_parameters());
  std::vector<EpisodeMetrics> done;
  for (int round = 0; round < 2; ++round) {
    RlBuffer buf;
    runner.collect(team, buf, 24, cfg, done);
    ASSERT_TRUE(buf.advantages_ready());
    for (const auto& t : buf.transitions()) {
      ASSERT_EQ(t.agents.size(), 2u);
      for (const auto& s : t.agents) {
        const auto e = policy.evaluate(s.input, true);
        EXPECT_NEAR(e.log_probs.value().data[static_cast<std::size_t>(s.action)], s.behavior_logprob, 1e-6);
        EXPECT_NEAR(e.value.item(), s.value, 1e-12);
      }
    }
    trainer.update(buf);
  }
  EXPECT_EQ(snapshot(kit.model.slot(SlotId::kMessage).parameters()), message);
  EXPECT_EQ(snapshot(kit.model.base_parameters()), base);
  EXPECT_GT(policy.message_cache_size(), 0u);
}

TEST(Rollout, GreedyEpisodesAreDeterministic) {
  Kit kit;
  LanguagePolicy policy(kit.model, kit.vocab);
  TeamController team(policy, MessageSource::kPolicy);
  EnvSpec env;
  env.horizon = 30;
  std::mt19937_64 r1(1), r2(99);
  std::vector<StepRecord> a, b;
  const auto ma = run_episode(team, env, 4, true, r1, &a);
  policy.clear_message_cache();
  const auto mb = run_episode(team, env, 4, true, r2, &b);
  EXPECT_EQ(ma.episode_return, mb.episode_return);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) {
    EXPECT_EQ(a[t].actions, b[t].actions);
    EXPECT_EQ(a[t].messages, b[t].messages);
    EXPECT_EQ(a[t].grid, b[t].grid);
  }
  EXPECT_EQ(ma.length, 30);
}

TEST(Rollout, NoCommPromptsHaveNoMessageSection) {
  Kit kit;
  LanguagePolicy policy(kit.model, kit.vocab);
  TeamController none(policy, MessageSource::kNone);
  teacher::ScriptedTeacherAdapter teacher;
  TeamController piped(policy, MessageSource::kTeacher, &teacher);
  auto s = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  std::mt19937_64 rng(1);
  const auto d = none.decide(s, true, rng);
  for (const auto& sample : d.samples) EXPECT_EQ(sample.input.prompt.text.find("says"), std::string::npos);
  for (const auto& m : d.messages) EXPECT_TRUE(m.empty());
  const auto p = piped.decide(s, true, rng);
  for (const auto& sample : p.samples) EXPECT_NE(sample.input.prompt.text.find("says"), std::string::npos);
  for (const auto& m : p.messages) EXPECT_FALSE(m.empty());
}

TEST(Rollout, TeacherSourceNeedsTeacher) {
  Kit kit;
  LanguagePolicy policy(kit.model, kit.vocab);
  EXPECT_THROW(TeamController(policy, MessageSource::kTeacher), UsageError);
}

TEST(Rollout, RunnerResumesMidEpisodeExactly) {
  Kit kit;
  LanguagePolicy policy(kit.model, kit.vocab);
  TeamController team(policy, MessageSource::kNone);
  RlConfig cfg;
  RolloutRunner a({}, 7), b({}, 7);
  std::vector<EpisodeMetrics> da, db;
  RlBuffer buf;
  a.collect(team, buf, 150, cfg, da);
  buf.clear();
  ASSERT_EQ(da.size(), 1u);
  b.import_state(a.export_state());
  EXPECT_EQ(b.env_steps(), 150);
  EXPECT_EQ(b.episodes_started(), 2);
  RlBuffer b1, b2;
  a.collect(team, b1, 80, cfg, da);
  b.collect(team, b2, 80, cfg, db);
  ASSERT_EQ(da.size(), 2u);
  ASSERT_EQ(db.size(), 1u);
  EXPECT_EQ(da[1].episode_return, db[0].episode_return);
  EXPECT_EQ(da[1].entropy, db[0].entropy);
  EXPECT_EQ(da[1].length, db[0].length);
  for (std::size_t t = 0; t < b1.size(); ++t) {
    EXPECT_EQ(b1.transitions()[t].agents[0].action, b2.transitions()[t].agents[0].action);
    EXPECT_EQ(b1.transitions()[t].agents[1].advantage, b2.transitions()[t].agents[1].advantage);
  }
}

// ---------------------------------------------------------------------------
// Symbolic baseline

TEST(Symbolic, EncodingLayout) {
  EXPECT_EQ(kSymbolicFeatures, 25 * (7 + 4) + 9);
  auto s = kitchen::create(kitchen::MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  s.agents[0].held = kitchen::Item::salad();
  const auto w = kitchen::local_view(s, 0);
  const auto f = encode_window(w);
  ASSERT_EQ(f.size(), static_cast<std::size_t>(kSymbolicFeatures));
  int visible = 0;
  for (const auto& c : w.cells) visible += c.has_value();
  // One kind bit per visible cell, one item bit per visible item, plus
  // held item and facing.
  int items = 0;
  for (const auto& c : w.cells) items += c && c->item;
  EXPECT_EQ(std::accumulate(f.begin(), f.end(), 0.0), visible + items + 2);
  const double* pose = f.data() + 25 * 11;
  EXPECT_EQ(pose[1 + kitchen::item_state_index(kitchen::Item::salad())], 1.0);
}

TEST(Symbolic, DistributionAndGradients) {
  SymbolicPolicy p({16, 3});
  randomize(p.parameters(), 0.2, 9);
  auto s = kitchen::create(kitchen::MapId::kSeparateRooms, kitchen::Dish::kTomatoSalad, 0);
  const auto in = p.action_input(kitchen::local_view(s, 1), kitchen::legal_actions(s, 1));
  const auto d = p.distribution(in);
  EXPECT_EQ(d.candidates, in.verbs);
  EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-12);
  auto loss = [&] {
    const auto e = p.evaluate(in, true);
    const int chosen[] = {0};
    return ad::add(policy_loss(ad::gather_rows(e.log_probs, chosen), std::vector<double>{-1.0},
                               std::vector<double>{0.5}, 0.2),
                   critic_loss(e.value, std::vector<double>{0.0}, std::vector<double>{1.0}, 0.2,
                               CriticClipMode::kNone));
  };
  const auto r = verco::testing::gradient_check(loss, p.parameters(), 80, 1e-5, 2);
  EXPECT_LE(r.max_relative_error, 1e-4);
}

TEST(Symbolic, RolloutUsesTheSameMetrics) {
  SymbolicPolicy p({16, 3});
  TeamController team(p);
  RlConfig cfg;
  PpoTrainer trainer(p, cfg, 1);
  RolloutRunner runner({}, 1);
  RlBuffer buf;
  std::vector<EpisodeMetrics> done;
  runner.collect(team, buf, 100, cfg, done);
  ASSERT_EQ(done.size(), 1u);
  EXPECT_EQ(done[0].length, 100);
  EXPECT_GT(done[0].entropy, 0.0);
  trainer.update(buf);
}
