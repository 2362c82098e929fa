#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>
#include <json.hpp>

#include <random>
#include <set>

#include "verco/common/embedded_data.hpp"
#include "verco/common/error.hpp"
#include "verco/textgen/vocabulary.hpp"
#include "verco/kitchen/kitchen_env.hpp"
#include "verco/prompt/prompts.hpp"
#include "verco/teacher/http_teacher.hpp"
#include "verco/teacher/teacher.hpp"

namespace verco::teacher {
namespace {

using kitchen::AgentAction;
using kitchen::Item;
using kitchen::KitchenState;
using kitchen::MapId;
using kitchen::Pos;

std::vector<prompt::TextObservation> observe(const KitchenState& s) {
  std::vector<prompt::TextObservation> out;
  for (const auto& w : kitchen::all_views(s)) out.push_back(prompt::textualize(w));
  return out;
}

Labels plan_state(const ScriptedTeacher& t, const KitchenState& s) { return t.plan(observe(s), summarize(s)); }

TEST(TeacherText, WordCountIgnoresPunctuation) {
  EXPECT_EQ(count_words("get a tomato , move north"), 5);
  EXPECT_EQ(count_words("  "), 0);
  EXPECT_EQ(count_words("a , . b"), 2);
}

TEST(TeacherText, MessageBound) {
  EXPECT_NO_THROW(Message::make(0, "one two three four five six seven eight nine ten"));
  EXPECT_THROW(Message::make(0, "one two three four five six seven eight nine ten eleven"), UsageError);
  EXPECT_THROW(Message::make(0, " , "), UsageError);
}

TEST(TeacherRules, ParseRejectsUnknownNames) {
  EXPECT_THROW(ScriptedTeacher::parse_rules("r | no_such | holder_dish: deliver_dish | other: stay_clear"), FormatError);
  EXPECT_THROW(ScriptedTeacher::parse_rules("r | dish_held | nobody: deliver_dish | other: stay_clear"), FormatError);
  EXPECT_THROW(ScriptedTeacher::parse_rules("r | dish_held | holder_dish: deliver_dish"), FormatError);
  EXPECT_THROW(ScriptedTeacher::parse_subtasks("x | spoon | do it"), FormatError);
  const auto rules = ScriptedTeacher::parse_rules("; comment\nr | dish_held & !separated | holder_dish: a | other: b\n");
  ASSERT_EQ(rules.size(), 1u);
  ASSERT_EQ(rules[0].conditions.size(), 2u);
  EXPECT_TRUE(rules[0].conditions[1].second);
}

TEST(Teacher, SingleRoomStartSplitsTomatoAndPlate) {
  ScriptedTeacher t;
  const auto s = kitchen::create(MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  const auto labels = plan_state(t, s);
  ASSERT_EQ(labels.messages.size(), 2u);
  // Agent 2 tells agent 1 to fetch the tomato (it stands next to the source).
  EXPECT_EQ(labels.messages[1].sender, 1);
  EXPECT_NE(labels.messages[1].text.find("tomato"), std::string::npos) << labels.messages[1].text;
  EXPECT_NE(labels.messages[0].text.find("plate"), std::string::npos) << labels.messages[0].text;
  EXPECT_EQ(labels.assigned[0].target, TargetItem::kTomato);
  EXPECT_EQ(labels.assigned[1].target, TargetItem::kPlate);
}

TEST(Teacher, SeparateRoomsAsksForTheMiddleTable) {
  ScriptedTeacher t;
  auto s = kitchen::create(MapId::kSeparateRooms, kitchen::Dish::kTomatoSalad, 0);
  // The right-hand agent has the tomato but no cutboard on its side.
  s.agents[1].held = Item::whole_tomato();
  const auto labels = plan_state(t, s);
  EXPECT_EQ(labels.rule, "pass_tomato");
  EXPECT_EQ(labels.assigned[1].subtask, "pass_tomato");
  EXPECT_NE(labels.messages[0].text.find("middle table"), std::string::npos) << labels.messages[0].text;
}

TEST(Teacher, DefaultWhenNothingApplies) {
  // A table whose only rule cannot fire at the start.
  ScriptedTeacher t("only | dish_held | holder_dish: deliver_dish | other: stay_clear",
                    embedded_file("teacher/subtasks.txt"));
  const auto s = kitchen::create(MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  const auto labels = plan_state(t, s);
  EXPECT_EQ(labels.rule, "default");
  for (const auto& m : labels.messages) EXPECT_EQ(m.text, "continue your current task");
  EXPECT_GE(ScriptedTeacher().rule_count(), 10u);
}

TEST(Teacher, DeterministicAndComplementary) {
  ScriptedTeacher t;
  std::mt19937_64 rng(7);
  for (MapId map : {MapId::kSingleRoom, MapId::kSeparateRooms}) {
    auto s = kitchen::create(map, kitchen::Dish::kTomatoSalad, 3, 3000);
    for (int step = 0; step < 3000 && !s.done; ++step) {
      const auto a = plan_state(t, s);
      const auto b = plan_state(t, s);
      EXPECT_EQ(a.messages, b.messages);
      ASSERT_EQ(a.assigned.size(), 2u);
      if (a.assigned[0].target != TargetItem::kNone || a.assigned[1].target != TargetItem::kNone) {
        EXPECT_NE(a.assigned[0].target, a.assigned[1].target)
            << a.rule << ": " << a.assigned[0].subtask << " / " << a.assigned[1].subtask << "\n"
            << kitchen::render_ascii(s);
      }
      for (const auto& m : a.messages) EXPECT_LE(m.word_count, kMaxMessageWords);
      std::vector<AgentAction> joint;
      for (int i = 0; i < 2; ++i) {
        const auto legal = kitchen::legal_actions(s, i);
        joint.push_back(legal[std::uniform_int_distribution<std::size_t>(0, legal.size() - 1)(rng)]);
      }
      kitchen::step(s, joint);
    }
  }
}

TEST(Teacher, MessageWordsCoverEveryLabel) {
  ScriptedTeacher t;
  const auto words = t.message_words();
  std::set<std::string> known(words.begin(), words.end());
  auto s = kitchen::create(MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  for (const auto& m : plan_state(t, s).messages) {
    for (const auto& w : textgen::tokenize_words(m.text)) EXPECT_TRUE(known.contains(w)) << w;
  }
}

// Following the teacher's plan completes the dish on both maps.
TEST(Teacher, FollowingThePlanDelivers) {
  ScriptedTeacher t;
  for (MapId map : {MapId::kSingleRoom, MapId::kSeparateRooms}) {
    auto s = kitchen::create(map, kitchen::Dish::kTomatoSalad, 0);
    double total = 0.0;
    bool delivered = false;
    while (!s.done) {
      const auto labels = plan_state(t, s);
      std::vector<AgentAction> joint{AgentAction{labels.assigned[0].next}, AgentAction{labels.assigned[1].next}};
      const auto out = kitchen::step(s, joint);
      total += out.reward;
      for (auto e : out.events) delivered = delivered || e == kitchen::Event::kDeliveredCorrect;
    }
    EXPECT_TRUE(delivered) << kitchen::to_string(map) << " t=" << s.timestep;
    EXPECT_LT(s.timestep, 60) << kitchen::to_string(map);
    EXPECT_GT(total, 1.0);
  }
}

// From random mid-episode states the plan still finishes the dish.
TEST(Teacher, RecoversFromRandomStates) {
  ScriptedTeacher t;
  std::mt19937_64 rng(11);
  int delivered_runs = 0, runs = 0;
  for (MapId map : {MapId::kSingleRoom, MapId::kSeparateRooms}) {
    for (int trial = 0; trial < 150; ++trial) {
      auto s = kitchen::create(map, kitchen::Dish::kTomatoSalad, 0, 300);
      const int warmup = static_cast<int>(rng() % 80);
      for (int k = 0; k < warmup && !s.done; ++k) {
        std::vector<AgentAction> joint;
        for (int i = 0; i < 2; ++i) {
          const auto legal = kitchen::legal_actions(s, i);
          joint.push_back(legal[rng() % legal.size()]);
        }
        kitchen::step(s, joint);
      }
      if (s.done) continue;
      ++runs;
      bool delivered = false;
      while (!s.done) {
        const auto labels = plan_state(t, s);
        if (labels.assigned[0].target != TargetItem::kNone) {
          EXPECT_NE(labels.assigned[0].target, labels.assigned[1].target) << labels.rule;
        }
        std::vector<AgentAction> joint{AgentAction{labels.assigned[0].next}, AgentAction{labels.assigned[1].next}};
        for (auto e : kitchen::step(s, joint).events) delivered = delivered || e == kitchen::Event::kDeliveredCorrect;
      }
      delivered_runs += delivered ? 1 : 0;
    }
  }
  EXPECT_EQ(delivered_runs, runs);
}

// A local server answering every POST with a fixed reply.
class MockServer {
 public:
  explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/label", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/label"; }

  std::atomic<int> hits{0};
  std::string last_body, last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

auto reply(std::string body, int status = 200) {
  return [body, status](const httplib::Request&, httplib::Response& res) {
    res.status = status;
    res.set_content(body, "application/json");
  };
}

HttpTeacherConfig fast_config(const std::string& url) {
  HttpTeacherConfig c;
  c.url = url;
  c.timeout_seconds = 2.0;
  c.backoff_seconds = 0.01;
  return c;
}

textgen::Vocabulary teacher_vocab() {
  std::vector<std::string> words = ScriptedTeacher().message_words();
  words.push_back("take");
  return textgen::Vocabulary::from_words(words);
}

TEST(HttpTeacher, ParsesMessagesInOrder) {
  MockServer server(reply(R"({"messages": ["Take tomato", "Take plate"]})"));
  const auto vocab = teacher_vocab();
  ::setenv("VERCO_TEST_TOKEN", "secret", 1);
  auto cfg = fast_config(server.url());
  cfg.token_env = "VERCO_TEST_TOKEN";
  HttpTeacher t(cfg, &vocab);
  const auto s = kitchen::create(MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  const auto messages = t.label(observe(s), summarize(s));
  ASSERT_EQ(messages.size(), 2u);
  EXPECT_EQ(messages[0].text, "take tomato");
  EXPECT_EQ(messages[1].text, "take plate");
  EXPECT_EQ(messages[1].sender, 1);
  EXPECT_EQ(t.stats().fallbacks, 0u);
  EXPECT_EQ(server.last_auth, "Bearer secret");
  const auto sent = nlohmann::json::parse(server.last_body);
  EXPECT_EQ(sent["n"], 2);
  EXPECT_NE(sent["prompt"].get<std::string>().find("agent"), std::string::npos);
}

TEST(HttpTeacher, ElevenWordsFallsBack) {
  MockServer server(reply(R"({"messages": ["a b c d e f g h i j k", "take plate"]})"));
  HttpTeacher t(fast_config(server.url()), nullptr);
  ScriptedTeacher scripted;
  const auto s = kitchen::create(MapId::kSingleRoom, kitchen::Dish::kTomatoSalad, 0);
  const auto obs = observe(s);
  EXPECT_EQ(t.label(obs, summarize(s)), scripted.label(obs, summarize(s)));
  EXPECT_EQ(t.stats().fallbacks, 1u);
  EXPECT_EQ(server.hits.load(), 1);
}

TEST(HttpTeacher, UnknownWordsBecomeUnk) {
  MockServer server(reply(R"({"messages": ["take the zucchini", "take plate"]})"));
  const auto vocab = teacher_vocab();
  HttpTeacher t(fast_config(server.url()), &vocab);
  const auto m = t.request("prompt", 2);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ((*m)[0].text, "take the <unk>");
  EXPECT_EQ(t.stats().unknown_words, 1u);
}

TEST(HttpTeacher, MalformedResponsesFallBack) {
  for (const std::string body : {"not json", R"({"msgs": []})", R"({"messages": ["one"]})", R"({"messages": [1, 2]})"}) {
    MockServer server(reply(body));
    HttpTeacher t(fast_config(server.url()), nullptr);
    EXPECT_FALSE(t.request("p", 2).has_value()) << body;
  }
}

TEST(HttpTeacher, RetriesServerErrorsThreeTimes) {
  MockServer server(reply("{}", 503));
  HttpTeacher t(fast_config(server.url()), nullptr);
  EXPECT_FALSE(t.request("p", 2).has_value());
  EXPECT_EQ(server.hits.load(), 3);
  EXPECT_EQ(t.stats().failed_attempts, 3u);
}

TEST(HttpTeacher, UnreachableEndpointUsesScripted) {
  // Nothing listens on port 1, so connections are refused.
  HttpTeacher t(fast_config("http://127.0.0.1:1/label"), nullptr);
  const auto s = kitchen::create(MapId::kSeparateRooms, kitchen::Dish::kTomatoSalad, 0);
  const auto messages = t.label(observe(s), summarize(s));
  EXPECT_EQ(messages.size(), 2u);
  EXPECT_EQ(t.stats().fallbacks, 1u);
  EXPECT_EQ(t.stats().failed_attempts, 3u);
}

TEST(HttpTeacher, RejectsBadConfig) {
  EXPECT_THROW(HttpTeacher(HttpTeacherConfig{}, nullptr), ConfigError);
  auto c = fast_config("http://x/y");
  c.attempts = 0;
  EXPECT_THROW(HttpTeacher(c, nullptr), ConfigError);
}

}  // namespace
}  // namespace verco::teacher
