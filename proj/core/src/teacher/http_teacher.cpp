#include "verco/teacher/http_teacher.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "verco/common/error.hpp"

namespace verco::teacher {

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("teacher.url must start with http://");
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

HttpTeacher::HttpTeacher(HttpTeacherConfig config, const textgen::Vocabulary* vocab)
    : config_(std::move(config)), vocab_(vocab) {
  split_url(config_.url);
  if (config_.attempts < 1) throw ConfigError("teacher.attempts must be at least 1");
  if (config_.timeout_seconds <= 0.0) throw ConfigError("teacher.timeout must be positive");
}

std::optional<std::vector<Message>> HttpTeacher::parse_response(const std::string& body, int n) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    spdlog::warn("teacher response is not JSON: {}", e.what());
    return std::nullopt;
  }
  if (!doc.is_object() || !doc.contains("messages") || !doc["messages"].is_array()) {
    spdlog::warn("teacher response lacks a \"messages\" array");
    return std::nullopt;
  }
  const auto& arr = doc["messages"];
  if (static_cast<int>(arr.size()) != n) {
    spdlog::warn("teacher returned {} messages, expected {}", arr.size(), n);
    return std::nullopt;
  }
  std::vector<Message> out;
  for (int i = 0; i < n; ++i) {
    if (!arr[static_cast<std::size_t>(i)].is_string()) {
      spdlog::warn("teacher message {} is not a string", i);
      return std::nullopt;
    }
    const std::string raw = lowercase(arr[static_cast<std::size_t>(i)].get<std::string>());
    std::string text;
    for (const auto& w : textgen::tokenize_words(raw)) {
      std::string word = w;
      if (vocab_ && !vocab_->contains(word)) {
        spdlog::warn("teacher word '{}' is not in the vocabulary, using {}", word,
                     vocab_->token(textgen::Vocabulary::kUnk));
        ++stats_.unknown_words;
        word = vocab_->token(textgen::Vocabulary::kUnk);
      }
      if (!text.empty()) text += ' ';
      text += word;
    }
    try {
      out.push_back(Message::make(i, text));
    } catch (const UsageError& e) {
      spdlog::warn("teacher message {} rejected: {}", i, e.what());
      return std::nullopt;
    }
  }
  return out;
}

std::optional<std::vector<Message>> HttpTeacher::request(const std::string& prompt, int n) {
  ++stats_.requests;
  const Endpoint ep = split_url(config_.url);
  httplib::Client client(ep.base);
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  if (!config_.token_env.empty()) {
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) client.set_bearer_token_auth(token);
  }
  const std::string body = nlohmann::json{{"prompt", prompt}, {"n", n}}.dump();

  double wait = config_.backoff_seconds;
  for (int attempt = 1; attempt <= config_.attempts; ++attempt) {
    auto res = client.Post(ep.path, body, "application/json");
    if (res && res->status == 200) return parse_response(res->body, n);
    ++stats_.failed_attempts;
    if (res) {
      spdlog::warn("teacher attempt {}/{} got HTTP {}", attempt, config_.attempts, res->status);
    } else {
      spdlog::warn("teacher attempt {}/{} failed: {}", attempt, config_.attempts, httplib::to_string(res.error()));
    }
    if (attempt < config_.attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      wait *= 2.0;
    }
  }
  return std::nullopt;
}

std::vector<Message> HttpTeacher::label(std::span<const prompt::TextObservation> observations,
                                        const TaskProgress& progress) {
  const int n = static_cast<int>(observations.size());
  if (auto messages = request(prompt::teacher_prompt(observations, n), n)) return *messages;
  ++stats_.fallbacks;
  spdlog::warn("teacher: using the scripted labels for this step");
  return fallback_.label(observations, progress);
}

}  // namespace verco::teacher
