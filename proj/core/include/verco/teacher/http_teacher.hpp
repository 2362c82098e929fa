#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "verco/teacher/teacher.hpp"
#include "verco/textgen/vocabulary.hpp"

namespace verco::teacher {

struct HttpTeacherConfig {
  std::string url;  // e.g. http://127.0.0.1:8080/label
  double timeout_seconds = 30.0;
  int attempts = 3;
  double backoff_seconds = 0.5;  // doubled after every failed attempt
  // Name of the environment variable holding a bearer token, if any.
  std::string token_env = "VERCO_TEACHER_TOKEN";
  friend bool operator==(const HttpTeacherConfig&, const HttpTeacherConfig&) = default;
};

struct HttpTeacherStats {
  std::uint64_t requests = 0;
  std::uint64_t failed_attempts = 0;
  std::uint64_t fallbacks = 0;
  std::uint64_t unknown_words = 0;
};

// Remote labeller speaking {"prompt", "n"} -> {"messages": [...]}. Any
// failure (network, malformed body, bound violation) falls back to the
// scripted teacher for that call.
class HttpTeacher : public Teacher {
 public:
  // vocab may be null, in which case words are not checked for coverage.
  HttpTeacher(HttpTeacherConfig config, const textgen::Vocabulary* vocab);

  std::vector<Message> label(std::span<const prompt::TextObservation> observations,
                             const TaskProgress& progress) override;

  // One call without fallback: nullopt after all attempts failed or the
  // response was rejected.
  std::optional<std::vector<Message>> request(const std::string& prompt, int n);

  const HttpTeacherStats& stats() const { return stats_; }

 private:
  std::optional<std::vector<Message>> parse_response(const std::string& body, int n);

  HttpTeacherConfig config_;
  const textgen::Vocabulary* vocab_;
  ScriptedTeacher fallback_;
  HttpTeacherStats stats_;
};

}  // namespace verco::teacher
