#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "verco/rl/ppo.hpp"
#include "verco/rl/rollout.hpp"
#include "verco/rl/symbolic.hpp"
#include "verco/sft/sft.hpp"
#include "verco/teacher/http_teacher.hpp"
#include "verco/textgen/model.hpp"

namespace verco::experiment {

enum class Baseline : std::uint8_t { kVerco, kNoComm, kSymbolic };
std::string_view to_string(Baseline b);
Baseline parse_baseline(std::string_view name);

enum class TeacherMode : std::uint8_t { kScripted, kHttp };
std::string_view to_string(TeacherMode m);
TeacherMode parse_teacher_mode(std::string_view name);

// Everything a run needs. Keys are "section.key"; see configs/README.md.
struct RunConfig {
  std::string name = "run";
  std::filesystem::path output = "runs";
  rl::EnvSpec env;
  std::vector<std::uint64_t> seeds{0};
  Baseline baseline = Baseline::kVerco;

  TeacherMode teacher = TeacherMode::kScripted;
  teacher::HttpTeacherConfig http;

  textgen::ModelConfig model;  // vocab_size comes from the vocabulary
  rl::SymbolicConfig symbolic;

  int sft_episodes = 20;
  bool sft_greedy_collect = false;
  sft::SftConfig sft;

  rl::RlConfig rl;
  int checkpoint_every = 10;  // updates between rl checkpoints

  // Throws ConfigError naming the offending key.
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  // Unknown keys are errors; missing keys keep their defaults.
  static RunConfig from_map(const std::map<std::string, std::string>& values);
  std::string to_ini() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Parses INI text, then applies "section.key=value" overrides in order.
RunConfig parse_config(std::string_view ini, std::span<const std::string> overrides = {});
RunConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {});

// Model initialization seed for one run seed.
std::uint64_t model_seed(const RunConfig& config, std::uint64_t seed);

}  // namespace verco::experiment
