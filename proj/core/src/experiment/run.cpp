#include "verco/experiment/run.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "verco/common/error.hpp"

namespace verco::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Independent streams derived from one run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kRunnerStream = 1;
constexpr std::uint64_t kTrainerStream = 2;
constexpr std::uint64_t kSftStream = 3;
constexpr std::uint64_t kCollectStream = 4;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot read '{}'", p.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", tmp.string()));
    out << text;
  }
  fs::rename(tmp, p);
}

// The per-seed config written into a run directory.
RunConfig seed_config(const RunConfig& c, std::uint64_t seed) {
  RunConfig s = c;
  s.seeds = {seed};
  return s;
}

void check_same_config(const fs::path& path, const RunConfig& expected) {
  const RunConfig found = parse_config(read_file(path));
  auto a = found.to_map();
  auto b = expected.to_map();
  a.erase("run.output");
  b.erase("run.output");
  if (a == b) return;
  std::string keys;
  for (const auto& [k, v] : b) {
    auto it = a.find(k);
    if (it == a.end() || it->second != v) keys += (keys.empty() ? "" : ", ") + k;
  }
  throw ConfigError(fmt::format("run directory {} was created with a different config (differs in: {})",
                                path.parent_path().string(), keys));
}

class MetricsLog {
 public:
  MetricsLog(const fs::path& path, std::uintmax_t keep_bytes) : path_(path) {
    if (fs::exists(path) && fs::file_size(path) != keep_bytes) fs::resize_file(path, keep_bytes);
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw FormatError(fmt::format("cannot open '{}'", path.string()));
  }
  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }
  std::uintmax_t bytes() {
    out_.flush();
    return fs::file_size(path_);
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::shared_ptr<spdlog::logger> make_logger(const fs::path& dir, bool console) {
  std::vector<spdlog::sink_ptr> sinks;
  sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / "train.log").string(), false));
  if (console) sinks.push_back(std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
  auto log = std::make_shared<spdlog::logger>("verco", sinks.begin(), sinks.end());
  log->set_pattern("[%Y-%m-%d %H:%M:%S] %v");
  log->flush_on(spdlog::level::info);
  return log;
}

bool stage_before(const std::string& stage, const std::string& target) {
  static const std::vector<std::string> order{"new", "collected", "sft", "rl", "complete"};
  auto pos = [&](const std::string& s) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] == s) return i;
    }
    throw FormatError(fmt::format("progress.json has unknown stage '{}'", s));
  };
  return pos(stage) < pos(target);
}

// Shared state of one train invocation.
struct Session {
  RunConfig config;  // per-seed
  std::uint64_t seed;
  fs::path dir;
  Progress progress;
  std::shared_ptr<spdlog::logger> log;

  fs::path ckpt_dir() const { return dir / "checkpoints"; }
  fs::path metrics() const { return dir / "metrics.jsonl"; }
  fs::path sft_data() const { return dir / "sft_data.jsonl"; }

  void save_progress() { write_progress(dir, progress); }
};

Session open_session(const RunConfig& config, std::uint64_t seed, bool console) {
  config.validate();
  Session s{seed_config(config, seed), seed, run_directory(config, seed), {}, nullptr};
  fs::create_directories(s.ckpt_dir());
  const fs::path cfg = s.dir / "config.ini";
  if (fs::exists(cfg)) {
    check_same_config(cfg, s.config);
  } else {
    write_file_atomic(cfg, s.config.to_ini());
  }
  s.progress = read_progress(s.dir);
  s.log = make_logger(s.dir, console);
  return s;
}

void collect_phase(Session& s) {
  if (!stage_before(s.progress.stage, "collected")) return;
  s.log->info("collect-sft: {} episodes on {}", s.config.sft_episodes, kitchen::to_string(s.config.env.map));
  Agent agent(s.config, s.seed);
  sft::CollectConfig cc;
  cc.env = s.config.env;
  cc.episodes = s.config.sft_episodes;
  cc.seed = stream_seed(s.seed, kCollectStream);
  cc.greedy = s.config.sft_greedy_collect;
  const auto buffer = sft::collect(cc, agent.teacher(), agent.language());
  buffer.save(s.sft_data());
  MetricsLog metrics(s.metrics(), 0);
  metrics.write({{"kind", "sft_data"}, {"phase", "collect"}, {"examples", buffer.size()}});
  s.progress = {"collected", "", metrics.bytes()};
  s.save_progress();
  s.log->info("collect-sft: {} examples -> {}", buffer.size(), s.sft_data().string());
}

void sft_phase(Session& s) {
  if (!stage_before(s.progress.stage, "sft")) return;
  Agent agent(s.config, s.seed);
  const auto buffer = sft::SftBuffer::load(s.sft_data(), agent.vocab());
  sft::SftConfig sc = s.config.sft;
  sc.seed = stream_seed(s.seed, kSftStream);
  MetricsLog metrics(s.metrics(), s.progress.metrics_bytes);
  s.log->info("train-sft: {} examples, {} epochs", buffer.size(), sc.epochs);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = sft::train_sft(buffer, agent.model(), sc, [&](int step, double loss) {
    metrics.write({{"kind", "sft_step"}, {"phase", "sft"}, {"step", step}, {"loss", loss}});
    if (step % 100 == 0) s.log->info("train-sft: step {} loss {:.4f}", step, loss);
  });
  const double acc = sft::label_accuracy(buffer.examples(), agent.model(), agent.vocab());
  metrics.write({{"kind", "sft_summary"}, {"phase", "sft"}, {"steps", result.losses.size()},
                 {"final_loss", result.losses.back()}, {"label_accuracy", acc}});
  textgen::Checkpoint ckpt;
  agent.store(ckpt, "sft");
  const std::string name = fmt::format("sft-{}.ckpt", result.losses.size());
  ckpt.save(s.ckpt_dir() / name);
  s.progress = {"sft", name, metrics.bytes()};
  s.save_progress();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  s.log->info("train-sft: done, loss {:.4f}, label accuracy {:.3f}, {:.1f}s", result.losses.back(), acc, secs);
}

TrainResult rl_phase(Session& s, const TrainOptions& options) {
  TrainResult r{s.dir, {}, false, 0};
  if (s.progress.stage == "complete") {
    r.checkpoint = s.ckpt_dir() / s.progress.checkpoint;
    r.complete = true;
    r.env_steps = std::stoll(textgen::Checkpoint::load(r.checkpoint).attribute("rollout.env_steps"));
    return r;
  }
  std::unique_ptr<Agent> agent;
  std::optional<textgen::Checkpoint> resume;
  if (!s.progress.checkpoint.empty()) {
    resume = textgen::Checkpoint::load(s.ckpt_dir() / s.progress.checkpoint);
    agent = std::make_unique<Agent>(*resume);
  } else {
    agent = std::make_unique<Agent>(s.config, s.seed);
  }
  const rl::RlConfig& rc = s.config.rl;
  rl::PpoTrainer trainer(agent->policy(), rc, stream_seed(s.seed, kTrainerStream));
  rl::RolloutRunner runner(s.config.env, stream_seed(s.seed, kRunnerStream));
  if (resume && s.progress.stage == "rl") {
    trainer.import_state(resume->tensors, resume->attributes);
    runner.import_state(resume->attributes);
  }
  MetricsLog metrics(s.metrics(), s.progress.metrics_bytes);
  auto team = agent->team();
  s.log->info("rl: {} from {} env steps of {}", to_string(s.config.baseline), runner.env_steps(), rc.total_steps);

  auto save = [&](bool final) {
    textgen::Checkpoint ckpt;
    agent->store(ckpt, "rl");
    trainer.export_state(ckpt.tensors, ckpt.attributes);
    for (auto& [k, v] : runner.export_state()) ckpt.attributes[k] = v;
    const std::string name = fmt::format("rl-{}.ckpt", runner.env_steps());
    ckpt.save(s.ckpt_dir() / name);
    s.progress = {final ? "complete" : "rl", name, metrics.bytes()};
    s.save_progress();
    r.checkpoint = s.ckpt_dir() / name;
  };

  rl::RlBuffer buffer;
  std::vector<rl::EpisodeMetrics> finished;
  int updates_here = 0;
  double window_return = 0.0;
  int window_episodes = 0;
  auto t0 = std::chrono::steady_clock::now();
  while (runner.env_steps() < rc.total_steps) {
    const int steps = static_cast<int>(std::min<long long>(rc.rollout_steps, rc.total_steps - runner.env_steps()));
    finished.clear();
    runner.collect(team, buffer, steps, rc, finished);
    for (const auto& m : finished) {
      metrics.write({{"kind", "episode"}, {"phase", "rl"}, {"episode", m.episode}, {"env_steps", runner.env_steps()},
                     {"return", m.episode_return}, {"length", m.length}, {"entropy", m.entropy}});
      window_return += m.episode_return;
      ++window_episodes;
    }
    const auto st = trainer.update(buffer);
    metrics.write({{"kind", "update"}, {"phase", "rl"}, {"update", trainer.updates()},
                   {"env_steps", runner.env_steps()}, {"policy_loss", st.policy_loss}, {"critic_loss", st.critic_loss},
                   {"entropy", st.entropy}, {"approx_kl", st.approx_kl}, {"clip_fraction", st.clip_fraction}});
    ++updates_here;
    const bool done = runner.env_steps() >= rc.total_steps;
    bool saved = false;
    if (done || trainer.updates() % static_cast<std::uint64_t>(s.config.checkpoint_every) == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      s.log->info("rl: {} steps, update {}, mean return {:.3f} over {} episodes, entropy {:.3f}, {:.1f}s",
                  runner.env_steps(), trainer.updates(),
                  window_episodes ? window_return / window_episodes : 0.0, window_episodes, st.entropy, secs);
      window_return = 0.0;
      window_episodes = 0;
      t0 = std::chrono::steady_clock::now();
      save(done);
      saved = true;
    }
    if (options.stop_after_updates > 0 && updates_here >= options.stop_after_updates && !done) {
      if (!saved) save(false);
      r.env_steps = runner.env_steps();
      s.log->info("rl: stopping early after {} updates", updates_here);
      return r;
    }
  }
  if (r.checkpoint.empty()) save(true);
  r.complete = true;
  r.env_steps = runner.env_steps();
  s.log->info("rl: finished at {} env steps", runner.env_steps());
  return r;
}

}  // namespace

fs::path run_directory(const RunConfig& config, std::uint64_t seed) {
  return config.output / config.name / fmt::format("seed-{}", seed);
}

Progress read_progress(const fs::path& run_dir) {
  const fs::path p = run_dir / "progress.json";
  if (!fs::exists(p)) return {};
  try {
    const json j = json::parse(read_file(p));
    return {j.at("stage").get<std::string>(), j.at("checkpoint").get<std::string>(),
            j.at("metrics_bytes").get<std::uintmax_t>()};
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed '{}': {}", p.string(), e.what()));
  }
}

void write_progress(const fs::path& run_dir, const Progress& p) {
  write_file_atomic(run_dir / "progress.json",
                    json{{"stage", p.stage}, {"checkpoint", p.checkpoint}, {"metrics_bytes", p.metrics_bytes}}.dump(2) +
                        "\n");
}

// ---------------------------------------------------------------------------

Agent::Agent(const RunConfig& config, std::uint64_t seed)
    : config_(seed_config(config, seed)), seed_(seed), vocab_(sft::default_vocabulary(teacher::ScriptedTeacher{})) {
  if (symbolic()) {
    rl::SymbolicConfig sc = config_.symbolic;
    sc.seed = model_seed(config_, seed);
    symbolic_ = std::make_unique<rl::SymbolicPolicy>(sc);
  } else {
    textgen::ModelConfig mc = config_.model;
    mc.vocab_size = vocab_.size();
    mc.seed = model_seed(config_, seed);
    model_ = std::make_unique<textgen::LanguageModel>(mc);
  }
  build_runtime();
}

Agent::Agent(const textgen::Checkpoint& ckpt)
    : config_(parse_config(ckpt.attribute("run.config"))),
      seed_(std::stoull(ckpt.attribute("run.seed"))),
      vocab_(symbolic() ? sft::default_vocabulary(teacher::ScriptedTeacher{}) : textgen::restore_vocabulary(ckpt)) {
  if (symbolic()) {
    rl::SymbolicConfig sc = config_.symbolic;
    sc.seed = model_seed(config_, seed_);
    symbolic_ = std::make_unique<rl::SymbolicPolicy>(sc);
    std::map<std::string, textgen::Tensor> weights;
    for (const auto& [name, p] : symbolic_->parameters()) {
      auto it = ckpt.tensors.find(name);
      if (it == ckpt.tensors.end()) throw FormatError(fmt::format("checkpoint lacks tensor '{}'", name));
      weights[name] = it->second;
    }
    symbolic_->load_parameters(weights);
  } else {
    model_ = std::make_unique<textgen::LanguageModel>(textgen::restore_model(ckpt));
  }
  build_runtime();
}

void Agent::build_runtime() {
  if (model_) {
    rl::PolicyOptions po;
    po.token_norm = config_.rl.token_norm;
    language_ = std::make_unique<rl::LanguagePolicy>(*model_, vocab_, po);
  }
  if (config_.teacher == TeacherMode::kHttp) {
    teacher_ = std::make_unique<teacher::HttpTeacher>(config_.http, &vocab_);
  } else {
    teacher_ = std::make_unique<teacher::ScriptedTeacherAdapter>();
  }
}

rl::ActorCritic& Agent::policy() {
  if (symbolic_) return *symbolic_;
  return *language_;
}

rl::LanguagePolicy& Agent::language() {
  if (!language_) throw UsageError("symbolic agents have no language policy");
  return *language_;
}

textgen::LanguageModel& Agent::model() {
  if (!model_) throw UsageError("symbolic agents have no language model");
  return *model_;
}

rl::SymbolicPolicy& Agent::symbolic_policy() {
  if (!symbolic_) throw UsageError("language agents have no symbolic policy");
  return *symbolic_;
}

rl::MessageSource Agent::default_source() const {
  return config_.baseline == Baseline::kVerco ? rl::MessageSource::kPolicy : rl::MessageSource::kNone;
}

rl::TeamController Agent::team(std::optional<rl::MessageSource> source) {
  if (symbolic_) {
    if (source && *source != rl::MessageSource::kNone) throw UsageError("symbolic agents cannot exchange messages");
    return rl::TeamController(*symbolic_);
  }
  return rl::TeamController(*language_, source.value_or(default_source()), teacher_.get());
}

void Agent::store(textgen::Checkpoint& out, const std::string& phase) const {
  if (symbolic_) {
    for (const auto& [name, p] : symbolic_->parameters()) out.tensors[name] = p.value();
  } else {
    textgen::store_model(*model_, vocab_, out);
  }
  out.attributes["run.config"] = config_.to_ini();
  out.attributes["run.seed"] = std::to_string(seed_);
  out.attributes["run.phase"] = phase;
  out.attributes["run.baseline"] = std::string(to_string(config_.baseline));
}

// ---------------------------------------------------------------------------

TrainResult train_seed(const RunConfig& config, std::uint64_t seed, const TrainOptions& options) {
  Session s = open_session(config, seed, options.console);
  if (s.config.baseline == Baseline::kVerco) {
    collect_phase(s);
    sft_phase(s);
  } else if (s.progress.stage == "new") {
    s.log->info("{}: no sft phases", to_string(s.config.baseline));
  }
  return rl_phase(s, options);
}

std::vector<TrainResult> cmd_train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  std::vector<TrainResult> out;
  for (auto seed : config.seeds) out.push_back(train_seed(config, seed, options));
  return out;
}

fs::path cmd_collect_sft(const RunConfig& config, std::uint64_t seed) {
  if (config.baseline != Baseline::kVerco) throw ConfigError("collect-sft needs run.baseline = verco");
  Session s = open_session(config, seed, true);
  collect_phase(s);
  return s.sft_data();
}

fs::path cmd_train_sft(const RunConfig& config, std::uint64_t seed) {
  if (config.baseline != Baseline::kVerco) throw ConfigError("train-sft needs run.baseline = verco");
  Session s = open_session(config, seed, true);
  collect_phase(s);
  sft_phase(s);
  return latest_checkpoint(s.dir);
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const Progress p = read_progress(run_dir);
  if (p.checkpoint.empty()) throw FormatError(fmt::format("run directory '{}' has no checkpoint yet", run_dir.string()));
  return run_dir / "checkpoints" / p.checkpoint;
}

fs::path resolve_checkpoint(const fs::path& path) {
  if (fs::is_directory(path)) return latest_checkpoint(path);
  if (!fs::exists(path)) throw FormatError(fmt::format("checkpoint '{}' does not exist", path.string()));
  return path;
}

}  // namespace verco::experiment
