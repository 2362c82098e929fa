#include "verco/experiment/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "verco/common/error.hpp"

namespace verco::experiment {

std::string_view to_string(Baseline b) {
  switch (b) {
    case Baseline::kVerco: return "verco";
    case Baseline::kNoComm: return "no_comm";
    case Baseline::kSymbolic: return "symbolic_ppo";
  }
  return "verco";
}

Baseline parse_baseline(std::string_view name) {
  if (name == "verco") return Baseline::kVerco;
  if (name == "no_comm") return Baseline::kNoComm;
  if (name == "symbolic_ppo") return Baseline::kSymbolic;
  throw ConfigError(fmt::format("run.baseline must be verco, no_comm or symbolic_ppo, got '{}'", name));
}

std::string_view to_string(TeacherMode m) { return m == TeacherMode::kHttp ? "http" : "scripted"; }

TeacherMode parse_teacher_mode(std::string_view name) {
  if (name == "scripted") return TeacherMode::kScripted;
  if (name == "http") return TeacherMode::kHttp;
  throw ConfigError(fmt::format("teacher.mode must be scripted or http, got '{}'", name));
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) throw ConfigError(fmt::format("{} must be a number, got '{}'", key, text));
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("{} must be true or false, got '{}'", key, text));
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

using Getter = std::function<std::string(const RunConfig&)>;
using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
struct Field {
  std::string key;
  Getter get;
  Setter set;
};

#define VERCO_INT(KEY, EXPR)                                                                      \
  Field {                                                                                         \
    KEY, [](const RunConfig& c) { return std::to_string(c.EXPR); },                               \
        [](RunConfig& c, const std::string& k, const std::string& v) {                            \
          c.EXPR = parse_number<std::remove_cvref_t<decltype(c.EXPR)>>(k, v);                     \
        }                                                                                         \
  }
#define VERCO_DOUBLE(KEY, EXPR)                                                                                 \
  Field {                                                                                                       \
    KEY, [](const RunConfig& c) { return fmt_double(c.EXPR); },                                                 \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.EXPR = parse_number<double>(k, v); } \
  }
#define VERCO_STRING(KEY, EXPR) \
  Field { KEY, [](const RunConfig& c) { return std::string(c.EXPR); }, [](RunConfig& c, const std::string&, const std::string& v) { c.EXPR = v; } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t{
        VERCO_STRING("run.name", name),
        {"run.output", [](const RunConfig& c) { return c.output.string(); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.output = v; }},
        {"run.map", [](const RunConfig& c) { return std::string(kitchen::to_string(c.env.map)); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.env.map = kitchen::parse_map_id(v); }},
        {"run.task", [](const RunConfig& c) { return std::string(kitchen::to_string(c.env.dish)); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.env.dish = kitchen::parse_dish(v); }},
        VERCO_INT("run.horizon", env.horizon),
        {"run.seeds",
         [](const RunConfig& c) {
           std::string s;
           for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
           return s;
         },
         [](RunConfig& c, const std::string& k, const std::string& v) {
           c.seeds.clear();
           std::stringstream ss(v);
           std::string item;
           while (std::getline(ss, item, ',')) {
             const auto b = item.find_first_not_of(' ');
             const auto e = item.find_last_not_of(' ');
             if (b == std::string::npos) throw ConfigError(k + " has an empty entry");
             c.seeds.push_back(parse_number<std::uint64_t>(k, item.substr(b, e - b + 1)));
           }
         }},
        {"run.baseline", [](const RunConfig& c) { return std::string(to_string(c.baseline)); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.baseline = parse_baseline(v); }},
        VERCO_INT("run.checkpoint_every", checkpoint_every),

        {"teacher.mode", [](const RunConfig& c) { return std::string(to_string(c.teacher)); },
         [](RunConfig& c, const std::string&, const std::string& v) { c.teacher = parse_teacher_mode(v); }},
        VERCO_STRING("teacher.url", http.url),
        VERCO_DOUBLE("teacher.timeout", http.timeout_seconds),
        VERCO_INT("teacher.attempts", http.attempts),
        VERCO_DOUBLE("teacher.backoff", http.backoff_seconds),
        VERCO_STRING("teacher.token_env", http.token_env),

        VERCO_INT("model.d_model", model.d_model),
        VERCO_INT("model.n_layers", model.n_layers),
        VERCO_INT("model.n_heads", model.n_heads),
        VERCO_INT("model.context_length", model.context_length),
        VERCO_INT("model.d_ff", model.d_ff),
        VERCO_INT("model.lora_rank", model.lora_rank),
        VERCO_DOUBLE("model.lora_alpha", model.lora_alpha),
        {"model.lora_targets", [](const RunConfig& c) { return textgen::format_lora_targets(c.model.lora_targets); },
         [](RunConfig& c, const std::string&, const std::string& v) {
           c.model.lora_targets = textgen::parse_lora_targets(v);
         }},
        VERCO_INT("model.value_hidden", model.value_hidden),
        VERCO_DOUBLE("model.logit_scale", model.logit_scale),
        VERCO_INT("model.seed", model.seed),

        VERCO_INT("symbolic.hidden", symbolic.hidden),

        VERCO_INT("sft.episodes", sft_episodes),
        {"sft.greedy_collect", [](const RunConfig& c) { return std::string(c.sft_greedy_collect ? "true" : "false"); },
         [](RunConfig& c, const std::string& k, const std::string& v) { c.sft_greedy_collect = parse_bool(k, v); }},
        VERCO_INT("sft.epochs", sft.epochs),
        VERCO_INT("sft.batch_size", sft.batch_size),
        VERCO_DOUBLE("sft.lr", sft.lr),
        VERCO_INT("sft.max_steps", sft.max_steps),
    };
    return t;
  }();
  return table;
}

#undef VERCO_INT
#undef VERCO_DOUBLE
#undef VERCO_STRING

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

void apply(RunConfig& c, std::map<std::string, std::string>& rl_keys, const std::string& key,
           const std::string& value) {
  if (key.rfind("rl.", 0) == 0) {
    rl_keys[key] = value;
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw ConfigError(fmt::format("unknown config key '{}'", key));
  f->set(c, key, value);
}

}  // namespace

void RunConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("run.name must be a plain, non-empty name");
  if (output.empty()) throw ConfigError("run.output must not be empty");
  if (env.horizon < 1) throw ConfigError("run.horizon must be at least 1");
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (checkpoint_every < 1) throw ConfigError("run.checkpoint_every must be at least 1");
  if (teacher == TeacherMode::kHttp && http.url.empty()) throw ConfigError("teacher.url is required for http mode");
  if (http.attempts < 1) throw ConfigError("teacher.attempts must be at least 1");
  if (!(http.timeout_seconds > 0.0)) throw ConfigError("teacher.timeout must be positive");
  if (http.backoff_seconds < 0.0) throw ConfigError("teacher.backoff must be non-negative");
  if (symbolic.hidden < 1) throw ConfigError("symbolic.hidden must be at least 1");
  if (sft_episodes < 1) throw ConfigError("sft.episodes must be at least 1");
  sft.validate();
  rl.validate();
  textgen::ModelConfig m = model;
  m.vocab_size = sft::default_vocabulary(teacher::ScriptedTeacher{}).size();
  m.validate();
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(*this);
  for (auto& [k, v] : rl.to_attributes()) out[k] = v;
  return out;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& values) {
  RunConfig c;
  std::map<std::string, std::string> rl_keys;
  for (const auto& [k, v] : values) apply(c, rl_keys, k, v);
  c.rl = rl::RlConfig::from_attributes(rl_keys);
  return c;
}

std::string RunConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& [key, value] : to_map()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + fmt::format("[{}]\n", s);
      section = s;
    }
    out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
  }
  return out;
}

RunConfig parse_config(std::string_view ini, std::span<const std::string> overrides) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(ini)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("config key '{}' must sit inside a [section]", section));
    }
    for (const auto& [key, leaf] : body) values[section + "." + key] = leaf.data();
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(fmt::format("override '{}' is not section.key=value", o));
    values[o.substr(0, eq)] = o.substr(eq + 1);
  }
  RunConfig c = RunConfig::from_map(values);
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::uint64_t model_seed(const RunConfig& config, std::uint64_t seed) {
  return config.model.seed * 1000003ULL + seed * 0x9E3779B97F4A7C15ULL + 17;
}

}  // namespace verco::experiment
