#include "verco/experiment/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "verco/common/error.hpp"
#include "verco/experiment/config.hpp"
#include "verco/experiment/evaluate.hpp"

namespace verco::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round step for about n ticks over the span.
double nice_step(double span, int n) {
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10 * mag;
}

std::string tick_label(double v) {
  if (std::abs(v) >= 1000) return fmt::format("{:.0f}k", v / 1000);
  return fmt::format("{:.3g}", std::abs(v) < 1e-12 ? 0.0 : v);
}

struct RunData {
  fs::path dir;
  std::string label;
  std::vector<json> episodes;
};

std::vector<fs::path> expand(std::span<const fs::path> inputs) {
  std::vector<fs::path> out;
  for (const auto& p : inputs) {
    if (fs::exists(p / "metrics.jsonl") || fs::exists(p / "config.ini")) {
      out.push_back(p);
      continue;
    }
    if (!fs::is_directory(p)) throw FormatError(fmt::format("'{}' is not a run directory", p.string()));
    std::vector<fs::path> seeds;
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_directory() && e.path().filename().string().starts_with("seed-")) seeds.push_back(e.path());
    }
    if (seeds.empty()) throw FormatError(fmt::format("'{}' holds no seed-* run directories", p.string()));
    std::sort(seeds.begin(), seeds.end());
    out.insert(out.end(), seeds.begin(), seeds.end());
  }
  return out;
}

RunData read_run(const fs::path& dir) {
  RunData r{dir, dir.parent_path().filename().string(), {}};
  if (fs::exists(dir / "config.ini")) r.label = load_config(dir / "config.ini").name;
  std::ifstream in(dir / "metrics.jsonl");
  if (!in) throw FormatError(fmt::format("'{}' has no metrics.jsonl", dir.string()));
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("{}/metrics.jsonl line {}: {}", dir.string(), n, e.what()));
    }
    if (j.value("kind", "") == "episode") r.episodes.push_back(std::move(j));
  }
  return r;
}

std::set<std::string> keys_of(const RunData& r) {
  std::set<std::string> keys;
  for (const auto& e : r.episodes) {
    for (auto it = e.begin(); it != e.end(); ++it) keys.insert(it.key());
  }
  return keys;
}

}  // namespace

const std::vector<std::string>& episode_schema() {
  static const std::vector<std::string> keys{"entropy", "env_steps", "episode", "kind", "length", "phase", "return"};
  return keys;
}

std::string render_svg(std::string_view title, std::string_view x_label, std::string_view y_label,
                       std::span<const CurveSeries> series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.q25[i]);
      y1 = std::max(y1, s.q75[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x1 = x0 + 1;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  x0 = std::min(x0, 0.0);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      kWidth, kHeight);
  svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", kLeft + pw / 2,
                     escape(title));
  const double xs = nice_step(x1 - x0, 6), ys = nice_step(y1 - y0, 5);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9; t += xs) {
    svg += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1}\" x2=\"{0:.1f}\" y2=\"{2}\" stroke=\"#e5e5e5\"/>\n", px(t), kTop,
                       kTop + ph);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px(t), kTop + ph + 16,
                       tick_label(t));
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9; t += ys) {
    svg += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#e5e5e5\"/>\n", kLeft, py(t),
                       kLeft + pw, py(t));
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6, py(t) + 4,
                       tick_label(t));
  }
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", kLeft,
                     kTop, pw, ph);
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2, kHeight - 14,
                     escape(x_label));
  svg += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                     kTop + ph / 2, escape(y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % std::size(kColors)];
    if (!s.x.empty()) {
      std::string band, line;
      for (std::size_t i = 0; i < s.x.size(); ++i) band += fmt::format("{:.1f},{:.1f} ", px(s.x[i]), py(s.q75[i]));
      for (std::size_t i = s.x.size(); i-- > 0;) band += fmt::format("{:.1f},{:.1f} ", px(s.x[i]), py(s.q25[i]));
      for (std::size_t i = 0; i < s.x.size(); ++i) line += fmt::format("{:.1f},{:.1f} ", px(s.x[i]), py(s.median[i]));
      svg += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.2\" stroke=\"none\"/>\n", band, color);
      svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", line, color);
    }
    const double ly = kTop + 14 + 20 * static_cast<double>(k);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"3\"/>\n",
                       kLeft + pw + 12, ly, kLeft + pw + 32, color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kLeft + pw + 38, ly + 4, escape(s.label));
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<fs::path> cmd_plot(std::span<const fs::path> inputs, const fs::path& out_dir, int bins) {
  if (inputs.empty()) throw UsageError("plot needs at least one run directory");
  if (bins < 1) throw UsageError("plot needs at least one bin");
  std::vector<RunData> runs;
  for (const auto& dir : expand(inputs)) runs.push_back(read_run(dir));

  const std::set<std::string> expected(episode_schema().begin(), episode_schema().end());
  std::vector<std::string> offenders;
  for (const auto& r : runs) {
    if (r.episodes.empty()) {
      offenders.push_back(fmt::format("{} (no episode records)", r.dir.string()));
      continue;
    }
    const auto keys = keys_of(r);
    if (keys == expected) continue;
    std::vector<std::string> diff;
    for (const auto& k : keys) {
      if (!expected.count(k)) diff.push_back("+" + k);
    }
    for (const auto& k : expected) {
      if (!keys.count(k)) diff.push_back("-" + k);
    }
    offenders.push_back(fmt::format("{} ({})", r.dir.string(), fmt::join(diff, " ")));
  }
  if (!offenders.empty()) {
    throw FormatError(fmt::format("metric schemas differ; offending runs: {}", fmt::join(offenders, "; ")));
  }

  double x_max = 0.0;
  for (const auto& r : runs) {
    for (const auto& e : r.episodes) x_max = std::max(x_max, e.at("env_steps").get<double>());
  }
  const double width = std::max(x_max, 1.0) / bins;

  std::vector<std::string> labels;
  std::map<std::string, std::vector<const RunData*>> groups;
  for (const auto& r : runs) {
    if (!groups.count(r.label)) labels.push_back(r.label);
    groups[r.label].push_back(&r);
  }

  struct Metric {
    std::string key, file, title, y_label;
  };
  const std::vector<Metric> metrics{
      {"return", "return.svg", "Episode return (higher is better)", "return"},
      {"length", "length.svg", "Episode length (lower is better)", "steps"},
      {"entropy", "entropy.svg", "Policy entropy", "nats"},
  };
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (const auto& m : metrics) {
    std::vector<CurveSeries> series;
    for (const auto& label : labels) {
      CurveSeries s;
      s.label = fmt::format("{} (n={})", label, groups[label].size());
      std::vector<std::vector<double>> per_bin(static_cast<std::size_t>(bins));
      for (const RunData* r : groups[label]) {
        std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
        std::vector<int> count(static_cast<std::size_t>(bins), 0);
        for (const auto& e : r->episodes) {
          const double x = e.at("env_steps").get<double>();
          const auto b = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, x - 1) / width),
                                               static_cast<std::size_t>(bins - 1));
          sum[b] += e.at(m.key).get<double>();
          ++count[b];
        }
        for (std::size_t b = 0; b < sum.size(); ++b) {
          if (count[b] > 0) per_bin[b].push_back(sum[b] / count[b]);
        }
      }
      for (std::size_t b = 0; b < per_bin.size(); ++b) {
        if (per_bin[b].empty()) continue;
        const auto q = summarize(per_bin[b]);
        s.x.push_back((static_cast<double>(b) + 1.0) * width);
        s.median.push_back(q.median);
        s.q25.push_back(q.q25);
        s.q75.push_back(q.q75);
      }
      series.push_back(std::move(s));
    }
    const fs::path path = out_dir / m.file;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot write '{}'", path.string()));
    out << render_svg(m.title, "environment steps", m.y_label, series);
    written.push_back(path);
  }
  return written;
}

}  // namespace verco::experiment
