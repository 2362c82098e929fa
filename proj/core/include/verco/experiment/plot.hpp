#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace verco::experiment {

// Median and inter-quartile band of one metric across seeds.
struct CurveSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> median;
  std::vector<double> q25;
  std::vector<double> q75;
};

std::string render_svg(std::string_view title, std::string_view x_label, std::string_view y_label,
                       std::span<const CurveSeries> series);

// Keys every episode record in metrics.jsonl carries.
const std::vector<std::string>& episode_schema();

// Inputs are seed directories or directories holding seed-* subdirectories.
// Runs are grouped by run name. Writes return.svg, length.svg and
// entropy.svg into out_dir and returns their paths.
std::vector<std::filesystem::path> cmd_plot(std::span<const std::filesystem::path> runs,
                                            const std::filesystem::path& out_dir, int bins = 25);

}  // namespace verco::experiment
