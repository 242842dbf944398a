#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "softmask/reideval/eval.hpp"

namespace softmask::cli {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

/// Line chart with a legend, written as PNG. Non-finite points are skipped.
void plot_lines(const std::vector<Series>& series, const PlotLabels& labels, const std::filesystem::path& path);

/// Two-colour scatter of embedded points with both centroids marked.
void plot_scatter(const std::vector<reideval::ScatterPoint>& points, const std::array<double, 2>& centroid_a,
                  const std::array<double, 2>& centroid_b, const std::array<std::string, 2>& names,
                  const PlotLabels& labels, const std::filesystem::path& path);

/// Trailing moving average over `window` finite values.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

}  // namespace softmask::cli
