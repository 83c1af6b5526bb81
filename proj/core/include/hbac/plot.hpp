#pragma once

#include <array>
#include <string>
#include <vector>

namespace hbac::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Static SVG line chart with axes and a legend.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

// Square heatmap with one <rect class="cell"> per entry and counts printed
// inside; rows are truth, columns prediction.
std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& labels,
                        const std::string& title);

}  // namespace hbac::plot
