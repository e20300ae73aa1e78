#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace owdet {

/// Minimal line-chart emitter; enough for trend and sweep figures.
struct PlotSeries {
    std::string name;
    std::vector<double> x, y;
};

void write_svg_chart(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

} // namespace owdet
