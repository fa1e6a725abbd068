#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace wdm::plot {

struct Series {
  std::string name;
  std::vector<double> y;  // NaN entries leave a gap
};

/// Draws the series against `x` as a line chart into a binary PPM image,
/// with light grid lines and one colour per series (in order: blue, red,
/// green, orange, purple).
void write_line_chart(const std::filesystem::path& path, const std::vector<double>& x,
                      const std::vector<Series>& series, double y_lo = 0.0, double y_hi = 1.0, int width = 480,
                      int height = 320);

}  // namespace wdm::plot
