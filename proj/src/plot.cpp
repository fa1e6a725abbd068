#include "wdm/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "wdm/errors.hpp"

namespace wdm::plot {
namespace {

using Rgb = std::array<unsigned char, 3>;

constexpr std::array<Rgb, 5> kPalette = {{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189}}};

struct Canvas {
  int w, h;
  std::vector<Rgb> px;

  Canvas(int width, int height) : w(width), h(height), px(std::size_t(width) * height, Rgb{255, 255, 255}) {}

  void set(int x, int y, Rgb c) {
    if (x >= 0 && x < w && y >= 0 && y < h) px[std::size_t(y) * w + x] = c;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c, int thickness = 1) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      for (int oy = 0; oy < thickness; ++oy)
        for (int ox = 0; ox < thickness; ++ox) set(x0 + ox, y0 + oy, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) { err += dy; x0 += sx; }
      if (e2 <= dx) { err += dx; y0 += sy; }
    }
  }
};

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::vector<double>& x,
                      const std::vector<Series>& series, double y_lo, double y_hi, int width, int height) {
  if (x.size() < 2) throw ArgumentError("write_line_chart: need at least two x values");
  if (!(y_hi > y_lo)) throw ArgumentError("write_line_chart: empty y range");
  Canvas cv(width, height);
  const int left = 40, right = 20, top = 20, bottom = 30;
  const double x_lo = *std::min_element(x.begin(), x.end()), x_hi = *std::max_element(x.begin(), x.end());
  auto px = [&](double v) { return left + int(std::lround((v - x_lo) / (x_hi - x_lo) * (width - left - right))); };
  auto py = [&](double v) {
    return height - bottom - int(std::lround((v - y_lo) / (y_hi - y_lo) * (height - top - bottom)));
  };

  const Rgb grid{225, 225, 225}, axis{60, 60, 60};
  for (int k = 0; k <= 4; ++k) {
    const int y = py(y_lo + (y_hi - y_lo) * k / 4.0);
    cv.line(left, y, width - right, y, grid);
  }
  for (double v : x) cv.line(px(v), top, px(v), height - bottom, grid);
  cv.line(left, height - bottom, width - right, height - bottom, axis);
  cv.line(left, top, left, height - bottom, axis);

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb c = kPalette[s % kPalette.size()];
    const auto& y = series[s].y;
    for (std::size_t i = 0; i + 1 < std::min(x.size(), y.size()); ++i) {
      if (!std::isfinite(y[i]) || !std::isfinite(y[i + 1])) continue;
      cv.line(px(x[i]), py(std::clamp(y[i], y_lo, y_hi)), px(x[i + 1]), py(std::clamp(y[i + 1], y_lo, y_hi)), c, 2);
    }
    // Legend swatch along the top edge.
    const int lx = left + 10 + int(s) * 30;
    cv.line(lx, 8, lx + 20, 8, c, 4);
  }

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write chart: " + path.string());
  os << "P6\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(cv.px.data()), std::streamsize(cv.px.size() * 3));
}

}  // namespace wdm::plot
