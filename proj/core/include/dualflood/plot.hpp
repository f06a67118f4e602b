#pragma once

#include <string>
#include <vector>

namespace dualflood::plot {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;  // row-major, 3 bytes per pixel

  Image(int w, int h, unsigned char fill = 255)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t at = 3 * (static_cast<std::size_t>(y) * width + x);
    rgb[at] = r;
    rgb[at + 1] = g;
    rgb[at + 2] = b;
  }
};

void write_png(const std::string& path, const Image& img);

/// Single-series line chart with axes and numeric tick labels.
Image line_chart(const std::vector<double>& y, int width = 640, int height = 400);

/// Colored point cloud with a colorbar; values map blue (low) to red (high).
Image scatter_map(const std::vector<double>& x, const std::vector<double>& y,
                  const std::vector<double>& value, int width = 560, int height = 480);

}  // namespace dualflood::plot
