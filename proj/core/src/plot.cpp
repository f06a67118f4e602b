#include "dualflood/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "dualflood/errors.hpp"

namespace dualflood::plot {

namespace {

// 5x7 glyphs for tick labels: digits, minus, dot, 'e', '+'
struct Glyph {
  char ch;
  const char* rows[7];
};

const Glyph kFont[] = {
    {'0', {"01110", "10001", "10011", "10101", "11001", "10001", "01110"}},
    {'1', {"00100", "01100", "00100", "00100", "00100", "00100", "01110"}},
    {'2', {"01110", "10001", "00001", "00010", "00100", "01000", "11111"}},
    {'3', {"11110", "00001", "00001", "01110", "00001", "00001", "11110"}},
    {'4', {"00010", "00110", "01010", "10010", "11111", "00010", "00010"}},
    {'5', {"11111", "10000", "11110", "00001", "00001", "10001", "01110"}},
    {'6', {"00110", "01000", "10000", "11110", "10001", "10001", "01110"}},
    {'7', {"11111", "00001", "00010", "00100", "01000", "01000", "01000"}},
    {'8', {"01110", "10001", "10001", "01110", "10001", "10001", "01110"}},
    {'9', {"01110", "10001", "10001", "01111", "00001", "00010", "01100"}},
    {'-', {"00000", "00000", "00000", "11111", "00000", "00000", "00000"}},
    {'.', {"00000", "00000", "00000", "00000", "00000", "01100", "01100"}},
    {'e', {"00000", "00000", "01110", "10001", "11111", "10000", "01110"}},
    {'+', {"00000", "00100", "00100", "11111", "00100", "00100", "00000"}},
};

void draw_char(Image& img, int x, int y, char ch) {
  for (const auto& glyph : kFont) {
    if (glyph.ch != ch) continue;
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c)
        if (glyph.rows[r][c] == '1') img.set(x + c, y + r, 40, 40, 40);
    return;
  }
}

void draw_text(Image& img, int x, int y, const std::string& s) {
  for (std::size_t i = 0; i < s.size(); ++i)
    draw_char(img, x + 6 * static_cast<int>(i), y, s[i]);
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void draw_line(Image& img, int x0, int y0, int x1, int y1, unsigned char r, unsigned char g,
               unsigned char b) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    img.set(x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

// blue -> cyan -> yellow -> red
void colormap(double f, unsigned char* r, unsigned char* g, unsigned char* b) {
  f = std::clamp(f, 0.0, 1.0);
  const double rr = std::clamp(1.5 - std::abs(4.0 * f - 3.0), 0.0, 1.0);
  const double gg = std::clamp(1.5 - std::abs(4.0 * f - 2.0), 0.0, 1.0);
  const double bb = std::clamp(1.5 - std::abs(4.0 * f - 1.0), 0.0, 1.0);
  *r = static_cast<unsigned char>(255 * rr);
  *g = static_cast<unsigned char>(255 * gg);
  *b = static_cast<unsigned char>(255 * bb);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw DataError("libpng failure while writing " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.rgb.data() + 3 * static_cast<std::size_t>(y) * img.width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image line_chart(const std::vector<double>& y, int width, int height) {
  Image img(width, height);
  const int ml = 56, mr = 12, mt = 12, mb = 28;  // margins
  const int x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;

  double lo = 0.0, hi = 1.0;
  if (!y.empty()) {
    lo = *std::min_element(y.begin(), y.end());
    hi = *std::max_element(y.begin(), y.end());
  }
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  draw_line(img, x0, y0, x1, y0, 60, 60, 60);
  draw_line(img, x0, y0, x0, y1, 60, 60, 60);

  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const int py = y0 - static_cast<int>((v - lo) / (hi - lo) * (y0 - y1));
    draw_line(img, x0 - 3, py, x0, py, 60, 60, 60);
    for (int gx = x0; gx <= x1; gx += 4) img.set(gx, py, 225, 225, 225);
    const std::string label = tick_label(v);
    draw_text(img, x0 - 6 - 6 * static_cast<int>(label.size()), py - 3, label);
  }
  const std::size_t n = y.size();
  for (int k = 0; k <= 4; ++k) {
    const double v = n > 1 ? (n - 1) * k / 4.0 : 0.0;
    const int px = x0 + static_cast<int>(n > 1 ? v / (n - 1) * (x1 - x0) : 0);
    draw_line(img, px, y0, px, y0 + 3, 60, 60, 60);
    draw_text(img, px - 8, y0 + 6, tick_label(v));
  }

  if (n >= 2) {
    int prev_x = 0, prev_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int px = x0 + static_cast<int>(static_cast<double>(i) / (n - 1) * (x1 - x0));
      const int py = y0 - static_cast<int>((y[i] - lo) / (hi - lo) * (y0 - y1));
      if (i > 0) draw_line(img, prev_x, prev_y, px, py, 30, 90, 200);
      prev_x = px;
      prev_y = py;
    }
  } else if (n == 1) {
    const int py = y0 - static_cast<int>((y[0] - lo) / (hi - lo) * (y0 - y1));
    img.set((x0 + x1) / 2, py, 30, 90, 200);
  }
  return img;
}

Image scatter_map(const std::vector<double>& x, const std::vector<double>& y,
                  const std::vector<double>& value, int width, int height) {
  Image img(width, height);
  if (x.empty() || x.size() != y.size() || x.size() != value.size())
    throw std::invalid_argument("scatter_map: coordinate/value sizes disagree");

  const int ml = 12, mr = 64, mt = 12, mb = 12;
  const double xmin = *std::min_element(x.begin(), x.end());
  const double xmax = *std::max_element(x.begin(), x.end());
  const double ymin = *std::min_element(y.begin(), y.end());
  const double ymax = *std::max_element(y.begin(), y.end());
  double vmin = *std::min_element(value.begin(), value.end());
  double vmax = *std::max_element(value.begin(), value.end());
  if (vmax <= vmin) vmax = vmin + 1.0;
  const double xspan = xmax > xmin ? xmax - xmin : 1.0;
  const double yspan = ymax > ymin ? ymax - ymin : 1.0;

  for (std::size_t i = 0; i < x.size(); ++i) {
    const int px = ml + static_cast<int>((x[i] - xmin) / xspan * (width - ml - mr));
    const int py = (height - mb) - static_cast<int>((y[i] - ymin) / yspan * (height - mt - mb));
    unsigned char r, g, b;
    colormap((value[i] - vmin) / (vmax - vmin), &r, &g, &b);
    for (int dy = -2; dy <= 2; ++dy)
      for (int dx = -2; dx <= 2; ++dx)
        if (dx * dx + dy * dy <= 4) img.set(px + dx, py + dy, r, g, b);
  }

  // colorbar
  const int bar_x = width - mr + 16;
  for (int py = mt; py < height - mb; ++py) {
    const double f = 1.0 - static_cast<double>(py - mt) / (height - mt - mb - 1);
    unsigned char r, g, b;
    colormap(f, &r, &g, &b);
    for (int dx = 0; dx < 12; ++dx) img.set(bar_x + dx, py, r, g, b);
  }
  draw_text(img, bar_x + 14, mt, tick_label(vmax));
  draw_text(img, bar_x + 14, height - mb - 7, tick_label(vmin));
  return img;
}

}  // namespace dualflood::plot
