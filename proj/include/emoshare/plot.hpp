#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "emoshare/errors.hpp"

namespace emoshare::plot {

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Color&, const Color&) = default;
};

inline constexpr Color kWhite{255, 255, 255};
inline constexpr Color kBlack{0, 0, 0};
inline constexpr Color kGrey{200, 200, 200};
inline constexpr Color kBlue{31, 119, 180};
inline constexpr Color kOrange{255, 127, 14};

namespace detail {

// 5x7 bitmap glyphs; each row's low five bits run left to right.
inline const std::array<std::uint8_t, 7>* glyph(char c) {
  struct Entry {
    char ch;
    std::array<std::uint8_t, 7> rows;
  };
  static const Entry table[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}}, {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}},
  };
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& e : table)
    if (e.ch == up) return &e.rows;
  return nullptr;
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

// RGB raster with (0, 0) at the top-left.
class Canvas {
 public:
  Canvas(int width, int height, Color fill = kWhite)
      : w_(width), h_(height), px_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, Color c) {
    if (x >= 0 && y >= 0 && x < w_ && y < h_) px_[static_cast<std::size_t>(y) * w_ + x] = c;
  }
  Color at(int x, int y) const { return px_.at(static_cast<std::size_t>(y) * w_ + x); }

  void line(int x0, int y0, int x1, int y1, Color c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) err += dy, x0 += sx;
      if (e2 <= dx) err += dx, y0 += sy;
    }
  }

  void rect(int x0, int y0, int x1, int y1, Color c) {
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) set(x, y, c);
  }

  void frame(int x0, int y0, int x1, int y1, Color c) {
    line(x0, y0, x1, y0, c);
    line(x1, y0, x1, y1, c);
    line(x1, y1, x0, y1, c);
    line(x0, y1, x0, y0, c);
  }

  void disc(int cx, int cy, int r, Color c) {
    for (int y = -r; y <= r; ++y)
      for (int x = -r; x <= r; ++x)
        if (x * x + y * y <= r * r) set(cx + x, cy + y, c);
  }

  // Unsupported characters render as blanks.
  void text(int x, int y, const std::string& s, Color c, int scale = 1) {
    for (char ch : s) {
      if (const auto* g = detail::glyph(ch))
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if ((*g)[row] & (0x10 >> col)) rect(x + col * scale, y + row * scale, x + col * scale + scale - 1,
                                               y + row * scale + scale - 1, c);
      x += 6 * scale;
    }
  }

  static int text_width(const std::string& s, int scale = 1) { return static_cast<int>(s.size()) * 6 * scale; }

  std::vector<std::uint8_t> encode_png() const {
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h_) * (1 + 3 * w_));
    for (int y = 0; y < h_; ++y) {
      raw.push_back(0);
      for (int x = 0; x < w_; ++x) {
        const Color& c = px_[static_cast<std::size_t>(y) * w_ + x];
        raw.insert(raw.end(), {c.r, c.g, c.b});
      }
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
      throw IoError("PNG compression failed");
    z.resize(zlen);

    std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    std::vector<std::uint8_t> ihdr;
    detail::put_be32(ihdr, static_cast<std::uint32_t>(w_));
    detail::put_be32(ihdr, static_cast<std::uint32_t>(h_));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit RGB
    detail::put_chunk(png, "IHDR", ihdr);
    detail::put_chunk(png, "IDAT", z);
    detail::put_chunk(png, "IEND", {});
    return png;
  }

  void save_png(const std::filesystem::path& path) const {
    const auto bytes = encode_png();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing " + path.string());
  }

 private:
  int w_, h_;
  std::vector<Color> px_;
};

inline std::string format_fixed(double v, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

// True-vs-predicted scatter with a y = x reference line. Both axes share
// one range so the reference runs corner to corner.
struct ScatterPlot {
  std::string title;
  std::vector<double> truth;
  std::vector<double> predicted;
  int width = 360;
  int height = 360;

  struct Rendered {
    Canvas canvas;
    int points_drawn = 0;
  };

  Rendered render() const {
    if (truth.size() != predicted.size()) throw InputError("scatter plot needs paired values");
    Rendered out{Canvas(width, height), 0};
    Canvas& c = out.canvas;
    const int left = 44, right = width - 12, top = 24, bottom = height - 30;
    double lo = 0.0, hi = 1.0;
    for (double v : truth) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : predicted) lo = std::min(lo, v), hi = std::max(hi, v);
    auto px = [&](double v) { return left + static_cast<int>(std::lround((v - lo) / (hi - lo) * (right - left))); };
    auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * (bottom - top))); };

    c.frame(left, top, right, bottom, kBlack);
    c.text(left, 8, title, kBlack);
    c.text(left - 2, bottom + 6, format_fixed(lo, 1), kBlack);
    c.text(right - Canvas::text_width(format_fixed(hi, 1)), bottom + 6, format_fixed(hi, 1), kBlack);
    c.text(4, top, format_fixed(hi, 1), kBlack);
    c.text(4, bottom - 7, format_fixed(lo, 1), kBlack);
    c.text((left + right) / 2 - 12, bottom + 18, "TRUE", kBlack);
    const std::string ylabel = "PREDICTED";
    const int y0 = (top + bottom) / 2 - 9 * static_cast<int>(ylabel.size()) / 2;
    for (std::size_t i = 0; i < ylabel.size(); ++i)
      c.text(12, y0 + 9 * static_cast<int>(i), std::string(1, ylabel[i]), kBlack);
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (!std::isfinite(truth[i]) || !std::isfinite(predicted[i])) continue;
      c.disc(px(truth[i]), py(predicted[i]), 2, kBlue);
      ++out.points_drawn;
    }
    c.line(px(lo), py(lo), px(hi), py(hi), kBlack);
    return out;
  }
};

// Grouped bars: one group per category, one bar per series.
struct BarChart {
  std::string title;
  std::vector<std::string> groups;
  std::vector<std::string> series;
  std::vector<std::vector<double>> values;  // [group][series]
  int width = 640;
  int height = 360;

  struct Bar {
    int x0, x1, y_top, y_bottom;
  };
  struct Rendered {
    Canvas canvas;
    std::vector<std::vector<Bar>> bars;  // [group][series]
  };

  Rendered render() const {
    if (values.size() != groups.size()) throw InputError("bar chart needs one value row per group");
    for (const auto& row : values)
      if (row.size() != series.size()) throw InputError("bar chart row does not match the series count");
    static const Color palette[] = {kBlue, kOrange, Color{44, 160, 44}, Color{214, 39, 40}};
    Rendered out{Canvas(width, height), {}};
    Canvas& c = out.canvas;
    const int left = 44, right = width - 12, top = 36, bottom = height - 40;
    double lo = 0.0, hi = 0.0;
    for (const auto& row : values)
      for (double v : row) lo = std::min(lo, v), hi = std::max(hi, v);
    if (hi == lo) hi = lo + 1.0;
    hi += 0.05 * (hi - lo);
    auto py = [&](double v) { return bottom - static_cast<int>(std::lround((v - lo) / (hi - lo) * (bottom - top))); };

    c.text(left, 8, title, kBlack);
    for (std::size_t s = 0; s < series.size(); ++s) {
      const int lx = left + 140 * static_cast<int>(s);
      c.rect(lx, 22, lx + 8, 30, palette[s % 4]);
      c.text(lx + 12, 23, series[s], kBlack);
    }
    c.frame(left, top, right, bottom, kBlack);
    c.line(left, py(0.0), right, py(0.0), kGrey);
    c.text(4, top, format_fixed(hi, 2), kBlack);
    c.text(4, bottom - 7, format_fixed(lo, 2), kBlack);

    const int n_groups = std::max<int>(1, static_cast<int>(groups.size()));
    const int group_w = (right - left) / n_groups;
    const int bar_w = std::max(2, (group_w - 16) / std::max<int>(1, static_cast<int>(series.size())));
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const int gx = left + static_cast<int>(g) * group_w + 8;
      out.bars.emplace_back();
      for (std::size_t s = 0; s < series.size(); ++s) {
        const int x0 = gx + static_cast<int>(s) * bar_w;
        const int x1 = x0 + bar_w - 2;
        const int y0 = py(0.0), y1 = py(values[g][s]);
        c.rect(x0, std::min(y0, y1), x1, std::max(y0, y1), palette[s % 4]);
        out.bars.back().push_back({x0, x1, std::min(y0, y1), std::max(y0, y1)});
      }
      c.text(gx, bottom + 8, groups[g], kBlack);
    }
    return out;
  }
};

}  // namespace emoshare::plot
