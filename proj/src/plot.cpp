#include "mcseg/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace mcseg::plot {

namespace {

// Rows top to bottom, three pixels each.
const std::map<char, const char*>& glyphs() {
  static const std::map<char, const char*> g{
      {'0', "111101101101111"}, {'1', "010110010010111"}, {'2', "111001111100111"}, {'3', "111001111001111"},
      {'4', "101101111001001"}, {'5', "111100111001111"}, {'6', "111100111101111"}, {'7', "111001001010010"},
      {'8', "111101111101111"}, {'9', "111101111001111"}, {'A', "010101111101101"}, {'B', "110101110101110"},
      {'C', "011100100100011"}, {'D', "110101101101110"}, {'E', "111100110100111"}, {'F', "111100110100100"},
      {'G', "011100101101011"}, {'H', "101101111101101"}, {'I', "111010010010111"}, {'J', "001001001101010"},
      {'K', "101101110101101"}, {'L', "100100100100111"}, {'M', "101111111101101"}, {'N', "110101101101101"},
      {'O', "010101101101010"}, {'P', "110101110100100"}, {'Q', "010101101110011"}, {'R', "110101110101101"},
      {'S', "011100010001110"}, {'T', "111010010010010"}, {'U', "101101101101111"}, {'V', "101101101101010"},
      {'W', "101101111111101"}, {'X', "101101010101101"}, {'Y', "101101010010010"}, {'Z', "111001010100111"},
      {'.', "000000000000010"}, {'_', "000000000000111"}, {'+', "000010111010000"}, {'-', "000000111000000"},
      {':', "000010000010000"}, {'/', "001001010100100"}, {'>', "100010001010100"}, {'=', "000111000111000"},
  };
  return g;
}

const std::array<Rgb, 6> kPalette{{{31, 119, 180}, {255, 127, 14}, {44, 160, 44}, {214, 39, 40}, {148, 103, 189},
                                   {140, 86, 75}}};
constexpr Rgb kInk{0, 0, 0};
constexpr Rgb kGrid{220, 220, 220};

std::string fmt2(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2f", v);
  return b;
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb fill) : w_(width), h_(height), px_(std::size_t(width) * height * 3) {
  if (width < 1 || height < 1) throw std::invalid_argument("canvas size must be positive");
  fill_rect(0, 0, w_, h_, fill);
}

Rgb Canvas::at(int x, int y) const {
  const std::size_t i = (std::size_t(y) * w_ + x) * 3;
  return {px_[i], px_[i + 1], px_[i + 2]};
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  x0 = std::clamp(x0, 0, w_);
  x1 = std::clamp(x1, 0, w_);
  y0 = std::clamp(y0, 0, h_);
  y1 = std::clamp(y1, 0, h_);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) std::copy(c.begin(), c.end(), px_.begin() + (std::size_t(y) * w_ + x) * 3);
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  const int n = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  for (int i = 0; i <= n; ++i) {
    const double t = n ? double(i) / n : 0.0;
    const int x = int(std::lround(x0 + t * (x1 - x0))), y = int(std::lround(y0 + t * (y1 - y0)));
    fill_rect(x, y, x + 2, y + 2, c);
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  const auto& g = glyphs();
  for (char ch : s) {
    const auto it = g.find(char(std::toupper(static_cast<unsigned char>(ch))));
    if (it != g.end())
      for (int r = 0; r < 5; ++r)
        for (int q = 0; q < 3; ++q)
          if (it->second[r * 3 + q] == '1')
            fill_rect(x + q * scale, y + r * scale, x + (q + 1) * scale, y + (r + 1) * scale, c);
    x += 4 * scale;
  }
}

void Canvas::save_png(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w_);
  img.height = static_cast<png_uint_32>(h_);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, px_.data(), 0, nullptr))
    throw std::runtime_error("cannot write " + path.string() + ": " + img.message);
}

void bar_chart(const std::filesystem::path& path, const std::string& title, const std::vector<std::string>& labels,
               const std::vector<double>& values) {
  if (labels.size() != values.size()) throw std::invalid_argument("bar_chart: labels and values differ in length");
  int label_w = 0;
  for (const auto& l : labels) label_w = std::max(label_w, Canvas::text_width(l));
  const int left = label_w + 16, plot_w = 300, row = 22, top = 40;
  const int width = std::max(left + plot_w + 70, Canvas::text_width(title) + 20);
  Canvas c(width, top + row * int(labels.size()) + 30);
  c.text(10, 10, title, kInk);
  for (int t = 0; t <= 5; ++t) {
    const int x = left + t * plot_w / 5;
    c.fill_rect(x, top - 4, x + 1, top + row * int(labels.size()), kGrid);
    c.text(x - 8, top + row * int(labels.size()) + 6, fmt2(t / 5.0), kInk);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = top + row * int(i);
    const double v = std::clamp(values[i], 0.0, 1.0);
    c.text(8, y + 5, labels[i], kInk);
    c.fill_rect(left, y + 3, left + int(std::lround(v * plot_w)), y + row - 3, kPalette[i % kPalette.size()]);
    c.text(left + int(std::lround(v * plot_w)) + 6, y + 5, fmt2(values[i]), kInk);
  }
  c.save_png(path);
}

void line_chart(const std::filesystem::path& path, const std::string& title, const std::vector<double>& x,
                const std::vector<Series>& series) {
  if (x.empty()) throw std::invalid_argument("line_chart: no x positions");
  const int left = 50, top = 40, pw = 360, ph = 220;
  Canvas c(left + pw + 30, top + ph + 40 + 16 * int(series.size()));
  c.text(10, 10, title, kInk);
  const double x0 = *std::min_element(x.begin(), x.end()), x1 = *std::max_element(x.begin(), x.end());
  auto px = [&](double v) { return left + int(std::lround(x1 > x0 ? (v - x0) / (x1 - x0) * pw : pw / 2.0)); };
  auto py = [&](double v) { return top + ph - int(std::lround(std::clamp(v, 0.0, 1.0) * ph)); };
  for (int t = 0; t <= 5; ++t) {
    c.fill_rect(left, py(t / 5.0), left + pw, py(t / 5.0) + 1, kGrid);
    c.text(8, py(t / 5.0) - 5, fmt2(t / 5.0), kInk);
  }
  for (double v : x) c.text(px(v) - 8, top + ph + 8, fmt2(v), kInk);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb col = kPalette[s % kPalette.size()];
    const auto& y = series[s].y;
    for (std::size_t i = 0; i < y.size() && i < x.size(); ++i) {
      c.fill_rect(px(x[i]) - 3, py(y[i]) - 3, px(x[i]) + 4, py(y[i]) + 4, col);
      if (i) c.line(px(x[i - 1]), py(y[i - 1]), px(x[i]), py(y[i]), col);
    }
    const int ly = top + ph + 28 + 16 * int(s);
    c.fill_rect(left, ly, left + 14, ly + 10, col);
    c.text(left + 20, ly, series[s].label, kInk);
  }
  c.save_png(path);
}

}  // namespace mcseg::plot
