#ifndef MCSEG_PLOT_HPP
#define MCSEG_PLOT_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mcseg::plot {

using Rgb = std::array<std::uint8_t, 3>;

// RGB raster with just enough drawing for report charts.
class Canvas {
 public:
  Canvas(int width, int height, Rgb fill = {255, 255, 255});

  int width() const { return w_; }
  int height() const { return h_; }
  Rgb at(int x, int y) const;

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);  // inclusive-exclusive, clipped
  void line(int x0, int y0, int x1, int y1, Rgb c);
  // Upper-cased text in a 3x5 bitmap font; unknown characters draw as blanks.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 2);
  static int text_width(const std::string& s, int scale = 2) { return int(s.size()) * 4 * scale; }

  void save_png(const std::filesystem::path& path) const;

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

// Horizontal bars, one per label, on a fixed [0, 1] axis with the value printed after each bar.
void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::vector<std::string>& labels, const std::vector<double>& values);

struct Series {
  std::string label;
  std::vector<double> y;
};

// Lines over shared x positions, y on [0, 1].
void line_chart(const std::filesystem::path& path, const std::string& title, const std::vector<double>& x,
                const std::vector<Series>& series);

}  // namespace mcseg::plot

#endif  // MCSEG_PLOT_HPP
