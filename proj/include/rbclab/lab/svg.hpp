#pragma once

#include <string>
#include <vector>

namespace rbclab::lab {

/// Minimal SVG line-plot writer: linear axes, ticks, legend, polyline
/// series. NaN samples break the line.
class SvgPlot {
 public:
  SvgPlot(int width, int height) : width_(width), height_(height) {}

  void set_labels(std::string xlabel, std::string ylabel, std::string title);

  void add_series(const std::vector<double>& x, const std::vector<double>& y,
                  std::string color, double stroke_width, std::string dash,
                  double opacity, std::string label);

  void write(const std::string& path) const;

 private:
  struct Series {
    std::vector<double> x, y;
    std::string color;
    double stroke_width;
    std::string dash;
    double opacity;
    std::string label;
  };
  int width_, height_;
  std::string xlabel_, ylabel_, title_;
  std::vector<Series> series_;
};

}  // namespace rbclab::lab
