#pragma once

#include <array>
#include <string>
#include <vector>

namespace guq::cli {

/// Minimal fixed-layout SVG plot: one data window mapped onto a canvas,
/// plus axes, lines, bands, ellipses and bars.
class SvgPlot {
 public:
  SvgPlot(double width, double height, std::array<double, 2> x_range,
          std::array<double, 2> y_range);

  void title(const std::string& text);
  void axis_labels(const std::string& x, const std::string& y);
  void line(const std::vector<double>& x, const std::vector<double>& y, const std::string& color,
            double stroke = 1.5, bool dashed = false);
  /// Filled region between lower and upper curves.
  void band(const std::vector<double>& x, const std::vector<double>& lower,
            const std::vector<double>& upper, const std::string& color, double opacity);
  /// Ellipse in data coordinates; `angle` in radians from the x axis.
  void ellipse(double cx, double cy, double a, double b, double angle, const std::string& color);
  void point(double x, double y, const std::string& color, double radius = 2.5);
  void bar(double x_center, double width, double value, const std::string& color);
  void legend(const std::vector<std::pair<std::string, std::string>>& entries);

  std::string str() const;

 private:
  double px(double x) const;
  double py(double y) const;

  double width_, height_;
  std::array<double, 2> xr_, yr_;
  std::string title_, xlabel_, ylabel_;
  std::vector<std::string> body_;
  std::vector<std::pair<std::string, std::string>> legend_;
};

/// Padded [min, max] over the given series, never degenerate.
std::array<double, 2> data_range(const std::vector<std::vector<double>>& series);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace guq::cli
