#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include "guq/error.hpp"

namespace guq::cli {

namespace {

constexpr double kLeft = 60.0, kRight = 20.0, kTop = 30.0, kBottom = 45.0;

std::string f(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

SvgPlot::SvgPlot(double width, double height, std::array<double, 2> x_range,
                 std::array<double, 2> y_range)
    : width_(width), height_(height), xr_(x_range), yr_(y_range) {
  if (!(xr_[1] > xr_[0])) xr_ = {xr_[0] - 1.0, xr_[0] + 1.0};
  if (!(yr_[1] > yr_[0])) yr_ = {yr_[0] - 1.0, yr_[0] + 1.0};
}

double SvgPlot::px(double x) const {
  return kLeft + (x - xr_[0]) / (xr_[1] - xr_[0]) * (width_ - kLeft - kRight);
}

double SvgPlot::py(double y) const {
  return height_ - kBottom - (y - yr_[0]) / (yr_[1] - yr_[0]) * (height_ - kTop - kBottom);
}

void SvgPlot::title(const std::string& text) { title_ = text; }

void SvgPlot::axis_labels(const std::string& x, const std::string& y) {
  xlabel_ = x;
  ylabel_ = y;
}

void SvgPlot::line(const std::vector<double>& x, const std::vector<double>& y,
                   const std::string& color, double stroke, bool dashed) {
  std::string pts;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) {
    if (!pts.empty()) pts += ' ';
    pts += f(px(x[i])) + "," + f(py(y[i]));
  }
  body_.push_back("<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + f(stroke) +
                  "\"" + (dashed ? " stroke-dasharray=\"5,3\"" : "") + " points=\"" + pts +
                  "\"/>");
}

void SvgPlot::band(const std::vector<double>& x, const std::vector<double>& lower,
                   const std::vector<double>& upper, const std::string& color, double opacity) {
  std::string pts;
  for (std::size_t i = 0; i < x.size(); ++i) pts += f(px(x[i])) + "," + f(py(upper[i])) + " ";
  for (std::size_t i = x.size(); i-- > 0;) pts += f(px(x[i])) + "," + f(py(lower[i])) + " ";
  if (!pts.empty()) pts.pop_back();
  body_.push_back("<polygon fill=\"" + color + "\" fill-opacity=\"" + f(opacity) +
                  "\" stroke=\"none\" points=\"" + pts + "\"/>");
}

void SvgPlot::ellipse(double cx, double cy, double a, double b, double angle,
                      const std::string& color) {
  // Sampled outline, so unequal axis scales stay correct.
  std::string pts;
  const int n = 48;
  for (int k = 0; k <= n; ++k) {
    const double t = 2.0 * std::numbers::pi * k / n;
    const double u = a * std::cos(t), v = b * std::sin(t);
    const double x = cx + u * std::cos(angle) - v * std::sin(angle);
    const double y = cy + u * std::sin(angle) + v * std::cos(angle);
    if (!pts.empty()) pts += ' ';
    pts += f(px(x)) + "," + f(py(y));
  }
  body_.push_back("<polyline fill=\"none\" stroke=\"" + color +
                  "\" stroke-width=\"0.8\" points=\"" + pts + "\"/>");
}

void SvgPlot::point(double x, double y, const std::string& color, double radius) {
  body_.push_back("<circle cx=\"" + f(px(x)) + "\" cy=\"" + f(py(y)) + "\" r=\"" + f(radius) +
                  "\" fill=\"" + color + "\"/>");
}

void SvgPlot::bar(double x_center, double width, double value, const std::string& color) {
  const double x0 = px(x_center - width / 2), x1 = px(x_center + width / 2);
  const double y0 = py(0.0), y1 = py(value);
  body_.push_back("<rect x=\"" + f(x0) + "\" y=\"" + f(std::min(y0, y1)) + "\" width=\"" +
                  f(x1 - x0) + "\" height=\"" + f(std::abs(y1 - y0)) + "\" fill=\"" + color +
                  "\"/>");
}

void SvgPlot::legend(const std::vector<std::pair<std::string, std::string>>& entries) {
  legend_ = entries;
}

std::string SvgPlot::str() const {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(width_) +
                  "\" height=\"" + f(height_) + "\" viewBox=\"0 0 " + f(width_) + " " +
                  f(height_) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double x0 = kLeft, x1 = width_ - kRight, y0 = height_ - kBottom, y1 = kTop;
  s += "<rect x=\"" + f(x0) + "\" y=\"" + f(y1) + "\" width=\"" + f(x1 - x0) + "\" height=\"" +
       f(y0 - y1) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xr_[0] + (xr_[1] - xr_[0]) * k / 4.0;
    const double yv = yr_[0] + (yr_[1] - yr_[0]) * k / 4.0;
    s += "<text x=\"" + f(px(xv)) + "\" y=\"" + f(y0 + 14) + "\" text-anchor=\"middle\">" +
         tick(xv) + "</text>\n";
    s += "<text x=\"" + f(x0 - 4) + "\" y=\"" + f(py(yv) + 4) + "\" text-anchor=\"end\">" +
         tick(yv) + "</text>\n";
  }
  if (!title_.empty())
    s += "<text x=\"" + f(width_ / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" +
         escape(title_) + "</text>\n";
  if (!xlabel_.empty())
    s += "<text x=\"" + f((x0 + x1) / 2) + "\" y=\"" + f(height_ - 10) +
         "\" text-anchor=\"middle\">" + escape(xlabel_) + "</text>\n";
  if (!ylabel_.empty())
    s += "<text x=\"14\" y=\"" + f((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         f((y0 + y1) / 2) + ")\">" + escape(ylabel_) + "</text>\n";
  s += "<g>\n";
  for (const auto& b : body_) s += b + "\n";
  s += "</g>\n";
  double ly = y1 + 14;
  for (const auto& [label, color] : legend_) {
    s += "<rect x=\"" + f(x1 - 120) + "\" y=\"" + f(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         color + "\"/><text x=\"" + f(x1 - 105) + "\" y=\"" + f(ly) + "\">" + escape(label) +
         "</text>\n";
    ly += 15;
  }
  s += "</svg>\n";
  return s;
}

std::array<double, 2> data_range(const std::vector<std::vector<double>>& series) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series)
    for (double v : s)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  const double pad = hi > lo ? 0.05 * (hi - lo) : 0.5;
  return {lo - pad, hi + pad};
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace guq::cli
