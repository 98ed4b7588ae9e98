#include "shiftlens/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace shiftlens::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 150;  // legend gutter
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 56;

const char* kPalette[] = {"#4269d0", "#efb118", "#ff725c", "#6cc5b0",
                          "#3ca951", "#ff8ab7", "#a463f2", "#97bbf5"};
constexpr int kPaletteSize = 8;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& out, const std::string& title) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n"
      << "<style>text{font-family:sans-serif;font-size:12px;}"
         ".title{font-size:14px;font-weight:bold;}</style>\n"
      << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n"
      << "<text class=\"title\" x=\"" << kWidth / 2 << "\" y=\"20\" "
      << "text-anchor=\"middle\">" << escape(title) << "</text>\n";
}

void draw_frame(std::ostringstream& out) {
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kMarginTop, y1 = kHeight - kMarginBottom;
  out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << x1 - x0
      << "\" height=\"" << y1 - y0 << "\" fill=\"none\" stroke=\"#333\"/>\n";
}

void y_axis(std::ostringstream& out, double y_min, double y_max,
            const std::string& label) {
  const int x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const int y0 = kMarginTop, y1 = kHeight - kMarginBottom;
  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    const double v = y_min + (y_max - y_min) * t / ticks;
    const double py = y1 - (y1 - y0) * t / static_cast<double>(ticks);
    out << "<line x1=\"" << x0 << "\" y1=\"" << fmt(py) << "\" x2=\"" << x1
        << "\" y2=\"" << fmt(py) << "\" stroke=\"#ddd\"/>\n"
        << "<text x=\"" << x0 - 8 << "\" y=\"" << fmt(py + 4)
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  out << "<text x=\"16\" y=\"" << (y0 + y1) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (y0 + y1) / 2 << ")\">" << escape(label) << "</text>\n";
}

void legend(std::ostringstream& out, const std::vector<std::string>& labels) {
  const int x = kWidth - kMarginRight + 12;
  int y = kMarginTop + 10;
  for (std::size_t s = 0; s < labels.size(); ++s) {
    out << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" "
        << "height=\"12\" fill=\"" << kPalette[s % kPaletteSize] << "\"/>\n"
        << "<text x=\"" << x + 18 << "\" y=\"" << y + 2 << "\">"
        << escape(labels[s]) << "</text>\n";
    y += 18;
  }
}

}  // namespace

std::string render_line_chart(const LineChart& chart) {
  if (chart.series.empty()) throw std::invalid_argument("line chart: no series");
  double x_lo = 0, x_hi = 1;
  bool first = true;
  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("line chart: x/y length mismatch");
    for (double x : s.x) {
      const double v = chart.log_x ? std::log10(x) : x;
      if (first) {
        x_lo = x_hi = v;
        first = false;
      } else {
        x_lo = std::min(x_lo, v);
        x_hi = std::max(x_hi, v);
      }
    }
  }
  if (x_hi <= x_lo) x_hi = x_lo + 1;

  const int px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const int py0 = kMarginTop, py1 = kHeight - kMarginBottom;
  auto map_x = [&](double x) {
    const double v = chart.log_x ? std::log10(x) : x;
    return px0 + (px1 - px0) * (v - x_lo) / (x_hi - x_lo);
  };
  auto map_y = [&](double y) {
    const double clamped = std::clamp(y, chart.y_min, chart.y_max);
    return py1 - (py1 - py0) * (clamped - chart.y_min) / (chart.y_max - chart.y_min);
  };

  std::ostringstream out;
  open_svg(out, chart.title);
  draw_frame(out);
  y_axis(out, chart.y_min, chart.y_max, chart.y_label);

  // x ticks at the data points of the first series
  for (double x : chart.series.front().x) {
    const double px = map_x(x);
    out << "<line x1=\"" << fmt(px) << "\" y1=\"" << py1 << "\" x2=\"" << fmt(px)
        << "\" y2=\"" << py1 + 5 << "\" stroke=\"#333\"/>\n"
        << "<text x=\"" << fmt(px) << "\" y=\"" << py1 + 20
        << "\" text-anchor=\"middle\">" << fmt(x) << "</text>\n";
  }
  out << "<text x=\"" << (px0 + px1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << escape(chart.x_label) << "</text>\n";

  std::vector<std::string> labels;
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& series = chart.series[s];
    const char* color = kPalette[s % kPaletteSize];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series.x.size(); ++i)
      out << fmt(map_x(series.x[i])) << "," << fmt(map_y(series.y[i])) << " ";
    out << "\"/>\n";
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      out << "<circle cx=\"" << fmt(map_x(series.x[i])) << "\" cy=\""
          << fmt(map_y(series.y[i])) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
      if (i < series.y_err.size() && series.y_err[i] > 0) {
        const double px = map_x(series.x[i]);
        out << "<line x1=\"" << fmt(px) << "\" y1=\""
            << fmt(map_y(series.y[i] - series.y_err[i])) << "\" x2=\"" << fmt(px)
            << "\" y2=\"" << fmt(map_y(series.y[i] + series.y_err[i]))
            << "\" stroke=\"" << color << "\"/>\n";
      }
    }
    labels.push_back(series.label);
  }
  legend(out, labels);
  out << "</svg>\n";
  return out.str();
}

std::string render_bar_chart(const BarChart& chart) {
  if (chart.groups.empty()) throw std::invalid_argument("bar chart: no groups");
  const std::size_t per_group = chart.series_labels.size();
  for (const auto& g : chart.groups)
    if (g.values.size() != per_group)
      throw std::invalid_argument("bar chart: ragged group '" + g.label + "'");

  const int px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const int py0 = kMarginTop, py1 = kHeight - kMarginBottom;
  const double group_width =
      static_cast<double>(px1 - px0) / static_cast<double>(chart.groups.size());
  const double bar_width = group_width * 0.8 / static_cast<double>(per_group);
  auto map_y = [&](double y) {
    const double clamped = std::clamp(y, 0.0, chart.y_max);
    return py1 - (py1 - py0) * clamped / chart.y_max;
  };

  std::ostringstream out;
  open_svg(out, chart.title);
  draw_frame(out);
  y_axis(out, 0.0, chart.y_max, chart.y_label);

  for (std::size_t g = 0; g < chart.groups.size(); ++g) {
    const auto& group = chart.groups[g];
    const double gx = px0 + group_width * (static_cast<double>(g) + 0.1);
    for (std::size_t s = 0; s < per_group; ++s) {
      const double x = gx + bar_width * static_cast<double>(s);
      const double top = map_y(group.values[s]);
      out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(top) << "\" width=\""
          << fmt(bar_width * 0.92) << "\" height=\"" << fmt(py1 - top)
          << "\" fill=\"" << kPalette[s % kPaletteSize] << "\"/>\n";
      if (s < group.errors.size() && group.errors[s] > 0) {
        const double cx = x + bar_width * 0.46;
        out << "<line x1=\"" << fmt(cx) << "\" y1=\""
            << fmt(map_y(group.values[s] - group.errors[s])) << "\" x2=\""
            << fmt(cx) << "\" y2=\"" << fmt(map_y(group.values[s] + group.errors[s]))
            << "\" stroke=\"#333\"/>\n";
      }
    }
    out << "<text x=\"" << fmt(gx + group_width * 0.4) << "\" y=\"" << py1 + 16
        << "\" text-anchor=\"middle\">" << escape(group.label) << "</text>\n";
  }
  legend(out, chart.series_labels);
  out << "</svg>\n";
  return out.str();
}

}  // namespace shiftlens::svg
