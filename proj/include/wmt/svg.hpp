#pragma once

// Minimal self-contained SVG line charts (lead hour vs MW). No external
// rendering dependency: output is plain SVG 1.1 text with axes, ticks, grid
// lines, and a legend.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "wmt/error.hpp"
#include "wmt/util.hpp"

namespace wmt {

struct SvgSeries {
  std::string label;
  std::string color;  // any SVG color string
  std::vector<double> y;
};

struct SvgChartOptions {
  int width = 720, height = 420;
  int margin_left = 64, margin_right = 24, margin_top = 40, margin_bottom = 48;
  std::string title, x_label, y_label;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// A "nice" tick step (1/2/5 times a power of ten) covering span/target ticks.
inline double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(1, target_ticks);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double r = raw / mag;
  double step;
  if (r <= 1.0) {
    step = 1.0;
  } else if (r <= 2.0) {
    step = 2.0;
  } else if (r <= 5.0) {
    step = 5.0;
  } else {
    step = 10.0;
  }
  return step * mag;
}

}  // namespace detail

// Renders one line chart; every series shares the x vector.
inline std::string svg_line_chart(const std::vector<double>& x,
                                  const std::vector<SvgSeries>& series,
                                  const SvgChartOptions& opt) {
  if (x.size() < 2) throw DimensionError("svg chart: need at least two x points");
  for (const auto& s : series) {
    if (s.y.size() != x.size()) {
      throw DimensionError("svg chart: series '" + s.label + "' length does not match x");
    }
  }
  double x_min = x.front(), x_max = x.back();
  for (double v : x) {
    x_min = std::min(x_min, v);
    x_max = std::max(x_max, v);
  }
  double y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const auto& s : series) {
    for (double v : s.y) {
      if (!std::isfinite(v)) throw NumericError("svg chart: non-finite value in series");
      if (first) {
        y_min = y_max = v;
        first = false;
      } else {
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
      }
    }
  }
  y_min = std::min(y_min, 0.0);  // error axes read best anchored at zero
  if (y_max <= y_min) y_max = y_min + 1.0;
  const double y_pad = 0.05 * (y_max - y_min);
  y_max += y_pad;

  const double plot_w = opt.width - opt.margin_left - opt.margin_right;
  const double plot_h = opt.height - opt.margin_top - opt.margin_bottom;
  auto sx = [&](double v) {
    return opt.margin_left + (v - x_min) / (x_max - x_min) * plot_w;
  };
  auto sy = [&](double v) {
    return opt.margin_top + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;
  };
  auto num = [](double v) { return fmt_g(v, 6); };

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) +
         "\" height=\"" + std::to_string(opt.height) + "\" viewBox=\"0 0 " +
         std::to_string(opt.width) + " " + std::to_string(opt.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(opt.width / 2.0) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         detail::xml_escape(opt.title) + "</text>\n";

  // Grid and ticks.
  const double y_step = detail::nice_step(y_max - y_min, 6);
  for (double v = std::ceil(y_min / y_step) * y_step; v <= y_max + 1e-9; v += y_step) {
    out += "<line x1=\"" + num(sx(x_min)) + "\" y1=\"" + num(sy(v)) + "\" x2=\"" +
           num(sx(x_max)) + "\" y2=\"" + num(sy(v)) + "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + num(opt.margin_left - 6) + "\" y=\"" + num(sy(v) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + num(v) +
           "</text>\n";
  }
  const double x_step = detail::nice_step(x_max - x_min, 8);
  for (double v = std::ceil(x_min / x_step) * x_step; v <= x_max + 1e-9; v += x_step) {
    out += "<line x1=\"" + num(sx(v)) + "\" y1=\"" + num(sy(y_min)) + "\" x2=\"" + num(sx(v)) +
           "\" y2=\"" + num(sy(y_min) + 4) + "\" stroke=\"#444444\"/>\n";
    out += "<text x=\"" + num(sx(v)) + "\" y=\"" + num(sy(y_min) + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + num(v) +
           "</text>\n";
  }

  // Axes.
  out += "<line x1=\"" + num(sx(x_min)) + "\" y1=\"" + num(sy(y_min)) + "\" x2=\"" +
         num(sx(x_max)) + "\" y2=\"" + num(sy(y_min)) + "\" stroke=\"#444444\"/>\n";
  out += "<line x1=\"" + num(sx(x_min)) + "\" y1=\"" + num(sy(y_min)) + "\" x2=\"" +
         num(sx(x_min)) + "\" y2=\"" + num(sy(y_max)) + "\" stroke=\"#444444\"/>\n";
  out += "<text x=\"" + num(opt.margin_left + plot_w / 2) + "\" y=\"" +
         num(opt.height - 10.0) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         detail::xml_escape(opt.x_label) + "</text>\n";
  out += "<text x=\"16\" y=\"" + num(opt.margin_top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 " +
         num(opt.margin_top + plot_h / 2) + ")\">" + detail::xml_escape(opt.y_label) +
         "</text>\n";

  // Series lines.
  for (const auto& s : series) {
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < x.size(); ++i) {
      out += num(sx(x[i])) + "," + num(sy(s.y[i])) + " ";
    }
    out += "\"/>\n";
  }

  // Legend.
  double ly = opt.margin_top + 8;
  for (const auto& s : series) {
    const double lx = opt.margin_left + plot_w - 170;
    out += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 24) +
           "\" y2=\"" + num(ly) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + num(lx + 30) + "\" y=\"" + num(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + detail::xml_escape(s.label) +
           "</text>\n";
    ly += 18;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace wmt
