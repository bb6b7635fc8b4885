#include "rbclab/lab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rbclab/errors.hpp"

namespace rbclab::lab {

void SvgPlot::set_labels(std::string xlabel, std::string ylabel, std::string title) {
  xlabel_ = std::move(xlabel);
  ylabel_ = std::move(ylabel);
  title_ = std::move(title);
}

void SvgPlot::add_series(const std::vector<double>& x, const std::vector<double>& y,
                         std::string color, double stroke_width, std::string dash,
                         double opacity, std::string label) {
  series_.push_back({x, y, std::move(color), stroke_width, std::move(dash), opacity,
                     std::move(label)});
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// round a span to a pleasant tick step
double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(target_ticks, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  double step = 10.0;
  if (frac <= 1.0) step = 1.0;
  else if (frac <= 2.0) step = 2.0;
  else if (frac <= 5.0) step = 5.0;
  return step * mag;
}

}  // namespace

void SvgPlot::write(const std::string& path) const {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series_) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isnan(s.x[i]) || std::isnan(s.y[i])) continue;
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double ml = 70, mr = 20, mt = 40, mb = 50;
  const double pw = width_ - ml - mr, ph = height_ - mt - mb;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return mt + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw UsageError("cannot open plot file for writing: " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
    << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_ << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << width_ / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
       "font-family=\"sans-serif\">" << title_ << "</text>\n";

  // axes
  f << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const double xstep = nice_step(xmax - xmin, 8);
  for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-12; t += xstep) {
    f << "<line x1=\"" << sx(t) << "\" y1=\"" << mt + ph << "\" x2=\"" << sx(t) << "\" y2=\""
      << mt + ph + 5 << "\" stroke=\"#333\"/>\n";
    f << "<text x=\"" << sx(t) << "\" y=\"" << mt + ph + 20
      << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
      << "</text>\n";
  }
  const double ystep = nice_step(ymax - ymin, 6);
  for (double t = std::ceil(ymin / ystep) * ystep; t <= ymax + 1e-12; t += ystep) {
    f << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy(t) << "\" x2=\"" << ml << "\" y2=\""
      << sy(t) << "\" stroke=\"#333\"/>\n";
    f << "<line x1=\"" << ml << "\" y1=\"" << sy(t) << "\" x2=\"" << ml + pw << "\" y2=\""
      << sy(t) << "\" stroke=\"#eee\"/>\n";
    f << "<text x=\"" << ml - 8 << "\" y=\"" << sy(t) + 4
      << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
      << "</text>\n";
  }
  f << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height_ - 12
    << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" << xlabel_
    << "</text>\n";
  f << "<text x=\"18\" y=\"" << mt + ph / 2
    << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
       "transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << ylabel_ << "</text>\n";

  // series
  for (const auto& s : series_) {
    f << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\""
      << s.stroke_width << "\" stroke-opacity=\"" << s.opacity << "\"";
    if (!s.dash.empty()) f << " stroke-dasharray=\"" << s.dash << "\"";
    f << " points=\"";
    bool pen_down = false;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isnan(s.x[i]) || std::isnan(s.y[i])) {
        if (pen_down) {
          f << "\"/>\n<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\""
            << s.stroke_width << "\" stroke-opacity=\"" << s.opacity << "\"";
          if (!s.dash.empty()) f << " stroke-dasharray=\"" << s.dash << "\"";
          f << " points=\"";
          pen_down = false;
        }
        continue;
      }
      f << fmt(sx(s.x[i])) << ',' << fmt(sy(s.y[i])) << ' ';
      pen_down = true;
    }
    f << "\"/>\n";
  }

  // legend: unique labels in insertion order
  std::vector<const Series*> legend;
  for (const auto& s : series_) {
    bool seen = false;
    for (const auto* l : legend) seen = seen || l->label == s.label;
    if (!seen && !s.label.empty()) legend.push_back(&s);
  }
  double ly = mt + 14;
  for (const auto* l : legend) {
    f << "<line x1=\"" << ml + pw - 170 << "\" y1=\"" << ly - 4 << "\" x2=\""
      << ml + pw - 140 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << l->color
      << "\" stroke-width=\"" << l->stroke_width << "\"";
    if (!l->dash.empty()) f << " stroke-dasharray=\"" << l->dash << "\"";
    f << "/>\n";
    f << "<text x=\"" << ml + pw - 134 << "\" y=\"" << ly
      << "\" font-size=\"11\" font-family=\"sans-serif\">" << l->label << "</text>\n";
    ly += 16;
  }
  f << "</svg>\n";
}

}  // namespace rbclab::lab
