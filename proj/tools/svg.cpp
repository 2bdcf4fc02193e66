#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace sage::cli {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

struct Frame {
  Range x, y;
  double px(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kWidth - kLeft - kRight); }
  double py(double v) const {
    return kHeight - kBottom - (v - y.lo) / (y.hi - y.lo) * (kHeight - kTop - kBottom);
  }
};

void open_svg(std::ostringstream& out, const std::string& title) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"15\">"
      << xml_escape(title) << "</text>\n";
}

void axes(std::ostringstream& out, const Frame& f, const std::string& xl, const std::string& yl) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  out << "<g stroke=\"#333\" stroke-width=\"1\" fill=\"none\">\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\"/>\n"
      << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\"/>\n"
      << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
    const double yv = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << y0 + 16
        << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n"
        << "<text x=\"" << x0 - 6 << "\" y=\"" << num(f.py(yv) + 4)
        << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
  }
  out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << xml_escape(xl) << "</text>\n"
      << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (y0 + y1) / 2 << ")\">" << xml_escape(yl) << "</text>\n</g>\n";
}

std::string polyline(const Frame& f, const std::vector<std::pair<double, double>>& pts) {
  std::ostringstream s;
  for (std::size_t i = 0; i < pts.size(); ++i)
    s << (i ? " " : "") << num(f.px(pts[i].first)) << ',' << num(f.py(pts[i].second));
  return s.str();
}

}  // namespace

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series) {
  Frame f;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) f.x.add(x), f.y.add(y);
  f.x.settle();
  f.y.settle();
  std::ostringstream out;
  open_svg(out, title);
  axes(out, f, x_label, y_label);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    out << "<polyline fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"2\" points=\""
        << polyline(f, s.points) << "\"/>\n";
    for (const auto& [x, y] : s.points)
      out << "<circle cx=\"" << num(f.px(x)) << "\" cy=\"" << num(f.py(y)) << "\" r=\"3.5\" fill=\""
          << color(i) << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(i);
    out << "<rect x=\"" << kWidth - kRight + 15 << "\" y=\"" << ly - 8
        << "\" width=\"12\" height=\"12\" fill=\"" << color(i) << "\"/>\n"
        << "<text x=\"" << kWidth - kRight + 32 << "\" y=\"" << ly + 2
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string scatter_plot(const std::string& title, const std::vector<ScatterPoint>& points,
                         const std::vector<PlotPath>& paths) {
  Frame f;
  for (const auto& p : points) f.x.add(p.x), f.y.add(p.y);
  for (const auto& p : paths)
    for (const auto& [x, y] : p.points) f.x.add(x), f.y.add(y);
  f.x.settle();
  f.y.settle();
  std::ostringstream out;
  open_svg(out, title);
  axes(out, f, "x[0]", "x[1]");
  for (const auto& p : paths) {
    if (p.emphasised)
      out << "<polyline fill=\"none\" stroke=\"#222\" stroke-width=\"2.5\" points=\"";
    else
      out << "<polyline fill=\"none\" stroke=\"" << color(p.color)
          << "\" stroke-width=\"1\" stroke-opacity=\"0.7\" points=\"";
    out << polyline(f, p.points) << "\"/>\n";
  }
  for (const auto& p : points)
    out << "<circle cx=\"" << num(f.px(p.x)) << "\" cy=\"" << num(f.py(p.y))
        << "\" r=\"2.5\" fill=\"" << color(p.color) << "\" fill-opacity=\"0.8\"/>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace sage::cli
