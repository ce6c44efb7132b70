#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace saetrack::svg {

namespace {

constexpr double kWidth = 640;
constexpr double kHeight = 400;
constexpr double kLeft = 64;
constexpr double kRight = 160;  // legend column
constexpr double kTop = 40;
constexpr double kBottom = 48;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* colour(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const {
    return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

Frame make_frame(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

void open(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
}

void axes(std::ostringstream& os, const Frame& f, const std::string& x_label,
          const std::string& y_label) {
  const double left = kLeft;
  const double right = kWidth - kRight;
  const double top = kTop;
  const double bottom = kHeight - kBottom;
  os << "<g stroke=\"#333\" fill=\"none\">"
     << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
     << "\"/><line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
     << "\"/></g>\n";
  os << "<g font-size=\"10\" fill=\"#333\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << bottom + 14
       << "\" text-anchor=\"middle\">" << tick(xv) << "</text>";
    os << "<text x=\"" << left - 6 << "\" y=\"" << num(f.py(yv) + 3)
       << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
  }
  os << "<text x=\"" << (left + right) / 2 << "\" y=\"" << kHeight - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << (top + bottom) / 2
     << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(y_label)
     << "</text>\n</g>\n";
}

void legend(std::ostringstream& os, const std::vector<std::string>& names) {
  const double x = kWidth - kRight + 12;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 16.0 * static_cast<double>(i);
    os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
       << colour(i) << "\"/><text x=\"" << x + 14 << "\" y=\"" << y + 9
       << "\" font-size=\"11\">" << escape(names[i]) << "</text>\n";
  }
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0;
  const Frame f = make_frame(x0, x1, y0, y1);
  std::ostringstream os;
  open(os, title);
  axes(os, f, x_label, y_label);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    names.push_back(s.name);
    os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << colour(i) << "\" points=\"";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      os << (k ? " " : "") << num(f.px(s.x[k])) << ',' << num(f.py(s.y[k]));
    }
    os << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      os << "<circle r=\"2.5\" fill=\"" << colour(i) << "\" cx=\"" << num(f.px(s.x[k]))
         << "\" cy=\"" << num(f.py(s.y[k])) << "\"/>";
    }
    os << '\n';
  }
  legend(os, names);
  os << "</svg>\n";
  return os.str();
}

std::string histogram(const std::string& title, const std::string& x_label,
                      const std::vector<Bar>& bars) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, peak = 0;
  for (const auto& b : bars) {
    x0 = std::min(x0, b.lo);
    x1 = std::max(x1, b.hi);
    peak = std::max(peak, b.count);
  }
  if (!std::isfinite(x0)) x0 = x1 = 0;
  Frame f = make_frame(x0, x1, 0, peak);
  f.y0 = 0;
  std::ostringstream os;
  open(os, title);
  axes(os, f, x_label, "count");
  for (const auto& b : bars) {
    if (b.count <= 0) continue;
    const double left = f.px(b.lo);
    const double top = f.py(b.count);
    os << "<rect fill=\"" << colour(0) << "\" stroke=\"white\" x=\"" << num(left) << "\" y=\""
       << num(top) << "\" width=\"" << num(f.px(b.hi) - left) << "\" height=\""
       << num(f.py(0) - top) << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string scatter(const std::string& title, const std::vector<Point>& points,
                    const std::vector<std::string>& legend_names,
                    const std::vector<std::vector<std::size_t>>& paths) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  if (!std::isfinite(x0)) x0 = x1 = y0 = y1 = 0;
  const Frame f = make_frame(x0, x1, y0, y1);
  std::ostringstream os;
  open(os, title);
  axes(os, f, "PC1", "PC2");
  for (const auto& path : paths) {
    os << "<polyline fill=\"none\" stroke=\"#bbb\" stroke-width=\"1\" points=\"";
    for (std::size_t k = 0; k < path.size(); ++k) {
      const auto& p = points.at(path[k]);
      os << (k ? " " : "") << num(f.px(p.x)) << ',' << num(f.py(p.y));
    }
    os << "\"/>\n";
  }
  for (const auto& p : points) {
    os << "<circle r=\"3\" fill=\"" << colour(static_cast<std::size_t>(p.group)) << "\" cx=\""
       << num(f.px(p.x)) << "\" cy=\"" << num(f.py(p.y)) << "\"/>";
  }
  os << '\n';
  legend(os, legend_names);
  os << "</svg>\n";
  return os.str();
}

}  // namespace saetrack::svg
