#pragma once

// Minimal static SVG charts for report output.

#include <string>
#include <vector>

namespace saetrack::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Bar {
  double lo = 0;
  double hi = 0;
  double count = 0;
};

struct Point {
  double x = 0;
  double y = 0;
  int group = 0;  // colour index
};

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series);
std::string histogram(const std::string& title, const std::string& x_label,
                      const std::vector<Bar>& bars);
/// `legend` names the groups in colour order. Points of one series (same `path` id) are joined
/// by a faint polyline when `paths` is non-empty.
std::string scatter(const std::string& title, const std::vector<Point>& points,
                    const std::vector<std::string>& legend,
                    const std::vector<std::vector<std::size_t>>& paths = {});

std::string escape(const std::string& text);

}  // namespace saetrack::svg
