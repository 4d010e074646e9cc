#include "kedmd/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

#include "kedmd/io.hpp"

namespace kedmd {

LogScale log_scale_for(const Eigen::VectorXd& values) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < values.size(); ++i) {
    if (values(i) > 0.0 && std::isfinite(values(i))) {
      lo = std::min(lo, values(i));
      hi = std::max(hi, values(i));
    }
  }
  if (!std::isfinite(lo)) return {-16.0, 0.0};
  LogScale scale{std::floor(std::log10(lo)), std::ceil(std::log10(hi))};
  if (scale.hi <= scale.lo) scale.hi = scale.lo + 1.0;
  return scale;
}

namespace {

// Dark blue -> teal -> yellow, linear in between.
std::string color(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0) * (stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double w = t - static_cast<double>(i);
  char buffer[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<int>(std::lround((1 - w) * stops[i][c] + w * stops[i + 1][c]));
  std::snprintf(buffer, sizeof(buffer), "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buffer;
}

double min_gap(std::vector<double> coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < coords.size(); ++i) gap = std::min(gap, coords[i] - coords[i - 1]);
  return std::isfinite(gap) ? gap : 1.0;
}

std::vector<double> row_values(const Eigen::MatrixXd& p, Index row) {
  std::vector<double> v(static_cast<std::size_t>(p.cols()));
  for (Index i = 0; i < p.cols(); ++i) v[static_cast<std::size_t>(i)] = p(row, i);
  return v;
}

std::string fixed(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.3f", v);
  return buffer;
}

}  // namespace

void write_heatmap_svg(const std::filesystem::path& path, const PointCloud& points,
                       const Eigen::VectorXd& values, const std::string& title, const LogScale& scale) {
  if (points.dim() != 2) throw std::invalid_argument("write_heatmap_svg: planar points required");
  if (values.size() != points.size()) throw std::invalid_argument("write_heatmap_svg: one value per point");
  if (points.empty()) throw std::invalid_argument("write_heatmap_svg: no points");

  const Eigen::MatrixXd& p = points.matrix();
  const double gx = min_gap(row_values(p, 0));
  const double gy = min_gap(row_values(p, 1));

  const double x0 = p.row(0).minCoeff() - gx / 2;
  const double x1 = p.row(0).maxCoeff() + gx / 2;
  const double y0 = p.row(1).minCoeff() - gy / 2;
  const double y1 = p.row(1).maxCoeff() + gy / 2;
  constexpr double kSize = 480.0;
  constexpr double kMargin = 40.0;
  const double sx = kSize / (x1 - x0);
  const double sy = kSize / (y1 - y0);

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<!-- log10 color scale: lo=" + format_double(scale.lo) + " hi=" + format_double(scale.hi) +
         " x=[" + format_double(x0) + "," + format_double(x1) + "] y=[" + format_double(y0) + "," +
         format_double(y1) + "] -->\n";
  const double width = kSize + 2 * kMargin + 90;
  const double height = kSize + 2 * kMargin;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width) + "\" height=\"" +
         fixed(height) + "\" viewBox=\"0 0 " + fixed(width) + " " + fixed(height) + "\">\n";
  out += "<title>" + title + "</title>\n";
  out += "<text x=\"" + fixed(kMargin) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">" +
         title + "</text>\n";
  out += "<g shape-rendering=\"crispEdges\">\n";
  const double span = scale.hi - scale.lo;
  for (Index i = 0; i < p.cols(); ++i) {
    const double v = values(i);
    const double t = v > 0.0 ? (std::log10(v) - scale.lo) / span : 0.0;
    const double px = kMargin + (p(0, i) - gx / 2 - x0) * sx;
    const double py = kMargin + (y1 - p(1, i) - gy / 2) * sy;
    out += "<rect x=\"" + fixed(px) + "\" y=\"" + fixed(py) + "\" width=\"" + fixed(gx * sx + 0.02) +
           "\" height=\"" + fixed(gy * sy + 0.02) + "\" fill=\"" + color(t) + "\"/>\n";
  }
  out += "</g>\n";

  // Legend: one band per decade.
  const int decades = static_cast<int>(std::lround(span));
  const double band = kSize / std::max(decades, 1);
  const double lx = kMargin + kSize + 20;
  for (int d = 0; d < decades; ++d) {
    const double t = (d + 0.5) / decades;
    const double y = kMargin + kSize - (d + 1) * band;
    out += "<rect x=\"" + fixed(lx) + "\" y=\"" + fixed(y) + "\" width=\"20\" height=\"" + fixed(band) +
           "\" fill=\"" + color(t) + "\"/>\n";
  }
  for (int d = 0; d <= decades; ++d) {
    const double y = kMargin + kSize - d * band;
    out += "<text x=\"" + fixed(lx + 26) + "\" y=\"" + fixed(y + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">1e" +
           std::to_string(static_cast<int>(scale.lo) + d) + "</text>\n";
  }
  out += "</svg>\n";
  write_text(path, out);
}

}  // namespace kedmd
