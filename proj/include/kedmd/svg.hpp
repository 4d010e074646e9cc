#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "kedmd/geometry.hpp"

namespace kedmd {

/// Color scale bounds in log10 units.
struct LogScale {
  double lo = 0.0;
  double hi = 0.0;
};

/// Smallest integer decade range covering the positive entries of `values`.
LogScale log_scale_for(const Eigen::VectorXd& values);

/// Raster of values on a planar grid, colored by log10(value) clamped to
/// `scale`; non-positive values take the bottom color. The scale is written
/// into an XML comment at the top of the file and into a legend.
void write_heatmap_svg(const std::filesystem::path& path, const PointCloud& points,
                       const Eigen::VectorXd& values, const std::string& title,
                       const LogScale& scale);

}  // namespace kedmd
