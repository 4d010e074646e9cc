#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "kedmd/geometry.hpp"
#include "kedmd/wendland.hpp"

namespace kedmd::testing {

inline Box square(double half) { return Box::cube(2, -half, half); }

/// Wendland k = 1 in the plane with support the diameter of [-2, 2]^2.
inline WendlandKernel planar_kernel(int smoothness = 1) {
  return WendlandKernel(2, smoothness, 4.0 * std::sqrt(2.0));
}

/// The staggered validation grid with spacing 0.025 on [-2, 2]^2.
inline PointCloud validation_grid(double half = 2.0, double delta = 0.025) {
  return staggered_grid(square(half), delta);
}

inline PointCloud points_of(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> pts;
  for (auto r : rows) pts.emplace_back(r);
  Eigen::MatrixXd m(static_cast<Index>(pts.front().size()), static_cast<Index>(pts.size()));
  for (std::size_t j = 0; j < pts.size(); ++j) {
    for (std::size_t i = 0; i < pts[j].size(); ++i) m(static_cast<Index>(i), static_cast<Index>(j)) = pts[j][i];
  }
  return PointCloud(m);
}

}  // namespace kedmd::testing
