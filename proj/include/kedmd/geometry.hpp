#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace kedmd {

using Index = Eigen::Index;

/// Ordered set of points in R^n, stored one point per column.
class PointCloud {
 public:
  explicit PointCloud(int dim = 1);
  /// Throws std::invalid_argument on non-finite entries or zero rows.
  explicit PointCloud(Eigen::MatrixXd columns);

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(points_.rows()); }
  [[nodiscard]] Index size() const noexcept { return points_.cols(); }
  [[nodiscard]] bool empty() const noexcept { return points_.cols() == 0; }
  [[nodiscard]] auto point(Index i) const { return points_.col(i); }
  [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return points_; }

  void push_back(const Eigen::Ref<const Eigen::VectorXd>& x);
  /// Points of `this` followed by points of `other`.
  [[nodiscard]] PointCloud concatenated(const PointCloud& other) const;
  [[nodiscard]] PointCloud subset(const std::vector<Index>& indices) const;

  /// First pair (i, j), i < j, of identical points, if any.
  [[nodiscard]] std::optional<std::pair<Index, Index>> find_duplicate() const;
  [[nodiscard]] bool pairwise_distinct() const { return !find_duplicate().has_value(); }
  /// Index of a point equal to x, if present.
  [[nodiscard]] std::optional<Index> find(const Eigen::Ref<const Eigen::VectorXd>& x,
                                          double tolerance = 0.0) const;

 private:
  Eigen::MatrixXd points_;
};

/// Axis-aligned box [lower, upper].
class Box {
 public:
  /// Throws std::invalid_argument unless lower < upper componentwise.
  Box(Eigen::VectorXd lower, Eigen::VectorXd upper);
  /// [lo, hi]^n
  static Box cube(int dim, double lo, double hi);

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(lower_.size()); }
  [[nodiscard]] const Eigen::VectorXd& lower() const noexcept { return lower_; }
  [[nodiscard]] const Eigen::VectorXd& upper() const noexcept { return upper_; }
  [[nodiscard]] double diameter() const { return (upper_ - lower_).norm(); }
  [[nodiscard]] bool contains(const Eigen::Ref<const Eigen::VectorXd>& x,
                              double tolerance = 0.0) const;

 private:
  Eigen::VectorXd lower_;
  Eigen::VectorXd upper_;
};

/// Regression clusters: N nearest micro points for every center.
struct ClusterAssignment {
  PointCloud centers;
  std::vector<std::vector<Index>> neighbor_indices;
  /// controls[l] is m x N, column j belonging to neighbor_indices[l][j].
  std::vector<Eigen::MatrixXd> controls;
  double max_radius_eps = 0.0;
};

/// Lattice points of delta * Z^n inside the closed box, first axis slowest.
/// Throws std::invalid_argument if delta <= 0 or no lattice point is inside.
PointCloud uniform_grid(const Box& box, double delta);

/// Offset lattice (delta * Z + delta / 2)^n inside the closed box.
PointCloud staggered_grid(const Box& box, double delta);

/// Tensor product of Chebyshev-Gauss-Lobatto nodes mapped affinely onto each
/// axis; endpoints included, ascending per axis.
PointCloud chebyshev_grid(const Box& box, int points_per_axis);

/// Grid with both box faces included and spacing at most `resolution` per axis.
PointCloud probe_grid(const Box& box, double resolution);

double dist_to_cloud(const Eigen::Ref<const Eigen::VectorXd>& x, const PointCloud& cloud);

/// Max over probe_grid(box, resolution) of dist_to_cloud. Lower bound on the
/// true fill distance, short by at most resolution * sqrt(n) / 2.
double fill_distance(const PointCloud& cloud, const Box& box, double resolution);

/// Indices of the n_neighbors closest points, ascending distance, ties by index.
std::vector<Index> nearest_neighbors(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const PointCloud& cloud, Index n_neighbors);

/// micro_controls is m x (micro size). Throws std::invalid_argument when the
/// micro data cannot fill a cluster of size n_neighbors >= m + 1.
ClusterAssignment build_clusters(const PointCloud& micro, const Eigen::MatrixXd& micro_controls,
                                 const PointCloud& centers, Index n_neighbors);

/// Greedy farthest-point selection of `count` points, seeded with `first`.
PointCloud farthest_point_centers(const PointCloud& cloud, Index count, Index first = 0);

/// CSV with header x1,...,xn and one point per row.
void write_csv(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud read_point_cloud_csv(const std::filesystem::path& path);

}  // namespace kedmd
