#include "kedmd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "kedmd/io.hpp"

namespace kedmd {

PointCloud::PointCloud(int dim) : points_(dim, 0) {
  if (dim < 1) throw std::invalid_argument("PointCloud: dimension must be >= 1");
}

PointCloud::PointCloud(Eigen::MatrixXd columns) : points_(std::move(columns)) {
  if (points_.rows() < 1) throw std::invalid_argument("PointCloud: dimension must be >= 1");
  if (!points_.allFinite()) throw std::invalid_argument("PointCloud: non-finite coordinate");
}

void PointCloud::push_back(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != points_.rows()) throw std::invalid_argument("PointCloud: dimension mismatch");
  if (!x.allFinite()) throw std::invalid_argument("PointCloud: non-finite coordinate");
  points_.conservativeResize(Eigen::NoChange, points_.cols() + 1);
  points_.col(points_.cols() - 1) = x;
}

PointCloud PointCloud::concatenated(const PointCloud& other) const {
  if (other.dim() != dim()) throw std::invalid_argument("PointCloud: dimension mismatch");
  Eigen::MatrixXd joined(dim(), size() + other.size());
  joined << points_, other.points_;
  return PointCloud(std::move(joined));
}

PointCloud PointCloud::subset(const std::vector<Index>& indices) const {
  Eigen::MatrixXd picked(dim(), static_cast<Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    picked.col(static_cast<Index>(j)) = points_.col(indices[j]);
  }
  return PointCloud(std::move(picked));
}

std::optional<std::pair<Index, Index>> PointCloud::find_duplicate() const {
  // Sort lexicographically, then compare neighbours.
  std::vector<Index> order(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) order[static_cast<std::size_t>(i)] = i;
  auto less = [this](Index a, Index b) {
    for (Index r = 0; r < points_.rows(); ++r) {
      if (points_(r, a) != points_(r, b)) return points_(r, a) < points_(r, b);
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (points_.col(order[k - 1]) == points_.col(order[k])) {
      return std::pair{std::min(order[k - 1], order[k]), std::max(order[k - 1], order[k])};
    }
  }
  return std::nullopt;
}

std::optional<Index> PointCloud::find(const Eigen::Ref<const Eigen::VectorXd>& x,
                                      double tolerance) const {
  if (x.size() != dim()) throw std::invalid_argument("PointCloud: dimension mismatch");
  for (Index i = 0; i < size(); ++i) {
    if ((points_.col(i) - x).lpNorm<Eigen::Infinity>() <= tolerance) return i;
  }
  return std::nullopt;
}

Box::Box(Eigen::VectorXd lower, Eigen::VectorXd upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() < 1 || lower_.size() != upper_.size()) {
    throw std::invalid_argument("Box: bounds must have equal, positive dimension");
  }
  if (!lower_.allFinite() || !upper_.allFinite() || !(lower_.array() < upper_.array()).all()) {
    throw std::invalid_argument("Box: requires finite lower < upper componentwise");
  }
}

Box Box::cube(int dim, double lo, double hi) {
  return Box(Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi));
}

bool Box::contains(const Eigen::Ref<const Eigen::VectorXd>& x, double tolerance) const {
  if (x.size() != dim()) throw std::invalid_argument("Box: dimension mismatch");
  return ((x - lower_).array() >= -tolerance).all() && ((upper_ - x).array() >= -tolerance).all();
}

namespace {

// Tensor product of per-axis coordinates; the first axis varies slowest.
PointCloud tensor_product(const std::vector<std::vector<double>>& axes) {
  const int dim = static_cast<int>(axes.size());
  Index count = 1;
  for (const auto& axis : axes) count *= static_cast<Index>(axis.size());
  Eigen::MatrixXd points(dim, count);
  std::vector<std::size_t> digit(axes.size(), 0);
  for (Index j = 0; j < count; ++j) {
    for (int a = 0; a < dim; ++a) points(a, j) = axes[static_cast<std::size_t>(a)][digit[a]];
    for (int a = dim - 1; a >= 0; --a) {
      if (++digit[a] < axes[static_cast<std::size_t>(a)].size()) break;
      digit[a] = 0;
    }
  }
  return PointCloud(std::move(points));
}

constexpr double kLatticeSlack = 1e-9;

std::vector<double> lattice_axis(double lo, double hi, double delta, double offset) {
  const auto first = static_cast<long long>(std::ceil(lo / delta - offset - kLatticeSlack));
  const auto last = static_cast<long long>(std::floor(hi / delta - offset + kLatticeSlack));
  std::vector<double> axis;
  for (long long k = first; k <= last; ++k) axis.push_back((static_cast<double>(k) + offset) * delta);
  return axis;
}

PointCloud lattice(const Box& box, double delta, double offset) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("grid spacing must be positive");
  }
  std::vector<std::vector<double>> axes;
  for (int a = 0; a < box.dim(); ++a) {
    axes.push_back(lattice_axis(box.lower()(a), box.upper()(a), delta, offset));
    if (axes.back().empty()) {
      throw std::invalid_argument("grid spacing " + format_double(delta) +
                                  " leaves no lattice point inside the box");
    }
  }
  return tensor_product(axes);
}

}  // namespace

PointCloud uniform_grid(const Box& box, double delta) { return lattice(box, delta, 0.0); }

PointCloud staggered_grid(const Box& box, double delta) { return lattice(box, delta, 0.5); }

PointCloud chebyshev_grid(const Box& box, int points_per_axis) {
  if (points_per_axis < 2) throw std::invalid_argument("chebyshev_grid: need >= 2 points per axis");
  const int m = points_per_axis;
  std::vector<std::vector<double>> axes;
  for (int a = 0; a < box.dim(); ++a) {
    const double mid = 0.5 * (box.lower()(a) + box.upper()(a));
    const double half = 0.5 * (box.upper()(a) - box.lower()(a));
    std::vector<double> axis(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      // sin form of -cos(pi j / (m-1)): exactly symmetric, exact 0 and +-1.
      const double t = std::sin(std::numbers::pi * (2.0 * j - (m - 1)) / (2.0 * (m - 1)));
      axis[static_cast<std::size_t>(j)] = mid + half * t;
    }
    axis.front() = box.lower()(a);
    axis.back() = box.upper()(a);
    axes.push_back(std::move(axis));
  }
  return tensor_product(axes);
}

PointCloud probe_grid(const Box& box, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("probe_grid: resolution must be positive");
  std::vector<std::vector<double>> axes;
  for (int a = 0; a < box.dim(); ++a) {
    const double lo = box.lower()(a);
    const double width = box.upper()(a) - lo;
    const auto intervals = std::max<long long>(1, static_cast<long long>(std::ceil(width / resolution)));
    std::vector<double> axis;
    for (long long j = 0; j <= intervals; ++j) {
      axis.push_back(lo + width * static_cast<double>(j) / static_cast<double>(intervals));
    }
    axis.back() = box.upper()(a);
    axes.push_back(std::move(axis));
  }
  return tensor_product(axes);
}

double dist_to_cloud(const Eigen::Ref<const Eigen::VectorXd>& x, const PointCloud& cloud) {
  if (x.size() != cloud.dim()) throw std::invalid_argument("dist_to_cloud: dimension mismatch");
  if (cloud.empty()) throw std::invalid_argument("dist_to_cloud: empty cloud");
  return std::sqrt((cloud.matrix().colwise() - x).colwise().squaredNorm().minCoeff());
}

double fill_distance(const PointCloud& cloud, const Box& box, double resolution) {
  if (cloud.empty()) throw std::invalid_argument("fill_distance: empty cloud");
  if (cloud.dim() != box.dim()) throw std::invalid_argument("fill_distance: dimension mismatch");
  const PointCloud probes = probe_grid(box, resolution);
  const Eigen::MatrixXd& pts = cloud.matrix();
  const Index d = cloud.size();
  double worst = 0.0;  // squared
  Index hint = 0;
  for (Index p = 0; p < probes.size(); ++p) {
    const auto probe = probes.point(p);
    // A probe only matters if every cloud point is farther than the running max;
    // start at the previous nearest point so most probes exit after a few checks.
    double best = std::numeric_limits<double>::infinity();
    const Index start = hint;
    for (Index step = 0; step < d; ++step) {
      const Index i = (start + step) % d;
      const double d2 = (pts.col(i) - probe).squaredNorm();
      if (d2 < best) {
        best = d2;
        hint = i;
        if (best <= worst) break;
      }
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

std::vector<Index> nearest_neighbors(const Eigen::Ref<const Eigen::VectorXd>& x,
                                     const PointCloud& cloud, Index n_neighbors) {
  if (x.size() != cloud.dim()) throw std::invalid_argument("nearest_neighbors: dimension mismatch");
  if (n_neighbors < 0 || n_neighbors > cloud.size()) {
    throw std::invalid_argument("nearest_neighbors: requested " + std::to_string(n_neighbors) +
                                " of " + std::to_string(cloud.size()) + " points");
  }
  const Eigen::VectorXd d2 = (cloud.matrix().colwise() - x).colwise().squaredNorm().transpose();
  std::vector<Index> order(static_cast<std::size_t>(cloud.size()));
  for (Index i = 0; i < cloud.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::partial_sort(order.begin(), order.begin() + n_neighbors, order.end(),
                    [&d2](Index a, Index b) { return d2(a) < d2(b) || (d2(a) == d2(b) && a < b); });
  order.resize(static_cast<std::size_t>(n_neighbors));
  return order;
}

ClusterAssignment build_clusters(const PointCloud& micro, const Eigen::MatrixXd& micro_controls,
                                 const PointCloud& centers, Index n_neighbors) {
  if (micro_controls.cols() != micro.size()) {
    throw std::invalid_argument("build_clusters: controls not aligned with micro points");
  }
  if (centers.dim() != micro.dim()) throw std::invalid_argument("build_clusters: dimension mismatch");
  const Index m = micro_controls.rows();
  if (n_neighbors < m + 1) {
    throw std::invalid_argument("build_clusters: cluster size N=" + std::to_string(n_neighbors) +
                                " must be >= m+1=" + std::to_string(m + 1));
  }
  if (micro.size() < n_neighbors) {
    throw std::invalid_argument("build_clusters: insufficient micro data (" +
                                std::to_string(micro.size()) + " points for N=" +
                                std::to_string(n_neighbors) + ")");
  }
  ClusterAssignment clusters{centers, {}, {}, 0.0};
  clusters.neighbor_indices.reserve(static_cast<std::size_t>(centers.size()));
  clusters.controls.reserve(static_cast<std::size_t>(centers.size()));
  for (Index l = 0; l < centers.size(); ++l) {
    auto neighbors = nearest_neighbors(centers.point(l), micro, n_neighbors);
    Eigen::MatrixXd controls(m, n_neighbors);
    for (Index j = 0; j < n_neighbors; ++j) {
      const Index i = neighbors[static_cast<std::size_t>(j)];
      controls.col(j) = micro_controls.col(i);
      clusters.max_radius_eps =
          std::max(clusters.max_radius_eps, (micro.point(i) - centers.point(l)).norm());
    }
    clusters.neighbor_indices.push_back(std::move(neighbors));
    clusters.controls.push_back(std::move(controls));
  }
  return clusters;
}

PointCloud farthest_point_centers(const PointCloud& cloud, Index count, Index first) {
  if (count < 1 || count > cloud.size()) {
    throw std::invalid_argument("farthest_point_centers: invalid count");
  }
  if (first < 0 || first >= cloud.size()) throw std::invalid_argument("farthest_point_centers: bad seed");
  std::vector<Index> chosen{first};
  Eigen::VectorXd d2 = (cloud.matrix().colwise() - cloud.point(first)).colwise().squaredNorm().transpose();
  while (static_cast<Index>(chosen.size()) < count) {
    Index next = 0;
    d2.maxCoeff(&next);
    chosen.push_back(next);
    d2 = d2.cwiseMin((cloud.matrix().colwise() - cloud.point(next)).colwise().squaredNorm().transpose());
  }
  return cloud.subset(chosen);
}

void write_csv(const PointCloud& cloud, const std::filesystem::path& path) {
  write_csv(path, numbered_names("x", cloud.dim()), cloud.matrix().transpose());
}

PointCloud read_point_cloud_csv(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  if (table.header.empty()) throw IoError(path.string() + ": no columns");
  if (table.header != numbered_names("x", static_cast<int>(table.header.size()))) {
    throw IoError(path.string() + ": expected header x1,...,xn");
  }
  return PointCloud(table.rows.transpose());
}

}  // namespace kedmd
