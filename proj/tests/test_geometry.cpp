#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "kedmd/geometry.hpp"
#include "kedmd/io.hpp"
#include "kedmd/random.hpp"
#include "support.hpp"

using namespace kedmd;
using kedmd::testing::square;

TEST_CASE("uniform grid counts and ordering") {
  CHECK(uniform_grid(square(2.0), 0.2).size() == 441);
  CHECK(uniform_grid(square(2.0), 0.1).size() == 1681);
  CHECK(uniform_grid(square(2.0), 0.05).size() == 6561);
  const PointCloud coarse = uniform_grid(square(2.0), 2.0);
  REQUIRE(coarse.size() == 9);
  CHECK(coarse.point(0) == Eigen::Vector2d(-2, -2));
  CHECK(coarse.point(1) == Eigen::Vector2d(-2, 0));
  CHECK(coarse.point(8) == Eigen::Vector2d(2, 2));
  const PointCloud line = uniform_grid(Box::cube(1, 0.0, 1.0), 0.5);
  REQUIRE(line.size() == 3);
  CHECK(line.point(1)(0) == 0.5);
  CHECK(line.point(2)(0) == 1.0);
  CHECK_THROWS_AS(uniform_grid(Box::cube(1, 0.1, 0.2), 1.0), std::invalid_argument);
  CHECK_THROWS_AS(uniform_grid(square(1.0), 0.0), std::invalid_argument);
}

TEST_CASE("uniform grid contains the origin exactly") {
  for (double delta : {0.2, 0.1, 0.05}) {
    CHECK(uniform_grid(square(2.0), delta).find(Eigen::Vector2d::Zero()).has_value());
  }
}

TEST_CASE("staggered grid avoids the lattice") {
  const PointCloud v = staggered_grid(square(2.0), 0.025);
  CHECK(v.size() == 160 * 160);
  CHECK(v.point(0)(0) == doctest::Approx(-1.9875));
  const PointCloud u = uniform_grid(square(2.0), 0.2);
  for (Index i = 0; i < v.size(); i += 97) CHECK(dist_to_cloud(v.point(i), u) > 0.01);
}

TEST_CASE("chebyshev nodes") {
  CHECK(chebyshev_grid(square(2.0), 21).size() == 441);
  const PointCloud two = chebyshev_grid(Box::cube(1, 0.0, 1.0), 2);
  REQUIRE(two.size() == 2);
  CHECK(two.point(0)(0) == 0.0);
  CHECK(two.point(1)(0) == 1.0);
  const PointCloud three = chebyshev_grid(Box::cube(1, -1.0, 1.0), 3);
  REQUIRE(three.size() == 3);
  CHECK(three.point(0)(0) == -1.0);
  CHECK(three.point(1)(0) == 0.0);
  CHECK(three.point(2)(0) == 1.0);
  // -cos(pi j / (m - 1)) on [-1, 1]
  const PointCloud five = chebyshev_grid(Box::cube(1, -1.0, 1.0), 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(five.point(j)(0) == doctest::Approx(-std::cos(M_PI * j / 4.0)).epsilon(1e-15));
  }
  CHECK(chebyshev_grid(square(2.0), 41).find(Eigen::Vector2d::Zero()).has_value());
  CHECK_THROWS_AS(chebyshev_grid(square(1.0), 1), std::invalid_argument);
}

TEST_CASE("distance to a cloud") {
  const PointCloud origin = kedmd::testing::points_of({{0, 0}});
  CHECK(dist_to_cloud(Eigen::Vector2d(3, 4), origin) == 5.0);
  const PointCloud grid = uniform_grid(square(1.0), 0.5);
  CHECK(dist_to_cloud(grid.point(7), grid) == 0.0);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd x = rng.uniform_vector(2, -1, 1);
    double brute = INFINITY;
    for (Index j = 0; j < grid.size(); ++j) brute = std::min(brute, (grid.point(j) - x).norm());
    CHECK(dist_to_cloud(x, grid) == doctest::Approx(brute).epsilon(1e-15));
  }
}

TEST_CASE("fill distance") {
  // Uniform grid: h = delta / sqrt(2), attained at cell centers.
  const PointCloud grid = uniform_grid(square(2.0), 0.2);
  CHECK(fill_distance(grid, square(2.0), 0.01) == doctest::Approx(0.2 / std::sqrt(2.0)).epsilon(1e-12));
  const PointCloud center = kedmd::testing::points_of({{0.5, 0.5}});
  CHECK(fill_distance(center, Box::cube(2, 0.0, 1.0), 0.01) ==
        doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
  const PointCloud probes = probe_grid(square(1.0), 0.1);
  CHECK(fill_distance(probes, square(1.0), 0.1) == 0.0);
}

TEST_CASE("fill distance does not increase when points are added") {
  const Box box = square(2.0);
  const double h1 = fill_distance(uniform_grid(box, 0.4), box, 0.02);
  const double h2 = fill_distance(uniform_grid(box, 0.2), box, 0.02);
  const double h3 = fill_distance(uniform_grid(box, 0.1), box, 0.02);
  CHECK(h2 <= h1);
  CHECK(h3 <= h2);
  Rng rng(5);
  PointCloud cloud(2);
  double previous = INFINITY;
  for (int i = 0; i < 40; ++i) {
    cloud.push_back(rng.uniform_vector(2, -2, 2));
    const double h = fill_distance(cloud, box, 0.05);
    CHECK(h <= previous);
    previous = h;
  }
}

TEST_CASE("nearest neighbors match a full sort") {
  Rng rng(6);
  Eigen::MatrixXd pts(2, 200);
  for (int j = 0; j < 200; ++j) pts.col(j) = rng.uniform_vector(2, -1, 1);
  const PointCloud cloud(pts);
  for (int q = 0; q < 100; ++q) {
    const Eigen::VectorXd x = rng.uniform_vector(2, -1, 1);
    std::vector<std::pair<double, Index>> all;
    for (Index i = 0; i < cloud.size(); ++i) all.emplace_back((cloud.point(i) - x).squaredNorm(), i);
    std::sort(all.begin(), all.end());
    const auto nn = nearest_neighbors(x, cloud, 10);
    REQUIRE(nn.size() == 10);
    for (std::size_t j = 0; j < nn.size(); ++j) CHECK(nn[j] == all[j].second);
  }
  CHECK(nearest_neighbors(cloud.point(17), cloud, 1) == std::vector<Index>{17});
  CHECK(nearest_neighbors(Eigen::Vector2d::Zero(), cloud, 200).size() == 200);
  CHECK_THROWS_AS(nearest_neighbors(Eigen::Vector2d::Zero(), cloud, 201), std::invalid_argument);
}

TEST_CASE("nearest neighbor ties resolve by index") {
  const PointCloud cloud = kedmd::testing::points_of({{1, 0}, {-1, 0}, {0, 1}, {0, -1}});
  CHECK(nearest_neighbors(Eigen::Vector2d::Zero(), cloud, 2) == std::vector<Index>{0, 1});
}

TEST_CASE("clusters") {
  SUBCASE("centers are the micro points") {
    const PointCloud grid = uniform_grid(square(1.0), 0.5);
    const Eigen::MatrixXd controls = Eigen::MatrixXd::Zero(1, grid.size());
    const auto clusters = build_clusters(grid, controls, grid, 2);
    CHECK(clusters.neighbor_indices.size() == static_cast<std::size_t>(grid.size()));
    for (Index l = 0; l < grid.size(); ++l) CHECK(clusters.neighbor_indices[static_cast<std::size_t>(l)][0] == l);
  }
  SUBCASE("points on a line") {
    const PointCloud micro = kedmd::testing::points_of({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
    Eigen::MatrixXd controls(1, 5);
    controls << 10, 11, 12, 13, 14;
    const PointCloud center = kedmd::testing::points_of({{2.9, 0}});
    const auto clusters = build_clusters(micro, controls, center, 3);
    CHECK(clusters.neighbor_indices[0] == std::vector<Index>{3, 2, 4});
    CHECK(clusters.controls[0](0, 0) == 13);
    CHECK(clusters.max_radius_eps == doctest::Approx(1.1));
  }
  SUBCASE("samples from epsilon balls stay within epsilon") {
    const PointCloud centers = chebyshev_grid(square(2.0), 11);
    const double eps = 1.0 / 121;
    Rng rng(7);
    PointCloud micro(2);
    for (Index l = 0; l < centers.size(); ++l) {
      for (int j = 0; j < 25; ++j) micro.push_back(rng.uniform_in_ball(centers.point(l), eps));
    }
    const Eigen::MatrixXd controls = Eigen::MatrixXd::Zero(1, micro.size());
    const auto clusters = build_clusters(micro, controls, centers, 25);
    CHECK(clusters.max_radius_eps <= eps);
    for (Index l = 0; l < centers.size(); ++l) {
      for (Index i : clusters.neighbor_indices[static_cast<std::size_t>(l)]) {
        CHECK((micro.point(i) - centers.point(l)).norm() <= clusters.max_radius_eps);
      }
    }
  }
  SUBCASE("too little data") {
    const PointCloud micro = kedmd::testing::points_of({{0, 0}, {1, 0}});
    CHECK_THROWS_AS(build_clusters(micro, Eigen::MatrixXd::Zero(1, 2), micro, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_clusters(micro, Eigen::MatrixXd::Zero(1, 2), micro, 1), std::invalid_argument);
  }
}

TEST_CASE("farthest point selection spreads out") {
  const PointCloud grid = uniform_grid(square(1.0), 0.25);
  const PointCloud chosen = farthest_point_centers(grid, 4, 0);
  REQUIRE(chosen.size() == 4);
  CHECK(chosen.pairwise_distinct());
  CHECK(chosen.point(1) == Eigen::Vector2d(1, 1));
}

TEST_CASE("point cloud invariants") {
  CHECK_THROWS_AS(PointCloud(Eigen::MatrixXd::Constant(2, 1, NAN)), std::invalid_argument);
  const PointCloud dup = kedmd::testing::points_of({{0, 0}, {1, 1}, {0, 0}});
  REQUIRE(dup.find_duplicate().has_value());
  CHECK(dup.find_duplicate()->first == 0);
  CHECK(dup.find_duplicate()->second == 2);
  CHECK_THROWS_AS(Box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0)), std::invalid_argument);
}

TEST_CASE("point cloud CSV round trip") {
  const auto path = std::filesystem::temp_directory_path() / "kedmd_geometry_cloud.csv";
  const PointCloud grid = chebyshev_grid(square(2.0), 7);
  write_csv(grid, path);
  CHECK(read_text(path).rfind("x1,x2\n", 0) == 0);
  const PointCloud back = read_point_cloud_csv(path);
  CHECK(back.matrix() == grid.matrix());
  std::filesystem::remove(path);
}
