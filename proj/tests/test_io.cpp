#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "kedmd/io.hpp"
#include "kedmd/random.hpp"
#include "kedmd/svg.hpp"
#include "support.hpp"

using namespace kedmd;

TEST_CASE("doubles survive a text round trip") {
  Rng rng(41);
  for (int t = 0; t < 1000; ++t) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
    CHECK(parse_double(format_double(v)) == v);
  }
  for (double v : {0.0, -0.0, 1.0, 0.1, std::numeric_limits<double>::min(), std::numeric_limits<double>::max(),
                   std::numeric_limits<double>::denorm_min()}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(parse_double(" +2.5\r") == 2.5);
  CHECK_THROWS_AS(parse_double("2.5x"), IoError);
  CHECK_THROWS_AS(parse_double(""), IoError);
}

TEST_CASE("csv tables") {
  const auto path = std::filesystem::temp_directory_path() / "kedmd_table.csv";
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 2, 0.1, -3e-300, 5, 6;
  write_csv(path, {"a", "b"}, rows);
  CHECK(read_text(path).substr(0, 4) == "a,b\n");
  const CsvTable table = read_csv(path);
  CHECK(table.header == std::vector<std::string>{"a", "b"});
  CHECK(table.rows == rows);
  CHECK(table.column("b") == 1);
  CHECK_THROWS_AS((void)table.column("c"), IoError);

  write_text(path, "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(read_csv(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_csv(path), IoError);
  CHECK_THROWS_AS(write_csv(path, {"a"}, rows), IoError);
}

TEST_CASE("numbered names") {
  CHECK(numbered_names("x", 3) == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK(numbered_names("u", 0).empty());
}

TEST_CASE("log scale") {
  Eigen::VectorXd v(4);
  v << 3e-5, 0.0, 2e-2, -1.0;
  const LogScale s = log_scale_for(v);
  CHECK(s.lo == -5.0);
  CHECK(s.hi == -1.0);
  const LogScale flat = log_scale_for(Eigen::VectorXd::Constant(3, 1.0));
  CHECK(flat.hi > flat.lo);
}

TEST_CASE("heatmap svg declares its bounds") {
  const PointCloud grid = kedmd::testing::validation_grid(1.0, 0.25);
  Eigen::VectorXd values(grid.size());
  for (Index i = 0; i < grid.size(); ++i) values(i) = 1e-6 + grid.point(i).squaredNorm();
  const auto path = std::filesystem::temp_directory_path() / "kedmd_heatmap.svg";
  const LogScale scale = log_scale_for(values);
  write_heatmap_svg(path, grid, values, "error", scale);
  const std::string svg = read_text(path);
  CHECK(svg.find("lo=" + format_double(scale.lo)) != std::string::npos);
  CHECK(svg.find("hi=" + format_double(scale.hi)) != std::string::npos);
  CHECK(svg.find("x=[-1,1]") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t rects = 0;
  for (std::size_t pos = 0; (pos = svg.find("<rect", pos)) != std::string::npos; ++pos) ++rects;
  CHECK(rects >= static_cast<std::size_t>(grid.size()));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_heatmap_svg(path, grid, values.head(3), "e", scale), std::invalid_argument);
}
