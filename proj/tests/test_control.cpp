#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "kedmd/control.hpp"
#include "kedmd/io.hpp"
#include "kedmd/systems.hpp"
#include "support.hpp"

using namespace kedmd;
using kedmd::testing::planar_kernel;
using kedmd::testing::square;

namespace {

const ControlAffineSystem& duffing() {
  static const ControlAffineSystem system = *duffing_system().control;
  return system;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("kedmd_control_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

ClusterFitResult exact_fit(double delta, Index N, std::uint64_t seed = 7) {
  const PointCloud centers = uniform_grid(square(2.0), delta);
  Rng rng(seed);
  const ControlDataset data = sample_exact_centers(duffing(), centers, N, rng);
  return fit_cluster_regression(data, centers, N, planar_kernel(), 0.0);
}

}  // namespace

TEST_CASE("dataset validation") {
  const PointCloud x = kedmd::testing::points_of({{0, 0}, {1, 1}});
  CHECK_NOTHROW(ControlDataset(x, Eigen::RowVector2d(0.5, -1.0), x, 1.0));
  CHECK_THROWS_AS(ControlDataset(x, Eigen::RowVector2d(0.5, -1.5), x, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ControlDataset(x, Eigen::RowVector3d(0, 0, 0), x, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ControlDataset(x, Eigen::RowVector2d(NAN, 0.0), x, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ControlDataset(x, Eigen::RowVector2d(0, 0), x, 0.0), std::invalid_argument);
}

TEST_CASE("sampling") {
  const PointCloud centers = uniform_grid(square(2.0), 1.0);
  Rng rng(1);
  const ControlDataset exact = sample_exact_centers(duffing(), centers, 4, rng);
  CHECK(exact.size() == 100);
  CHECK(exact.control_dim() == 1);
  CHECK(exact.controls.cwiseAbs().maxCoeff() <= duffing().control_bound);
  for (Index i = 0; i < exact.size(); ++i) {
    CHECK(exact.states.point(i) == centers.point(i / 4));
    CHECK((exact.successors.point(i) - duffing().step(exact.states.point(i), exact.controls.col(i))).norm() == 0.0);
  }
  const ControlDataset balls = sample_epsilon_balls(duffing(), centers, 4, 0.1, rng);
  for (Index i = 0; i < balls.size(); ++i) CHECK((balls.states.point(i) - centers.point(i / 4)).norm() <= 0.1);
  CHECK_THROWS_AS(sample_epsilon_balls(duffing(), centers, 4, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_exact_centers(duffing(), centers, 0, rng), std::invalid_argument);

  Rng again(1);
  const ControlDataset repeat = sample_exact_centers(duffing(), centers, 4, again);
  CHECK(repeat.controls == exact.controls);
}

TEST_CASE("dataset csv round trip") {
  Rng rng(2);
  const ControlDataset data = sample_epsilon_balls(duffing(), uniform_grid(square(2.0), 1.0), 3, 0.2, rng);
  const auto path = std::filesystem::temp_directory_path() / "kedmd_dataset.csv";
  data.write_csv(path);
  CHECK(read_csv(path).header == std::vector<std::string>{"x1", "x2", "u1", "xp1", "xp2"});
  const ControlDataset back = ControlDataset::read_csv(path, 2.0);
  CHECK(back.states.matrix() == data.states.matrix());
  CHECK(back.controls == data.controls);
  CHECK(back.successors.matrix() == data.successors.matrix());
  write_text(path, "x1,x2,u1,xp1\n0,0,0,0\n");
  CHECK_THROWS_AS(ControlDataset::read_csv(path, 2.0), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("cluster least squares") {
  // Exact affine data: H is recovered.
  Eigen::Matrix<double, 2, 3> h;
  h << 1.0, 2.0, -1.0, 0.5, 0.0, 3.0;
  Rng rng(3);
  Eigen::MatrixXd u(2, 8);
  for (Index j = 0; j < 8; ++j) u.col(j) = rng.uniform_vector(2, -1, 1);
  Eigen::MatrixXd ones_u(3, 8);
  ones_u << Eigen::RowVectorXd::Ones(8), u;
  const ClusterFit fit = fit_cluster(u, h * ones_u);
  CHECK((fit.H - h).norm() <= 1e-12);
  CHECK_FALSE(fit.rejected);

  // Determined case N = m + 1.
  const ClusterFit square_fit = fit_cluster(u.leftCols(3), h * ones_u.leftCols(3));
  CHECK((square_fit.H - h).norm() <= 1e-10);

  // Least-squares optimality: no perturbation of H lowers the residual.
  const Eigen::MatrixXd noisy = h * ones_u + 0.1 * Eigen::MatrixXd::Random(2, 8);
  const ClusterFit ls = fit_cluster(u, noisy);
  const double best = (noisy - ls.H * ls.U).norm();
  for (int t = 0; t < 100; ++t) {
    const Eigen::MatrixXd other = ls.H + 1e-3 * Eigen::MatrixXd::Random(2, 3);
    CHECK((noisy - other * ls.U).norm() >= best);
  }
}

TEST_CASE("conditioning of a cluster") {
  // Controls {-1, 0, 1}: U U^T = diag(3, 2), lambda_min = 2.
  const ClusterFit fit = fit_cluster(Eigen::RowVector3d(-1, 0, 1), Eigen::MatrixXd::Zero(2, 3));
  CHECK(fit.lambda_min_S == doctest::Approx(2.0));
  CHECK(fit.pinv_norm == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(fit.scaled_pinv_norm == doctest::Approx(std::sqrt(1.5)));

  // Identical controls make U rank deficient.
  const ClusterFit flat = fit_cluster(Eigen::RowVector3d(0.3, 0.3, 0.3), Eigen::MatrixXd::Zero(2, 3));
  CHECK(flat.rejected);
  CHECK(std::isinf(flat.pinv_norm));
}

TEST_CASE("exact data recovers the control-affine structure") {
  const ClusterFitResult r = exact_fit(0.2, 25);
  CHECK(r.regression.rejected.empty());
  double worst = 0.0;
  for (Index l = 0; l < r.regression.centers.size(); ++l) {
    worst = std::max(worst, (r.regression.clusters[static_cast<std::size_t>(l)].H -
                             duffing().stacked(r.regression.centers.point(l))).norm());
  }
  CHECK(worst <= 1e-8);
  CHECK(r.regression.epsilon == 0.0);

  const Eigen::Vector2d x(1.0, 1.0);
  CHECK((r.surrogate.predict(x, Eigen::VectorXd::Zero(1)) - Eigen::Vector2d(1.05, 1.05)).norm() <= 1e-8);
  CHECK((r.surrogate.predict(x, Eigen::VectorXd::Ones(1)) - Eigen::Vector2d(1.05, 0.90)).norm() <= 1e-8);
  CHECK((r.surrogate.drift(x) - duffing_drift(x)).norm() <= 1e-8);
  CHECK((r.surrogate.input_matrix(x) - duffing_input(x)).norm() <= 1e-8);
  CHECK_THROWS_AS((void)r.surrogate.predict(x, Eigen::Vector2d::Zero()), std::invalid_argument);
}

TEST_CASE("determined clusters") {
  const ClusterFitResult r = exact_fit(0.5, 2);
  CHECK(r.regression.neighbors == 2);
  CHECK(r.regression.rejected.empty());
  CHECK_THROWS_AS(exact_fit(0.5, 1), std::invalid_argument);
}

TEST_CASE("surrogate is affine in the control") {
  Rng rng(4);
  const PointCloud centers = uniform_grid(square(2.0), 0.4);
  const ControlDataset data = sample_epsilon_balls(duffing(), centers, 10, 0.05, rng);
  const ClusterFitResult r = fit_cluster_regression(data, centers, 10, planar_kernel(), 1e-6);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd x = rng.uniform_vector(2, -2, 2);
    const Eigen::VectorXd u1 = rng.uniform_vector(1, -2, 2);
    const Eigen::VectorXd u2 = rng.uniform_vector(1, -2, 2);
    const double a = rng.uniform();
    const Eigen::VectorXd lhs = r.surrogate.predict(x, a * u1 + (1 - a) * u2);
    const Eigen::VectorXd rhs = a * r.surrogate.predict(x, u1) + (1 - a) * r.surrogate.predict(x, u2);
    CHECK((lhs - rhs).norm() <= 1e-12 * (1 + lhs.norm()));
    CHECK((r.surrogate.stacked(x).col(0) - r.surrogate.drift(x)).norm() == 0.0);
  }
  const Eigen::MatrixXd all = r.surrogate.stacked_all(centers);
  const Eigen::MatrixXd h = r.surrogate.stacked(centers.point(3));
  CHECK((all.col(3) - Eigen::Map<const Eigen::VectorXd>(h.data(), h.size())).norm() <= 1e-14);
}

TEST_CASE("too many rank-deficient clusters abort the fit") {
  const PointCloud centers = uniform_grid(square(2.0), 1.0);
  Rng rng(5);
  ControlDataset data = sample_exact_centers(duffing(), centers, 3, rng);
  data.controls.setConstant(0.25);
  CHECK_THROWS_AS(fit_cluster_regression(data, centers, 3, planar_kernel(), 0.0), NumericalError);

  // One bad cluster out of 25 stays under the 10% limit and is dropped.
  ControlDataset partial = sample_exact_centers(duffing(), centers, 3, rng);
  partial.controls.leftCols(3).setConstant(0.25);
  const ClusterFitResult r = fit_cluster_regression(partial, centers, 3, planar_kernel(), 0.0);
  CHECK(r.regression.rejected == std::vector<Index>{0});
  CHECK(r.regression.retained_centers().size() == 24);
  CHECK(r.surrogate.model().centers().size() == 24);
  CHECK(conditioning_stats(r.regression).rejected == 1);
}

TEST_CASE("ones term") {
  const Eigen::Matrix3d identity = Eigen::Matrix3d::Identity();
  CHECK(ones_term(identity).value == doctest::Approx(3.0));
  CHECK(ones_term(identity).exact);

  Rng rng(6);
  for (int d : {2, 5, 9, 12}) {
    Eigen::MatrixXd pts(2, d);
    for (int j = 0; j < d; ++j) pts.col(j) = rng.uniform_vector(2, -2, 2);
    const Eigen::MatrixXd gram = assemble_kernel_matrix(WendlandKernel(2, 1, 1.5), PointCloud(pts));
    const OnesTerm exact = ones_term(gram);
    const OnesTerm bound = ones_term(gram, 0);
    CHECK(exact.exact);
    CHECK_FALSE(bound.exact);
    CHECK(exact.value <= bound.value * (1 + 1e-12));
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d);
    CHECK(exact.value >= ones.dot(gram.llt().solve(ones)) * (1 - 1e-12));
  }
  CHECK_THROWS_AS(ones_term(Eigen::MatrixXd::Zero(0, 0)), std::invalid_argument);
  CHECK_THROWS_AS(ones_term(-identity), NumericalError);
}

TEST_CASE("error diagnostic terms") {
  const ClusterFitResult r = exact_fit(0.5, 4);
  const ErrorDiagnostic diag(r.surrogate, r.regression, {1.2, 0.3, std::nullopt, 16});
  CHECK(diag.native_norm_substituted());
  CHECK(diag.fill_distance() == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-3));
  CHECK(diag.epsilon() == 0.0);
  const auto& centers = r.regression.centers;
  for (Index l = 0; l < centers.size(); ++l) {
    const DiagnosticBreakdown b = diag(centers.point(l));
    CHECK(b.dist == 0.0);
    CHECK(b.term1 == 0.0);
    CHECK(b.term2 == 0.0);
  }
  const DiagnosticBreakdown off = diag(Eigen::Vector2d(0.25, 0.25));
  CHECK(off.dist == doctest::Approx(0.25 * std::sqrt(2.0)));
  CHECK(off.term1 > 0.0);
  CHECK(off.total() == off.term1 + off.term2);

  const ErrorDiagnostic declared(r.surrogate, r.regression, {1.2, 0.3, 5.0, 16});
  CHECK_FALSE(declared.native_norm_substituted());
  CHECK(declared.max_native_norm() == 5.0);
  const double scale = declared(Eigen::Vector2d(0.25, 0.25)).term1 / off.term1;
  CHECK(scale == doctest::Approx(5.0 / diag.max_native_norm()));
}

TEST_CASE("error diagnostic with sampled balls") {
  Rng rng(8);
  const PointCloud centers = uniform_grid(Box(Eigen::Vector2d(-1.5, -1), Eigen::Vector2d(1.5, 1)), 1.0);
  const ControlDataset data = sample_epsilon_balls(duffing(), centers, 6, 0.1, rng);
  const ClusterFitResult r = fit_cluster_regression(data, centers, 6, planar_kernel(), 0.0);
  const ErrorDiagnostic diag(r.surrogate, r.regression, {1.2, 0.3, std::nullopt, 16});
  CHECK(diag.epsilon() > 0.0);
  CHECK(diag.epsilon() <= 0.1);
  CHECK(diag.ones().exact);
  const DiagnosticBreakdown b = diag(centers.point(0));
  CHECK(b.term2 > 0.0);
  const double expected = std::sqrt(12.0) * diag.max_pinv_norm() * (1.2 + 0.3 * 2.0) * std::sqrt(diag.ones().value) *
                          diag.epsilon();
  CHECK(b.term2 == doctest::Approx(expected));
}

TEST_CASE("conditioning statistics") {
  const ClusterFitResult r = exact_fit(0.5, 25);
  const ConditioningStats stats = conditioning_stats(r.regression);
  CHECK(stats.lambda_min.size() == r.regression.centers.size());
  CHECK(stats.max_scaled >= stats.median_scaled);
  CHECK(stats.scaled_pinv_norm.minCoeff() >= 1.0);
  CHECK(stats.rejected == 0);
  const auto path = std::filesystem::temp_directory_path() / "kedmd_conditioning.csv";
  stats.write_csv(path);
  CHECK(read_csv(path).header == std::vector<std::string>{"cluster", "lambda_min", "scaled_pinv_norm"});
  std::filesystem::remove(path);
}

TEST_CASE("control error heatmap vanishes at exact centers") {
  const ClusterFitResult r = exact_fit(0.25, 4);
  const std::vector<Eigen::VectorXd> controls{Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 2.0)};
  const Eigen::VectorXd at_centers = control_error_heatmap(r.surrogate, duffing(), r.regression.centers, controls);
  CHECK(at_centers.maxCoeff() <= 1e-8);
  const Eigen::VectorXd between =
      control_error_heatmap(r.surrogate, duffing(), kedmd::testing::validation_grid(1.0, 0.125), controls);
  CHECK(between.maxCoeff() > 0.0);
  CHECK(between.maxCoeff() < 0.1);
}

TEST_CASE("controlled rollouts and envelopes") {
  const ClusterFitResult r = exact_fit(0.25, 4);
  Eigen::MatrixXd values(1, 3);
  values << 0.5, -0.5, 0.0;
  const Eigen::MatrixXd schedule = hold_schedule(values, 4);
  CHECK(schedule.cols() == 12);
  CHECK(schedule(0, 3) == 0.5);
  CHECK(schedule(0, 4) == -0.5);
  CHECK_THROWS_AS(hold_schedule(values, 0), std::invalid_argument);

  std::vector<ControlledTrajectory> runs;
  Rng rng(9);
  for (int t = 0; t < 9; ++t) {
    runs.push_back(controlled_rollout(r.surrogate, duffing(), rng.uniform_vector(2, -0.5, 0.5), schedule));
  }
  for (const auto& run : runs) {
    CHECK(run.error.front() == 0.0);
    CHECK(run.controls.cols() + 1 == run.surrogate.cols());
  }
  const ErrorEnvelope env = error_envelope(runs);
  CHECK(env.values.rows() == 13);
  CHECK(env.values.cols() == 5);
  for (Index k = 0; k < env.values.rows(); ++k) {
    for (Index q = 1; q < env.values.cols(); ++q) CHECK(env.values(k, q) >= env.values(k, q - 1));
    double worst = 0.0;
    for (const auto& run : runs) {
      if (static_cast<std::size_t>(k) < run.error.size()) worst = std::max(worst, run.error[static_cast<std::size_t>(k)]);
    }
    CHECK(env.values(k, 4) == worst);
  }

  // Leaving the domain halts the comparison.
  Eigen::MatrixXd push = Eigen::MatrixXd::Constant(1, 200, 2.0);
  const ControlledTrajectory escaped = controlled_rollout(r.surrogate, duffing(), Eigen::Vector2d(1.5, 1.5), push);
  CHECK(escaped.halted);
  CHECK(escaped.exit_step.has_value());
}

TEST_CASE("control bundle round trip") {
  Rng rng(10);
  const PointCloud centers = uniform_grid(square(2.0), 0.5);
  const ControlDataset data = sample_epsilon_balls(duffing(), centers, 5, 0.05, rng);
  const ClusterFitResult r = fit_cluster_regression(data, centers, 5, planar_kernel(), 1e-6);
  const auto dir = scratch("bundle");
  save_control_surrogate(r.surrogate, r.regression, dir);
  const auto meta = nlohmann::json::parse(read_text(dir / "meta.json"));
  CHECK(meta.at("control").at("N").get<Index>() == 5);
  CHECK(meta.at("control").at("m").get<int>() == 1);
  const ControlSurrogate back = load_control_surrogate(dir);
  CHECK(back.control_bound() == r.surrogate.control_bound());
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd x = rng.uniform_vector(2, -2, 2);
    const Eigen::VectorXd u = rng.uniform_vector(1, -2, 2);
    CHECK((back.predict(x, u) - r.surrogate.predict(x, u)).norm() <= 1e-14);
  }
  std::filesystem::remove_all(dir);
}
