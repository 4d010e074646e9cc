// Acceptance suite: one line per criterion, nonzero exit if any fails.
// A criterion fails when its numeric check fails or it exceeds its time budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "kedmd/control.hpp"
#include "kedmd/io.hpp"
#include "kedmd/koopman.hpp"
#include "kedmd/random.hpp"
#include "kedmd/rkhs.hpp"
#include "kedmd/stability.hpp"
#include "kedmd/systems.hpp"
#include "support.hpp"

using namespace kedmd;
using kedmd::testing::planar_kernel;
using kedmd::testing::square;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string sci(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.3e", v);
  return buffer;
}

// Fitted Kellett surrogates shared between criteria, keyed by grid name.
struct KellettRuns {
  PointCloud validation = kedmd::testing::validation_grid();
  NamedSystem system = kellett_system();
  std::map<std::string, std::shared_ptr<AutonomousSurrogate>> models;
  std::map<std::string, Eigen::VectorXd> errors;

  static PointCloud grid(const std::string& kind, int per_axis) {
    if (kind == "uniform") return uniform_grid(square(2.0), 4.0 / (per_axis - 1));
    return chebyshev_grid(square(2.0), per_axis);
  }

  const Eigen::VectorXd& error(const std::string& kind, int per_axis, double lambda) {
    const std::string key = kind + std::to_string(per_axis) + "/" + format_double(lambda);
    if (auto it = errors.find(key); it != errors.end()) return it->second;
    auto model = std::make_shared<AutonomousSurrogate>(
        fit_autonomous(system.autonomous, grid(kind, per_axis), planar_kernel(), lambda));
    models[key] = model;
    return errors[key] = one_step_errors(system.autonomous, *model, validation);
  }

  std::shared_ptr<AutonomousSurrogate> model(const std::string& kind, int per_axis, double lambda) {
    error(kind, per_axis, lambda);
    return models[kind + std::to_string(per_axis) + "/" + format_double(lambda)];
  }

  double box_max(const Eigen::VectorXd& e, double half) const {
    return max_in_box(validation, e, square(half));
  }
};

KellettRuns& kellett() {
  static KellettRuns runs;
  return runs;
}

Outcome interpolation_exactness() {
  const NamedSystem system = kellett_system();
  const PointCloud data = uniform_grid(square(2.0), 0.2);
  const auto surrogate = fit_autonomous(system.autonomous, data, planar_kernel(), 0.0);
  const Eigen::VectorXd residual = one_step_errors(system.autonomous, surrogate, data);
  const double worst = residual.maxCoeff();
  return {data.size() == 441 && worst <= 1e-8,
          "d=" + std::to_string(data.size()) + " max data-site residual " + sci(worst) + " <= 1e-8"};
}

Outcome equilibrium_preservation() {
  const NamedSystem system = kellett_system();
  const PointCloud data = uniform_grid(square(2.0), 0.2);
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(2);
  bool ok = data.find(origin).has_value();
  std::string detail;
  for (auto variant : {SurrogateVariant::standard, SurrogateVariant::alternative}) {
    const auto surrogate = fit_autonomous(system.autonomous, data, planar_kernel(), 0.0, variant);
    const double value = surrogate.predict(origin).norm();
    ok = ok && value <= 1e-10;
    detail += to_string(variant) + " |Fhat(0)|=" + sci(value) + " ";
  }
  return {ok, detail + "(<= 1e-10)"};
}

Outcome regularizer_identities() {
  const PointCloud centers = uniform_grid(square(2.0), 0.4);
  bool ok = true;
  std::string detail;
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const RegularizerReport report =
        verify_regularizer_identities(planar_kernel(), centers, lambda, 20, 7, 1e-9);
    double worst = 0.0;
    for (const auto& check : report.checks) worst = std::max(worst, check.max_violation);
    ok = ok && report.ok() && report.checks.size() == 3;
    detail += "lambda=" + format_double(lambda) + ": " + sci(worst) + " ";
  }
  return {ok, "d=" + std::to_string(centers.size()) + " worst violation " + detail + "(<= 1e-9)"};
}

Outcome residual_identity() {
  const PointCloud centers = uniform_grid(square(2.0), 0.2);
  const Eigen::MatrixXd gram = assemble_kernel_matrix(planar_kernel(), centers);
  Rng rng(11);
  double worst = 0.0;
  for (double lambda : {1e-4, 1e-2, 1.0}) {
    const KernelSystem system(planar_kernel(), centers, lambda);
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd f = rng.normal_vector(centers.size());
      const Eigen::VectorXd alpha = system.solve(f);
      const Eigen::VectorXd regressed = gram * alpha;  // (R f)_X
      const Eigen::VectorXd lhs = f - regressed;
      const Eigen::VectorXd rhs = lambda * alpha;
      worst = std::max(worst, (lhs - rhs).norm() / f.norm());
    }
  }
  return {worst <= 1e-10, "60 samples, max relative defect " + sci(worst) + " <= 1e-10"};
}

Outcome convergence_trend() {
  auto& runs = kellett();
  bool ok = true;
  std::string detail;
  for (const std::string kind : {"uniform", "chebyshev"}) {
    std::vector<double> full;
    std::vector<double> inner;
    for (int per_axis : {21, 41, 81}) {
      const Eigen::VectorXd& e = runs.error(kind, per_axis, 0.0);
      full.push_back(runs.box_max(e, 2.0));
      inner.push_back(runs.box_max(e, 1.0));
    }
    ok = ok && full[0] > full[1] && full[1] > full[2];
    detail += kind + " " + sci(full[0]) + " > " + sci(full[1]) + " > " + sci(full[2]) + "; ";
    if (kind == "uniform") {
      const double p1 = std::log2(inner[0] / inner[1]);
      const double p2 = std::log2(inner[1] / inner[2]);
      ok = ok && p1 >= 1.0 && p2 >= 1.0;
      detail += "orders on [-1,1]^2 " + sci(p1) + ", " + sci(p2) + " >= 1; ";
    }
  }
  return {ok, detail};
}

Outcome proportionality() {
  auto& runs = kellett();
  const Eigen::VectorXd& e = runs.error("uniform", 41, 0.0);
  const double full = runs.box_max(e, 2.0);
  const double near = runs.box_max(e, 0.5);
  return {near * 10.0 <= full,
          "d=1681 uniform: [-2,2]^2 " + sci(full) + " vs [-0.5,0.5]^2 " + sci(near) + " ratio " +
              sci(full / near) + " >= 10"};
}

Outcome regularization_penalty() {
  auto& runs = kellett();
  bool ok = true;
  std::string detail;
  for (int per_axis : {21, 41, 81}) {
    const double plain = runs.box_max(runs.error("chebyshev", per_axis, 0.0), 0.5);
    const double damped = runs.box_max(runs.error("chebyshev", per_axis, 0.01), 0.5);
    ok = ok && damped >= 10.0 * plain;
    detail += "d=" + std::to_string(per_axis * per_axis) + " ratio " + sci(damped / plain) + " ";
  }
  return {ok, "near-origin error lambda=0.01 / lambda=0: " + detail + "(>= 10)"};
}

Outcome lyapunov_transfer() {
  auto& runs = kellett();
  const auto model = runs.model("uniform", 81, 0.0);
  const LyapunovSpec spec = *runs.system.lyapunov;
  const MarginReport report = check_decrease(model->predict(runs.validation), spec, runs.validation);
  return {report.min_margin >= 0.0 && report.certified(),
          "delta=0.05 d=" + std::to_string(model->model().centers().size()) + " min margin " +
              sci(report.min_margin) + " >= 0 over " + std::to_string(runs.validation.size()) +
              " points, failures " + std::to_string(report.failure_count())};
}

Outcome exact_recovery() {
  const NamedSystem duffing = duffing_system();
  const ControlAffineSystem& system = *duffing.control;
  const PointCloud centers = chebyshev_grid(square(2.0), 21);
  Rng rng(2024);
  const ControlDataset data = sample_exact_centers(system, centers, 25, rng);
  const auto result = fit_cluster_regression(data, centers, 25, planar_kernel(), 0.0);
  double worst = 0.0;
  for (Index l = 0; l < centers.size(); ++l) {
    const auto& fit = result.regression.clusters[static_cast<std::size_t>(l)];
    worst = std::max(worst, (fit.H - system.stacked(Eigen::VectorXd(centers.point(l)))).norm());
  }
  const bool ok = worst <= 1e-8 && result.regression.rejected.empty() && result.regression.epsilon == 0.0;
  return {ok, "d=441 N=25 max |H* - [g0 G]|_F " + sci(worst) + " <= 1e-8, rejected " +
                  std::to_string(result.regression.rejected.size())};
}

Outcome control_error_decay() {
  const NamedSystem duffing = duffing_system();
  const ControlAffineSystem& system = *duffing.control;
  const PointCloud validation = kedmd::testing::validation_grid(1.0);
  std::vector<Eigen::VectorXd> controls;
  for (int j = 1; j <= 20; ++j) controls.push_back(Eigen::VectorXd::Constant(1, -2.0 + 0.2 * (j - 1)));
  std::vector<double> errors;
  std::string detail;
  for (int per_axis : {11, 21, 41}) {
    const PointCloud centers = chebyshev_grid(square(2.0), per_axis);
    const double eps = 1.0 / static_cast<double>(centers.size());
    Rng rng(5);
    const ControlDataset data = sample_epsilon_balls(system, centers, 25, eps, rng);
    const auto result = fit_cluster_regression(data, centers, 25, planar_kernel(), 0.0);
    const Eigen::VectorXd e = control_error_heatmap(result.surrogate, system, validation, controls);
    errors.push_back(e.maxCoeff());
    detail += "d=" + std::to_string(centers.size()) + " " + sci(errors.back()) + " ";
  }
  const bool ok = errors[1] <= errors[0] && errors[2] <= errors[1];
  return {ok, "max error over [-1,1]^2 x 20 controls: " + detail + "(non-increasing)"};
}

Outcome conditioning_statistic() {
  Eigen::MatrixXd controls(1, 3);
  controls << -1.0, 0.0, 1.0;
  const ClusterFit fit = fit_cluster(controls, Eigen::MatrixXd::Zero(2, 3));
  const double exact_gap = std::abs(fit.scaled_pinv_norm - std::sqrt(1.5));

  Rng rng(99);
  double worst = 0.0;
  Index rejected = 0;
  for (int c = 0; c < 100; ++c) {
    const Eigen::MatrixXd u = Eigen::MatrixXd(rng.uniform_vector(25, -2.0, 2.0).transpose());
    const ClusterFit mc = fit_cluster(u, Eigen::MatrixXd::Zero(2, 25));
    if (mc.rejected) ++rejected;
    worst = std::max(worst, mc.scaled_pinv_norm);
  }
  const bool ok = exact_gap <= 1e-12 && std::isfinite(worst) && rejected == 0;
  return {ok, "|sqrt(N)|U^+| - sqrt(1.5)| = " + sci(exact_gap) + "; 100 clusters N=25: max " + sci(worst) +
                  ", rejected " + std::to_string(rejected)};
}

double brute_force_ones(const Eigen::MatrixXd& gram) {
  const Eigen::MatrixXd inverse = gram.fullPivLu().inverse();
  const Index d = gram.rows();
  double best = 0.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    Eigen::VectorXd v(d);
    for (Index i = 0; i < d; ++i) v(i) = (mask >> i) & 1U ? 1.0 : -1.0;
    best = std::max(best, v.dot(inverse * v));
  }
  return best;
}

Outcome diagnostic_structure() {
  const NamedSystem duffing = duffing_system();
  const ControlAffineSystem& system = *duffing.control;
  // 4 x 3 macro grid: d = 12.
  PointCloud centers(2);
  for (double x : {-1.5, -0.5, 0.5, 1.5}) {
    for (double y : {-1.0, 0.0, 1.0}) centers.push_back(Eigen::Vector2d(x, y));
  }
  const WendlandKernel kernel = planar_kernel();
  const DiagnosticInputs inputs{1.0, 2.0, std::nullopt, 16};

  Rng rng(3);
  const auto exact = fit_cluster_regression(sample_exact_centers(system, centers, 25, rng), centers, 25, kernel, 0.0);
  const ErrorDiagnostic d_exact(exact.surrogate, exact.regression, inputs);
  const auto ball = fit_cluster_regression(sample_epsilon_balls(system, centers, 25, 0.05, rng), centers, 25, kernel, 0.0);
  const ErrorDiagnostic d_ball(ball.surrogate, ball.regression, inputs);

  double term1_on_centers = 0.0;
  for (Index l = 0; l < centers.size(); ++l) {
    term1_on_centers = std::max(term1_on_centers, d_ball(Eigen::VectorXd(centers.point(l))).term1);
  }
  const double term2_exact = d_exact(Eigen::Vector2d(0.3, 0.2)).term2;
  const bool term2_positive = d_ball(Eigen::Vector2d(0.3, 0.2)).term2 > 0.0;

  // Enumeration against the reported value for every d <= 12.
  double worst_gap = 0.0;
  for (Index d = 1; d <= 12; ++d) {
    std::vector<Index> first(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) first[static_cast<std::size_t>(i)] = i;
    const Eigen::MatrixXd gram = assemble_kernel_matrix(kernel, centers.subset(first));
    const OnesTerm reported = ones_term(gram);
    const double brute = brute_force_ones(gram);
    worst_gap = std::max(worst_gap, std::abs(reported.value - brute) / brute);
    if (!reported.exact) worst_gap = INFINITY;
  }
  const Eigen::MatrixXd gram12 = assemble_kernel_matrix(kernel, centers);
  const double brute12 = brute_force_ones(gram12);
  const OnesTerm bound12 = ones_term(gram12, 0);
  const bool ok = term1_on_centers == 0.0 && term2_exact == 0.0 && term2_positive &&
                  worst_gap <= 1e-10 && !bound12.exact && brute12 <= bound12.value &&
                  d_ball.ones().exact && std::abs(d_ball.ones().value - brute12) <= 1e-10 * brute12;
  return {ok, "term1 on centers " + sci(term1_on_centers) + ", term2 at eps=0 " + sci(term2_exact) +
                  ", enumeration gap d<=12 " + sci(worst_gap) + ", d=12 exact " + sci(brute12) +
                  " <= bound " + sci(bound12.value)};
}

std::string slurp(const std::filesystem::path& p) { return read_text(p); }

Outcome determinism_and_persistence() {
  const auto root = std::filesystem::temp_directory_path() / "kedmd_acceptance";
  std::filesystem::remove_all(root);
  const NamedSystem duffing = duffing_system();
  const PointCloud centers = chebyshev_grid(square(2.0), 11);

  auto pipeline = [&](const std::filesystem::path& dir) {
    Rng rng(42);
    const ControlDataset data = sample_epsilon_balls(*duffing.control, centers, 25, 1.0 / 121, rng);
    data.write_csv(dir / "data.csv");
    const auto result = fit_cluster_regression(data, centers, 25, planar_kernel(), 0.0);
    save_control_surrogate(result.surrogate, result.regression, dir / "model");
    conditioning_stats(result.regression).write_csv(dir / "stats.csv");
  };
  pipeline(root / "a");
  pipeline(root / "b");
  bool identical = true;
  for (const char* file : {"data.csv", "stats.csv", "model/centers.csv", "model/coefficients.csv", "model/meta.json"}) {
    identical = identical && slurp(root / "a" / file) == slurp(root / "b" / file);
  }

  const NamedSystem system = kellett_system();
  const auto surrogate = fit_autonomous(system.autonomous, uniform_grid(square(2.0), 0.2), planar_kernel(), 0.0);
  save_surrogate(surrogate, root / "kellett");
  const AutonomousSurrogate reloaded = load_surrogate(root / "kellett");
  Rng rng(8);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd x = rng.uniform_vector(2, -2.0, 2.0);
    worst = std::max(worst, (surrogate.predict(x) - reloaded.predict(x)).lpNorm<Eigen::Infinity>());
  }
  std::filesystem::remove_all(root);
  return {identical && worst <= 1e-14,
          std::string("seeded outputs ") + (identical ? "byte-identical" : "DIFFER") +
              ", round-trip prediction difference " + sci(worst) + " <= 1e-14"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "interpolation exactness", 5, interpolation_exactness},
      {2, "equilibrium preservation", 5, equilibrium_preservation},
      {3, "regularizer identities", 10, regularizer_identities},
      {4, "residual identity", 5, residual_identity},
      {5, "convergence trend", 180, convergence_trend},
      {6, "proportionality", 180, proportionality},
      {7, "regularization penalty", 60, regularization_penalty},
      {8, "lyapunov decrease transfer", 120, lyapunov_transfer},
      {9, "cluster regression recovery", 30, exact_recovery},
      {10, "control error decay", 180, control_error_decay},
      {11, "conditioning statistic", 10, conditioning_statistic},
      {12, "error diagnostic structure", 30, diagnostic_structure},
      {13, "determinism and persistence", 30, determinism_and_persistence},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool on_time = seconds < c.budget_seconds;
    const bool passed = outcome.passed && on_time;
    if (!passed) ++failures;
    std::printf("%s  %2d  %-28s %s [%.2f s / %.0f s%s]\n", passed ? "PASS" : "FAIL", c.id, c.name,
                outcome.detail.c_str(), seconds, c.budget_seconds, on_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
