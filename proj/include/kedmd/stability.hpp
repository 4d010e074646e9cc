#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kedmd/dynamics.hpp"
#include "kedmd/geometry.hpp"

namespace kedmd {

using ScalarField = std::function<double(const Eigen::VectorXd&)>;
using ComparisonFunction = std::function<double(double)>;

/// Lyapunov function V with decrease rate alpha_V around x_star.
struct LyapunovSpec {
  ScalarField V;
  ComparisonFunction alpha_V;
  std::optional<ComparisonFunction> alpha1;
  std::optional<ComparisonFunction> alpha2;
  /// Declared modulus of continuity of V; used only for reporting.
  std::optional<ComparisonFunction> omega_V;
  Eigen::VectorXd x_star;
  /// Set when V(x) = |x - x_star|^p.
  std::optional<int> power_p;

  /// V = |x - x_star|^p, alpha_V(r) = c r^p.
  static LyapunovSpec power_norm(Eigen::VectorXd x_star, int p, double c);

  /// Sampled checks of the spec's own invariants: V(x_star) = 0, V > 0 away
  /// from x_star, alpha_V(0) = 0 and alpha_V increasing on the sampled radii.
  /// Returns one message per violated condition.
  [[nodiscard]] std::vector<std::string> validate(const PointCloud& samples) const;
};

/// Decrease margins m(x) = V(x) - alpha_V(|x - x*|) - V(G(x)).
struct MarginReport {
  PointCloud points;
  Eigen::VectorXd margins;
  double min_margin = 0.0;
  std::vector<Index> failures;  // margin < 0
  double max_failure_distance = 0.0;
  double max_failure_value = 0.0;  // max V over failures

  [[nodiscard]] Index failure_count() const noexcept { return static_cast<Index>(failures.size()); }
  [[nodiscard]] bool certified() const noexcept { return failures.empty(); }
  /// CSV with columns x1..xn,margin.
  void write_csv(const std::filesystem::path& path) const;
  /// {"min_margin", "failure_count", "ball_radius", "c_fail", "points"}
  [[nodiscard]] std::string summary_json() const;
};

MarginReport check_decrease(const StepMap& G, const LyapunovSpec& spec, const PointCloud& validation);
/// Same margins from precomputed successors (n x P, column i for point i).
MarginReport check_decrease(const Eigen::MatrixXd& successors, const LyapunovSpec& spec,
                            const PointCloud& validation);
/// Margins with alpha_V scaled by `rate_factor`.
MarginReport check_decrease(const Eigen::MatrixXd& successors, const LyapunovSpec& spec,
                            const PointCloud& validation, double rate_factor);

/// Validation points with V(x) <= c. Throws std::invalid_argument for c <= 0.
PointCloud sublevel_filter(const LyapunovSpec& spec, const PointCloud& validation, double c);

struct PracticalRegion {
  double c_fail = 0.0;       // max V over failures
  double ball_radius = 0.0;  // max |x - x*| over failures
};
PracticalRegion practical_region_estimate(const MarginReport& report);
PracticalRegion practical_region_estimate(const StepMap& G, const LyapunovSpec& spec,
                                          const PointCloud& validation);

/// Inflated check V(Fhat(x)) <= V(x) - (1 - s) alpha_V(|x - x*|) for power-form V.
struct PowerformReport {
  double s = 0.5;
  MarginReport surrogate;
  [[nodiscard]] Index violations() const noexcept { return surrogate.failure_count(); }
};
/// Throws std::invalid_argument unless spec.power_p is set and s is in (0, 1).
PowerformReport check_powerform_transfer(const Eigen::MatrixXd& surrogate_successors,
                                         const LyapunovSpec& spec, const PointCloud& validation,
                                         double s = 0.5);

/// Pointwise form of the transfer argument: wherever omega_V(|F - Fhat|)
/// does not exceed the true margin, the surrogate margin must be >= 0.
struct TransferCheck {
  double theta = 0.0;            // min true margin
  double max_omega_of_error = 0.0;
  Index premise_points = 0;      // points where omega_V(err) <= true margin
  Index conclusion_failures = 0; // of those, points with negative surrogate margin
  bool uniform_premise = false;  // max omega_V(err) <= theta
  [[nodiscard]] bool holds() const noexcept { return conclusion_failures == 0; }
};
/// Throws std::invalid_argument if spec.omega_V is not declared.
TransferCheck check_transfer_implication(const Eigen::MatrixXd& true_successors,
                                         const Eigen::MatrixXd& surrogate_successors,
                                         const LyapunovSpec& spec, const PointCloud& validation);

struct ClosedLoopReport {
  MarginReport surrogate;
  std::optional<MarginReport> truth;
  Index clamp_count = 0;
  double max_feedback_l1 = 0.0;  // before clamping
};
/// Margins of x -> fhat(x, kappa(x)) and, if supplied, x -> f(x, kappa(x)).
/// Feedback values outside [-bound, bound]^m are clamped when `clamp` is set
/// and otherwise used as they are; both cases are counted.
ClosedLoopReport closed_loop_check(const ControlledStepMap& surrogate, const StepMap& feedback,
                                   const LyapunovSpec& spec, const PointCloud& validation,
                                   double control_bound, const ControlledStepMap& truth = {},
                                   bool clamp = true);

}  // namespace kedmd
