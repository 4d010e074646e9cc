#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

#include "kedmd/geometry.hpp"

namespace kedmd {

using StepMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using ControlledStepMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// x -> n x m matrix of input directions.
using InputField = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

/// Autonomous discrete-time system x+ = F(x) on a box.
struct DynamicalSystem {
  int dim = 0;
  Box domain = Box::cube(1, -1.0, 1.0);
  StepMap step;

  /// Applies `step` to every point; n x P result.
  [[nodiscard]] Eigen::MatrixXd step_all(const PointCloud& points) const;
};

/// Control-affine map x+ = g0(x) + G(x) u with controls in [-R, R]^m.
struct ControlAffineSystem {
  int state_dim = 0;
  int control_dim = 0;
  Box domain = Box::cube(1, -1.0, 1.0);
  double control_bound = 1.0;
  VectorField drift;
  InputField input;

  [[nodiscard]] Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  /// The autonomous system obtained by holding u fixed.
  [[nodiscard]] DynamicalSystem with_constant_control(const Eigen::VectorXd& u) const;
  /// [g0(x) G(x)], n x (m + 1).
  [[nodiscard]] Eigen::MatrixXd stacked(const Eigen::VectorXd& x) const;
};

}  // namespace kedmd
