#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kedmd/dynamics.hpp"
#include "kedmd/stability.hpp"

namespace kedmd {

/// x+ = (1/8) [[|x|^2 - 1, -1], [1, |x|^2 - 1]] x on [-2, 2]^2.
Eigen::VectorXd kellett_step(const Eigen::VectorXd& x);

inline constexpr double kDuffingDt = 0.05;
/// g0(x) = (x1 + dt x2, x2 + dt x1).
Eigen::VectorXd duffing_drift(const Eigen::VectorXd& x, double dt = kDuffingDt);
/// G(x) = (0, -3 dt x1^3) as a 2 x 1 matrix.
Eigen::MatrixXd duffing_input(const Eigen::VectorXd& x, double dt = kDuffingDt);
Eigen::VectorXd duffing_step(const Eigen::VectorXd& x, double u, double dt = kDuffingDt);

/// A benchmark or user system with everything the experiments need.
struct NamedSystem {
  std::string id;
  DynamicalSystem autonomous;  // the zero-control map for controlled systems
  std::optional<ControlAffineSystem> control;
  std::vector<Eigen::VectorXd> equilibria;
  std::optional<LyapunovSpec> lyapunov;
};

NamedSystem kellett_system();
/// Duffing oscillator on [-2, 2]^2 with u in [-2, 2].
NamedSystem duffing_system(double dt = kDuffingDt);

/// x+ = x + dt (g0(x) + G(x) u) on `domain`. Throws std::invalid_argument for dt <= 0.
NamedSystem euler_discretize(const VectorField& drift, const InputField& input, int control_dim,
                             double dt, const Box& domain, double control_bound = 1.0);

/// Loads a system description (JSON):
///   dim, control_dim, dt, discretization ("euler" | "map"), constants,
///   g0 (n expressions), G (n rows of m expressions), domain {lower, upper},
///   control_bound, equilibria, lyapunov {V, alpha_V, omega_V, x_star, power_p}.
/// With "euler" the expressions are continuous-time fields, with "map" they
/// give the step map directly. Throws std::invalid_argument on bad content.
NamedSystem load_system_config(const std::filesystem::path& path);
NamedSystem parse_system_config(const std::string& json_text);

/// Built-in id ("kellett", "duffing") or a path to a system config.
NamedSystem resolve_system(const std::string& id_or_path);

}  // namespace kedmd
