#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace kedmd::cli {

/// Bad or inconsistent experiment configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A verified invariant did not hold (exit code 4).
class PropertyViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridSpec {
  std::string type = "uniform";  // uniform | chebyshev | file
  double delta = 0.2;
  int points_per_axis = 21;
  std::string path;
};

struct KernelSpec {
  int smoothness = 1;
  std::optional<double> support_radius;  // default: diameter of the system domain
};

struct ValidationSpec {
  std::string type = "staggered";  // staggered | training
  double delta = 0.025;
  /// Half-widths of the nested boxes around x*; empty means 1, 1/2, 1/4 of the domain.
  std::vector<double> boxes;
};

struct ControlSpec {
  long long N = 25;
  std::string sampling = "ball";  // ball | exact
  std::string epsilon = "1/d";    // "1/d" or a number
  GridSpec centers{"chebyshev", 0.2, 21, ""};
  std::optional<double> control_bound;  // default: the system's bound
  std::string dataset;                  // optional CSV instead of sampling
  std::optional<double> validation_half;  // default: half the domain half-width
  double validation_delta = 0.025;
  int validation_controls = 20;
  std::optional<double> lipschitz_g0;
  std::optional<double> lipschitz_G;
};

struct RolloutSpec {
  std::vector<std::vector<double>> initial;
  long long random_initial = 0;
  long long steps = 20;
  long long hold = 5;
  std::string policy = "halt";  // halt | proceed
};

struct ExperimentConfig {
  std::string system = "kellett";
  GridSpec grid;
  KernelSpec kernel;
  double lambda = 0.0;
  std::string variant = "standard";
  ValidationSpec validation;
  ControlSpec control;
  RolloutSpec rollout;
  double powerform_s = 0.5;
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string model;  // optional bundle to reuse instead of fitting

  /// Unknown keys and ill-typed values raise ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Every field, defaults included, in a fixed key order.
  [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Subcommand entry points; each writes into config.out.
void fit_autonomous(const ExperimentConfig& config);
void heatmap(const ExperimentConfig& config);
void lyapunov(const ExperimentConfig& config);
void fit_control(const ExperimentConfig& config);
void control_heatmap(const ExperimentConfig& config);
void rollout(const ExperimentConfig& config);
/// Throws PropertyViolation after writing verify.json if any check fails.
void verify(const ExperimentConfig& config);

}  // namespace kedmd::cli
