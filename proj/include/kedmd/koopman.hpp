#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kedmd/dynamics.hpp"
#include "kedmd/geometry.hpp"
#include "kedmd/rkhs.hpp"

namespace kedmd {

/// Observables Psi: R^n -> R^M with a left inverse Upsilon and its declared
/// modulus of continuity.
struct ObservablePair {
  int state_dim = 0;
  int observable_dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> psi;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> upsilon;
  std::function<double(double)> modulus;
  bool coordinates = false;

  /// psi_i(x) = x_i, Upsilon = identity, modulus(r) = r.
  static ObservablePair coordinate_maps(int n);
};

enum class SurrogateVariant { standard, alternative };

std::string to_string(SurrogateVariant variant);
/// Accepts "standard" and "alternative"; throws std::invalid_argument otherwise.
SurrogateVariant parse_variant(const std::string& text);

/// Data-driven one-step map x -> Upsilon(model(x)).
///
/// standard:    coefficients (K + lambda I)^{-1} Psi_{F(X)}
/// alternative: coefficients (K + lambda I)^{-1} B^T (K + lambda I)^{-1} Psi_X
///              with B_ij = k(x_i, F(x_j))
class AutonomousSurrogate {
 public:
  AutonomousSurrogate(RkhsModel model, ObservablePair observables, SurrogateVariant variant);

  [[nodiscard]] const RkhsModel& model() const noexcept { return model_; }
  [[nodiscard]] const ObservablePair& observables() const noexcept { return observables_; }
  [[nodiscard]] SurrogateVariant variant() const noexcept { return variant_; }
  [[nodiscard]] int dim() const noexcept { return observables_.state_dim; }
  /// Data indices whose successor F(x_i) left the system domain during fit.
  [[nodiscard]] const std::vector<Index>& successors_outside() const noexcept { return outside_; }

  [[nodiscard]] Eigen::VectorXd predict(const Eigen::VectorXd& x) const;
  /// n x P predictions, evaluated blockwise.
  [[nodiscard]] Eigen::MatrixXd predict(const PointCloud& points) const;
  [[nodiscard]] StepMap as_step_map() const;

 private:
  friend AutonomousSurrogate fit_autonomous(const DynamicalSystem&, const PointCloud&,
                                            const WendlandKernel&, double, SurrogateVariant,
                                            const std::optional<ObservablePair>&);
  RkhsModel model_;
  ObservablePair observables_;
  SurrogateVariant variant_;
  std::vector<Index> outside_;
};

/// Throws std::invalid_argument when data is not inside the domain or has the
/// wrong dimension; factorization errors propagate.
AutonomousSurrogate fit_autonomous(const DynamicalSystem& system, const PointCloud& data,
                                   const WendlandKernel& kernel, double lambda,
                                   SurrogateVariant variant = SurrogateVariant::standard,
                                   const std::optional<ObservablePair>& observables = std::nullopt);

enum class DomainExitPolicy { halt, proceed };

struct Trajectory {
  Eigen::MatrixXd surrogate;             // n x (K + 1)
  std::optional<Eigen::MatrixXd> truth;  // n x (K + 1), when a true system is given
  /// |Fhat(x(k)) - F(x(k))| along the true trajectory, k = 0..K-1.
  std::vector<double> one_step_error;
  /// |xhat(k) - x(k)|, k = 0..K.
  std::vector<double> accumulated_error;
  /// First step index whose surrogate state is outside the domain.
  std::optional<Index> exit_step;
  bool halted = false;

  [[nodiscard]] Index length() const noexcept { return surrogate.cols(); }
  /// Columns k, x1.., [xt1.., one_step_error, error].
  void write_csv(const std::filesystem::path& path) const;
};

Trajectory rollout(const AutonomousSurrogate& surrogate, const Eigen::VectorXd& x0, Index steps,
                   const DynamicalSystem* truth = nullptr,
                   DomainExitPolicy policy = DomainExitPolicy::halt,
                   const std::optional<Box>& domain = std::nullopt);

struct EquilibriumResidual {
  double system = 0.0;     // |F(x*) - x*|
  double surrogate = 0.0;  // |Fhat(x*) - x*|
};
/// Throws std::invalid_argument unless x_star is one of the surrogate's centers.
EquilibriumResidual check_equilibrium_preservation(const DynamicalSystem& system,
                                                   const AutonomousSurrogate& surrogate,
                                                   const Eigen::VectorXd& x_star);

/// Pointwise error and its proportionality to the distance from the data.
struct ProportionalityProfile {
  PointCloud points;
  Eigen::VectorXd error;         // |F(x) - Fhat(x)|
  Eigen::VectorXd dist_to_data;  // dist(x, X)
  Eigen::VectorXd dist_to_star;  // |x - x*|
  Eigen::VectorXd ratio;         // error / dist(x, X), 0 at data sites
  double max_ratio = 0.0;
  std::vector<std::pair<Box, double>> box_max;  // max error per requested box

  /// Columns x1..xn,error,dist_data,dist_star,ratio.
  void write_csv(const std::filesystem::path& path) const;
};

ProportionalityProfile proportionality_profile(const DynamicalSystem& system,
                                               const AutonomousSurrogate& surrogate,
                                               const PointCloud& validation,
                                               const Eigen::VectorXd& x_star,
                                               const std::vector<Box>& boxes = {});

/// |F(x) - Fhat(x)| at every validation point.
Eigen::VectorXd one_step_errors(const DynamicalSystem& system, const AutonomousSurrogate& surrogate,
                                const PointCloud& validation);

/// Max of `values` over points inside `box` (0 if none).
double max_in_box(const PointCloud& points, const Eigen::VectorXd& values, const Box& box);

/// Model bundle: centers.csv, coefficients.csv, meta.json.
void save_model(const RkhsModel& model, const std::filesystem::path& dir,
                const std::string& extra_meta_json = "{}");
RkhsModel load_model(const std::filesystem::path& dir);

/// Bundle plus "variant" in meta.json; only coordinate observables persist.
void save_surrogate(const AutonomousSurrogate& surrogate, const std::filesystem::path& dir);
AutonomousSurrogate load_surrogate(const std::filesystem::path& dir);

}  // namespace kedmd
