#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kedmd/dynamics.hpp"
#include "kedmd/geometry.hpp"
#include "kedmd/random.hpp"
#include "kedmd/rkhs.hpp"

namespace kedmd {

/// Triples (x_i, u_i, x_i+) with controls in [-R, R]^m.
struct ControlDataset {
  PointCloud states;
  Eigen::MatrixXd controls;  // m x size
  PointCloud successors;
  double control_bound = 1.0;

  /// Throws std::invalid_argument on misaligned sizes, non-finite values or
  /// controls outside [-R, R]^m.
  ControlDataset(PointCloud states, Eigen::MatrixXd controls, PointCloud successors,
                 double control_bound);

  [[nodiscard]] Index size() const noexcept { return states.size(); }
  [[nodiscard]] int state_dim() const noexcept { return states.dim(); }
  [[nodiscard]] int control_dim() const noexcept { return static_cast<int>(controls.rows()); }

  /// Columns x1..xn,u1..um,xp1..xpn.
  void write_csv(const std::filesystem::path& path) const;
  /// Dimensions are read from the header. Throws IoError on a malformed header.
  static ControlDataset read_csv(const std::filesystem::path& path, double control_bound);
};

/// N copies of every center, each with its own uniform control in [-R, R]^m.
ControlDataset sample_exact_centers(const ControlAffineSystem& system, const PointCloud& centers,
                                    Index per_center, Rng& rng);
/// N states uniform in the epsilon ball of every center, controls uniform in [-R, R]^m.
ControlDataset sample_epsilon_balls(const ControlAffineSystem& system, const PointCloud& centers,
                                    Index per_center, double epsilon, Rng& rng);

/// Local least-squares fit of one cluster.
struct ClusterFit {
  Eigen::MatrixXd U;       // (m + 1) x N, first row ones
  Eigen::MatrixXd X_plus;  // n x N successors
  Eigen::MatrixXd H;       // n x (m + 1), argmin |X_plus - H U|_F
  double lambda_min_S = 0.0;  // smallest eigenvalue of U U^T
  double pinv_norm = 0.0;     // |U^+|_2 = 1 / sqrt(lambda_min_S)
  double scaled_pinv_norm = 0.0;  // sqrt(N) |U^+|_2
  double radius = 0.0;  // max distance of the cluster's states to its center
  bool rejected = false;
};

/// Solves one cluster; `rejection_threshold` gates lambda_min(U U^T).
ClusterFit fit_cluster(const Eigen::MatrixXd& controls, const Eigen::MatrixXd& successors,
                       double rejection_threshold = 1e-10);

struct ClusterRegression {
  PointCloud centers;              // all requested centers
  std::vector<ClusterFit> clusters;  // one per center
  std::vector<Index> rejected;     // indices into centers
  Index neighbors = 0;             // N
  double epsilon = 0.0;            // max cluster radius

  [[nodiscard]] PointCloud retained_centers() const;
};

/// xhat+ = g0hat(x) + Ghat(x) u, from an RKHS model with n (m + 1) outputs;
/// output q n + p holds entry (p, q) of H = [g0 G].
class ControlSurrogate {
 public:
  ControlSurrogate(RkhsModel model, int state_dim, int control_dim, double control_bound);

  [[nodiscard]] const RkhsModel& model() const noexcept { return model_; }
  [[nodiscard]] int state_dim() const noexcept { return n_; }
  [[nodiscard]] int control_dim() const noexcept { return m_; }
  [[nodiscard]] double control_bound() const noexcept { return bound_; }

  /// n x (m + 1) matrix [g0hat(x) Ghat(x)].
  [[nodiscard]] Eigen::MatrixXd stacked(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::VectorXd drift(const Eigen::VectorXd& x) const;
  [[nodiscard]] Eigen::MatrixXd input_matrix(const Eigen::VectorXd& x) const;
  /// Throws std::invalid_argument on a dimension mismatch.
  [[nodiscard]] Eigen::VectorXd predict(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  /// Column i is the flattened H at point i (n (m + 1) x P).
  [[nodiscard]] Eigen::MatrixXd stacked_all(const PointCloud& points) const;
  [[nodiscard]] ControlledStepMap as_step_map() const;

 private:
  RkhsModel model_;
  int n_;
  int m_;
  double bound_;
};

struct ClusterFitOptions {
  double rejection_threshold = 1e-10;
  double max_rejected_fraction = 0.1;
};

struct ClusterFitResult {
  ControlSurrogate surrogate;
  ClusterRegression regression;
};

/// Step 1: N-nearest-neighbor clusters and local least squares per center.
/// Step 2: RKHS fit of the entries of H* over the retained centers.
/// Throws std::invalid_argument for N < m + 1 or too little data, and
/// NumericalError when more than the allowed fraction of clusters is rejected.
ClusterFitResult fit_cluster_regression(const ControlDataset& data, const PointCloud& centers, Index N,
                                const WendlandKernel& kernel, double lambda,
                                const ClusterFitOptions& options = {});

struct OnesTerm {
  double value = 0.0;
  bool exact = false;  // false: the bound d / lambda_min(K)
};
/// max over v in {-1, 1}^d of v^T K^{-1} v; enumerated for d <= crossover.
OnesTerm ones_term(const Eigen::MatrixXd& gram, int crossover = 16);

struct DiagnosticInputs {
  double lipschitz_g0 = 0.0;
  double lipschitz_G = 0.0;
  /// Replaces max |H_pq|_H when set; otherwise the native norms of the fitted
  /// interpolant columns are used.
  std::optional<double> native_norm_bound;
  int ones_crossover = 16;
};

struct DiagnosticBreakdown {
  double term1 = 0.0;
  double term2 = 0.0;
  double dist = 0.0;
  [[nodiscard]] double total() const noexcept { return term1 + term2; }
};

/// D(x) = h^{k - 1/2} dist(x, X) max|H_pq| + sqrt(2N) max|U^+| (L_g + L_G R)
///        Phi(0)^{1/2} (ones term)^{1/2} eps, with the x-independent parts
/// computed once.
class ErrorDiagnostic {
 public:
  ErrorDiagnostic(const ControlSurrogate& surrogate, const ClusterRegression& regression,
                  const DiagnosticInputs& inputs);

  [[nodiscard]] DiagnosticBreakdown operator()(const Eigen::VectorXd& x) const;
  [[nodiscard]] double fill_distance() const noexcept { return fill_; }
  [[nodiscard]] double max_native_norm() const noexcept { return h_norm_; }
  [[nodiscard]] bool native_norm_substituted() const noexcept { return substituted_; }
  [[nodiscard]] const OnesTerm& ones() const noexcept { return ones_; }
  [[nodiscard]] double max_pinv_norm() const noexcept { return max_pinv_; }
  [[nodiscard]] double epsilon() const noexcept { return epsilon_; }

 private:
  PointCloud centers_;
  double fill_ = 0.0;
  double h_norm_ = 0.0;
  bool substituted_ = false;
  OnesTerm ones_;
  double max_pinv_ = 0.0;
  double epsilon_ = 0.0;
  double term1_scale_ = 0.0;
  double term2_ = 0.0;
};

struct ConditioningStats {
  Eigen::VectorXd lambda_min;        // per retained cluster
  Eigen::VectorXd scaled_pinv_norm;  // sqrt(N) |U^+|
  double max_scaled = 0.0;
  double median_scaled = 0.0;
  Index rejected = 0;

  /// Columns cluster,lambda_min,scaled_pinv_norm.
  void write_csv(const std::filesystem::path& path) const;
};
ConditioningStats conditioning_stats(const ClusterRegression& regression);

/// max over the control list of |f(x, u_j) - fhat(x, u_j)| per validation point.
Eigen::VectorXd control_error_heatmap(const ControlSurrogate& surrogate,
                                      const ControlAffineSystem& truth, const PointCloud& validation,
                                      const std::vector<Eigen::VectorXd>& controls);

/// Piecewise-constant controls: each value held for `hold` steps.
Eigen::MatrixXd hold_schedule(const Eigen::MatrixXd& values, Index hold);

struct ControlledTrajectory {
  Eigen::MatrixXd surrogate;  // n x (K + 1)
  Eigen::MatrixXd truth;      // n x (K + 1)
  Eigen::MatrixXd controls;   // m x K
  std::vector<double> error;  // |xhat(k) - x(k)|, k = 0..K
  std::optional<Index> exit_step;
  bool halted = false;

  /// Columns k,x1..,xt1..,u1..,error (controls empty on the last row).
  void write_csv(const std::filesystem::path& path) const;
};
/// Rolls both systems forward under `schedule` (m x K).
ControlledTrajectory controlled_rollout(const ControlSurrogate& surrogate,
                                        const ControlAffineSystem& truth, const Eigen::VectorXd& x0,
                                        const Eigen::MatrixXd& schedule, bool halt_on_exit = true);

/// Per-step median, requested quantiles and max of the errors of several rollouts.
struct ErrorEnvelope {
  std::vector<double> quantiles;  // e.g. 0.5, 0.8, 0.9, 0.95, 1.0
  Eigen::MatrixXd values;         // steps x quantiles
  void write_csv(const std::filesystem::path& path) const;
};
ErrorEnvelope error_envelope(const std::vector<ControlledTrajectory>& runs,
                             std::vector<double> quantiles = {0.5, 0.8, 0.9, 0.95, 1.0});
/// Same statistics over raw per-step error series; shorter series drop out
/// of the later steps.
ErrorEnvelope error_envelope(const std::vector<std::vector<double>>& errors,
                             std::vector<double> quantiles = {0.5, 0.8, 0.9, 0.95, 1.0});

/// Bundle with control metadata (m, R, N, eps, rejected clusters).
void save_control_surrogate(const ControlSurrogate& surrogate, const ClusterRegression& regression,
                            const std::filesystem::path& dir);
ControlSurrogate load_control_surrogate(const std::filesystem::path& dir);

}  // namespace kedmd
