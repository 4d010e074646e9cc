#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "kedmd/geometry.hpp"
#include "kedmd/wendland.hpp"

namespace kedmd {

/// Solve or factorization failures on (near-)singular systems.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Kernel matrix requested over a set that repeats a point.
class DuplicateCentersError : public std::invalid_argument {
 public:
  DuplicateCentersError(Index first, Index second);
  Index first;
  Index second;
};

/// K_{A,B} = (k(a_i, b_j)).
Eigen::MatrixXd cross_kernel_matrix(const WendlandKernel& kernel, const PointCloud& rows,
                                    const PointCloud& cols);

/// K_X. Throws DuplicateCentersError naming the first repeated pair.
Eigen::MatrixXd assemble_kernel_matrix(const WendlandKernel& kernel, const PointCloud& centers);

/// k_X(x) = (k(x_1, x), ..., k(x_d, x)).
Eigen::VectorXd kernel_vector(const WendlandKernel& kernel, const PointCloud& centers,
                              const Eigen::Ref<const Eigen::VectorXd>& x);

/// Diagonal shifts tried in order before a factorization is declared failed.
inline constexpr double kJitterLadder[] = {0.0, 1e-14, 1e-12, 1e-10};

/// Cholesky factorization of K_X + lambda I over fixed centers, with the
/// escalating diagonal jitter of kJitterLadder.
class KernelSystem {
 public:
  /// Throws DuplicateCentersError, std::invalid_argument for lambda < 0 and
  /// NumericalError (with a condition estimate) if every jitter level fails.
  KernelSystem(WendlandKernel kernel, PointCloud centers, double lambda);

  [[nodiscard]] const WendlandKernel& kernel() const noexcept { return kernel_; }
  [[nodiscard]] const PointCloud& centers() const noexcept { return centers_; }
  [[nodiscard]] Index size() const noexcept { return centers_.size(); }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  /// Extra diagonal shift that was needed on top of lambda.
  [[nodiscard]] double jitter() const noexcept { return jitter_; }
  /// Reciprocal condition estimate of the factorized matrix (Eigen's rcond).
  [[nodiscard]] double rcond() const noexcept { return rcond_; }

  /// (K_X + lambda I + jitter I)^{-1} rhs.
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::Ref<const Eigen::MatrixXd>& rhs) const;
  /// K_X alpha, with K_X assembled on the fly (no lambda, no jitter).
  [[nodiscard]] Eigen::VectorXd gram_apply(const Eigen::Ref<const Eigen::VectorXd>& alpha) const;
  [[nodiscard]] Eigen::VectorXd features(const Eigen::Ref<const Eigen::VectorXd>& x) const;

 private:
  WendlandKernel kernel_;
  PointCloud centers_;
  double lambda_;
  double jitter_ = 0.0;
  double rcond_ = 0.0;
  Eigen::MatrixXd factor_;  // Cholesky factor in the lower triangle
};

/// f = alpha^T k_X in V_X.
struct NativeVector {
  Eigen::VectorXd coefficients;
};

/// sqrt(alpha^T K_X alpha) for f = alpha^T k_X.
double native_norm(const WendlandKernel& kernel, const PointCloud& centers, const NativeVector& f);

/// (|f(x)|^2, k(x,x) alpha^T K_X alpha); the first never exceeds the second.
std::pair<double, double> pointwise_bound_check(const WendlandKernel& kernel,
                                                const PointCloud& centers, const NativeVector& f,
                                                const Eigen::Ref<const Eigen::VectorXd>& x);

/// Regularized kernel regressor x -> coefficients^T k_X(x) with
/// coefficients = (K_X + lambda I)^{-1} Y; lambda = 0 interpolates Y.
class RkhsModel {
 public:
  /// Reassembles a model from stored parts (no factorization attached).
  RkhsModel(WendlandKernel kernel, PointCloud centers, double lambda, double jitter,
            Eigen::MatrixXd coefficients);

  /// targets is d x M, row i belonging to center i.
  static RkhsModel fit(const WendlandKernel& kernel, const PointCloud& centers,
                       const Eigen::Ref<const Eigen::MatrixXd>& targets, double lambda);
  static RkhsModel fit(std::shared_ptr<const KernelSystem> system,
                       const Eigen::Ref<const Eigen::MatrixXd>& targets);

  [[nodiscard]] const WendlandKernel& kernel() const noexcept { return kernel_; }
  [[nodiscard]] const PointCloud& centers() const noexcept { return centers_; }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }
  [[nodiscard]] double jitter() const noexcept { return jitter_; }
  [[nodiscard]] const Eigen::MatrixXd& coefficients() const noexcept { return coefficients_; }
  [[nodiscard]] Index output_dim() const noexcept { return coefficients_.cols(); }
  /// Factorization used by fit(); null for reloaded models.
  [[nodiscard]] const std::shared_ptr<const KernelSystem>& system() const noexcept { return system_; }

  /// coefficients^T k_X(x); exactly zero when x is outside every support ball.
  [[nodiscard]] Eigen::VectorXd evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// M x P matrix of evaluations at the points of `points`.
  [[nodiscard]] Eigen::MatrixXd evaluate(const PointCloud& points) const;
  /// Native-space norm of output column `column` as an element of V_X.
  [[nodiscard]] double native_norm(Index column) const;

 private:
  RkhsModel(std::shared_ptr<const KernelSystem> system, Eigen::MatrixXd coefficients);

  WendlandKernel kernel_;
  PointCloud centers_;
  double lambda_;
  double jitter_;
  Eigen::MatrixXd coefficients_;
  std::shared_ptr<const KernelSystem> system_;
};

struct IdentityCheck {
  std::string name;
  double max_violation = 0.0;  // relative
  double tolerance = 0.0;
  [[nodiscard]] bool passed() const { return max_violation <= tolerance; }
};

struct RegularizerReport {
  double lambda = 0.0;
  int trials = 0;
  std::vector<IdentityCheck> checks;

  [[nodiscard]] bool ok() const;
  /// Throws IdentityViolation for the first failed check.
  void require_ok() const;
};

class IdentityViolation : public std::runtime_error {
 public:
  IdentityViolation(std::string identity, double violation);
  std::string identity;
  double violation;
};

/// Checks, for `trials` random f, g in V_X:
///   "self_adjoint"  <R f, g>_H = <f, R g>_H = f_X^T (K + lambda I)^{-1} g_X
///   "commutation"   P_X R f = R P_X f = R f
///   "norm_bound"    |R f|_H <= |P_X f|_H = |f|_H
/// where R is the regularized regressor. Violations are measured relative to
/// the magnitude of the compared quantities.
RegularizerReport verify_regularizer_identities(const WendlandKernel& kernel,
                                                const PointCloud& centers, double lambda,
                                                int trials, std::uint64_t seed = 0,
                                                double tolerance = 1e-9);

}  // namespace kedmd
