#pragma once

#include <array>

#include <Eigen/Core>

namespace kedmd {

/// Compactly supported Wendland kernel k(x, y) = phi(|x - y| / sigma).
///
/// The univariate profile is the normalized closed form with
/// l = floor(n/2) + k + 1, so phi(0) = 1 and phi(r) = 0 for r >= 1.
/// Kernel matrices over pairwise distinct points are positive definite
/// in exact arithmetic for every n up to the ambient dimension.
class WendlandKernel {
 public:
  /// Throws std::invalid_argument for n < 1, k outside [0, 3] or sigma <= 0.
  WendlandKernel(int dim, int smoothness, double support_radius);

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] int smoothness() const noexcept { return smoothness_; }
  [[nodiscard]] double support_radius() const noexcept { return support_radius_; }
  /// Order of the Sobolev space the native space coincides with: (n+1)/2 + k.
  [[nodiscard]] double sobolev_order() const noexcept { return 0.5 * (dim_ + 1) + smoothness_; }
  /// Exponent of the (1 - r)_+ factor in the profile.
  [[nodiscard]] int truncated_power() const noexcept { return exponent_; }

  /// Unit-argument profile phi(r); r is a non-negative scaled distance.
  [[nodiscard]] double profile(double r) const noexcept;
  /// phi'(r). Continuous on [0, inf) for k >= 1.
  [[nodiscard]] double profile_derivative(double r) const noexcept;

  /// k(x, y). Throws std::invalid_argument on a dimension mismatch.
  [[nodiscard]] double operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& y) const;

  /// Gradient of k(x, y) with respect to x.
  /// Throws std::domain_error for k = 0, where the profile is not C^1 at r = 1.
  [[nodiscard]] Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y) const;

  /// k evaluated from a squared Euclidean distance; no dimension checks.
  [[nodiscard]] double from_squared_distance(double squared_distance) const noexcept;

  friend bool operator==(const WendlandKernel&, const WendlandKernel&) = default;

 private:
  int dim_;
  int smoothness_;
  double support_radius_;
  int exponent_;
  // Polynomial factor p(r) = sum_i c[i] r^i, already divided by p(0).
  std::array<double, 4> poly_{};
};

}  // namespace kedmd
