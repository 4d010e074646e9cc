#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace kedmd {

/// Seeded generator with platform-independent output.
///
/// Draws come from std::mt19937_64, whose output sequence is fixed by the
/// standard; the conversions to doubles are done here instead of through
/// std::*_distribution, whose algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  Eigen::VectorXd uniform_vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
  }

  /// Uniform sample from the closed Euclidean ball.
  Eigen::VectorXd uniform_in_ball(const Eigen::Ref<const Eigen::VectorXd>& center, double radius) {
    const Eigen::Index n = center.size();
    Eigen::VectorXd direction = normal_vector(n);
    const double norm = direction.norm();
    if (norm == 0.0) return center;
    const double scale = radius * std::pow(uniform(), 1.0 / static_cast<double>(n));
    return center + (scale / norm) * direction;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kedmd
