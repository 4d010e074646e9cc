#include "kedmd/wendland.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace kedmd {

namespace {

double integer_power(double base, int exponent) {
  double result = 1.0;
  for (int i = 0; i < exponent; ++i) result *= base;
  return result;
}

}  // namespace

WendlandKernel::WendlandKernel(int dim, int smoothness, double support_radius)
    : dim_(dim), smoothness_(smoothness), support_radius_(support_radius) {
  if (dim < 1) throw std::invalid_argument("Wendland kernel: dimension must be >= 1");
  if (smoothness < 0 || smoothness > 3) {
    throw std::invalid_argument("Wendland kernel: smoothness k=" + std::to_string(smoothness) +
                                " not tabulated (supported: 0..3)");
  }
  if (!(support_radius > 0.0) || !std::isfinite(support_radius)) {
    throw std::invalid_argument("Wendland kernel: support radius must be positive and finite");
  }
  const double l = dim / 2 + smoothness + 1;
  exponent_ = static_cast<int>(l) + smoothness;
  switch (smoothness) {
    case 0:
      poly_ = {1.0, 0.0, 0.0, 0.0};
      break;
    case 1:
      poly_ = {1.0, l + 1.0, 0.0, 0.0};
      break;
    case 2:
      poly_ = {1.0, (3.0 * l + 6.0) / 3.0, (l * l + 4.0 * l + 3.0) / 3.0, 0.0};
      break;
    default:
      poly_ = {1.0, (15.0 * l + 45.0) / 15.0, (6.0 * l * l + 36.0 * l + 45.0) / 15.0,
               (l * l * l + 9.0 * l * l + 23.0 * l + 15.0) / 15.0};
      break;
  }
}

double WendlandKernel::profile(double r) const noexcept {
  if (r >= 1.0) return 0.0;
  const double p = ((poly_[3] * r + poly_[2]) * r + poly_[1]) * r + poly_[0];
  return integer_power(1.0 - r, exponent_) * p;
}

double WendlandKernel::profile_derivative(double r) const noexcept {
  if (r >= 1.0) return 0.0;
  const double t = 1.0 - r;
  const double p = ((poly_[3] * r + poly_[2]) * r + poly_[1]) * r + poly_[0];
  const double dp = (3.0 * poly_[3] * r + 2.0 * poly_[2]) * r + poly_[1];
  const double t_pow = integer_power(t, exponent_ - 1);
  return t_pow * (t * dp - exponent_ * p);
}

double WendlandKernel::from_squared_distance(double squared_distance) const noexcept {
  return profile(std::sqrt(squared_distance) / support_radius_);
}

double WendlandKernel::operator()(const Eigen::Ref<const Eigen::VectorXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (x.size() != dim_ || y.size() != dim_) {
    throw std::invalid_argument("Wendland kernel: expected points of dimension " +
                                std::to_string(dim_));
  }
  return from_squared_distance((x - y).squaredNorm());
}

Eigen::VectorXd WendlandKernel::gradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y) const {
  if (smoothness_ == 0) {
    throw std::domain_error("Wendland kernel: gradient requires smoothness k >= 1");
  }
  if (x.size() != dim_ || y.size() != dim_) {
    throw std::invalid_argument("Wendland kernel: expected points of dimension " +
                                std::to_string(dim_));
  }
  Eigen::VectorXd diff = x - y;
  const double dist = diff.norm();
  if (dist == 0.0 || dist >= support_radius_) return Eigen::VectorXd::Zero(dim_);
  return (profile_derivative(dist / support_radius_) / (support_radius_ * dist)) * diff;
}

}  // namespace kedmd
