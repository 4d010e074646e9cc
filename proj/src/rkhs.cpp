#include "kedmd/rkhs.hpp"

#include <algorithm>
#include <cmath>

#include "kedmd/io.hpp"
#include "kedmd/random.hpp"

namespace kedmd {

DuplicateCentersError::DuplicateCentersError(Index first_index, Index second_index)
    : std::invalid_argument("duplicate centers at indices " + std::to_string(first_index) +
                            " and " + std::to_string(second_index)),
      first(first_index),
      second(second_index) {}

IdentityViolation::IdentityViolation(std::string name, double amount)
    : std::runtime_error("regularizer identity '" + name + "' violated by " + format_double(amount)),
      identity(std::move(name)),
      violation(amount) {}

namespace {

void require_dim(const WendlandKernel& kernel, const PointCloud& cloud) {
  if (cloud.dim() != kernel.dim()) {
    throw std::invalid_argument("kernel of dimension " + std::to_string(kernel.dim()) +
                                " applied to points of dimension " + std::to_string(cloud.dim()));
  }
}

// Kernel columns for a block of query points: out(i, j) = k(x_i, q_j).
void fill_cross(const WendlandKernel& kernel, const Eigen::MatrixXd& centers,
                const Eigen::MatrixXd& queries, Index first, Index count, Eigen::MatrixXd& out) {
  out.resize(centers.cols(), count);
  for (Index j = 0; j < count; ++j) {
    const auto q = queries.col(first + j);
    for (Index i = 0; i < centers.cols(); ++i) {
      out(i, j) = kernel.from_squared_distance((centers.col(i) - q).squaredNorm());
    }
  }
}

}  // namespace

Eigen::MatrixXd cross_kernel_matrix(const WendlandKernel& kernel, const PointCloud& rows,
                                    const PointCloud& cols) {
  require_dim(kernel, rows);
  require_dim(kernel, cols);
  Eigen::MatrixXd out;
  fill_cross(kernel, rows.matrix(), cols.matrix(), 0, cols.size(), out);
  return out;
}

Eigen::MatrixXd assemble_kernel_matrix(const WendlandKernel& kernel, const PointCloud& centers) {
  require_dim(kernel, centers);
  if (auto dup = centers.find_duplicate()) throw DuplicateCentersError(dup->first, dup->second);
  const Index d = centers.size();
  const Eigen::MatrixXd& x = centers.matrix();
  Eigen::MatrixXd gram(d, d);
  for (Index j = 0; j < d; ++j) {
    gram(j, j) = kernel.from_squared_distance(0.0);
    for (Index i = j + 1; i < d; ++i) {
      const double value = kernel.from_squared_distance((x.col(i) - x.col(j)).squaredNorm());
      gram(i, j) = value;
      gram(j, i) = value;
    }
  }
  return gram;
}

Eigen::VectorXd kernel_vector(const WendlandKernel& kernel, const PointCloud& centers,
                              const Eigen::Ref<const Eigen::VectorXd>& x) {
  require_dim(kernel, centers);
  if (x.size() != kernel.dim()) throw std::invalid_argument("kernel_vector: dimension mismatch");
  Eigen::VectorXd k(centers.size());
  for (Index i = 0; i < centers.size(); ++i) {
    k(i) = kernel.from_squared_distance((centers.point(i) - x).squaredNorm());
  }
  return k;
}

KernelSystem::KernelSystem(WendlandKernel kernel, PointCloud centers, double lambda)
    : kernel_(kernel), centers_(std::move(centers)), lambda_(lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("regularization parameter must be finite and >= 0");
  }
  if (centers_.empty()) throw std::invalid_argument("KernelSystem: no centers");
  double last_rcond = 0.0;
  for (double jitter : kJitterLadder) {
    factor_ = assemble_kernel_matrix(kernel_, centers_);
    factor_.diagonal().array() += lambda_ + jitter;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(factor_);
    if (llt.info() == Eigen::Success) {
      const double rc = llt.rcond();
      if (rc > 0.0 && std::isfinite(rc)) {
        jitter_ = jitter;
        rcond_ = rc;
        return;
      }
      last_rcond = rc;
    }
  }
  factor_.resize(0, 0);
  throw NumericalError("Cholesky factorization of K_X + lambda I failed for d=" +
                       std::to_string(centers_.size()) + " after jitter up to " +
                       format_double(kJitterLadder[std::size(kJitterLadder) - 1]) +
                       " (last reciprocal condition estimate " + format_double(last_rcond) + ")");
}

Eigen::MatrixXd KernelSystem::solve(const Eigen::Ref<const Eigen::MatrixXd>& rhs) const {
  if (rhs.rows() != size()) throw std::invalid_argument("KernelSystem::solve: row mismatch");
  const auto lower = factor_.triangularView<Eigen::Lower>();
  Eigen::MatrixXd y = lower.solve(rhs);
  return lower.adjoint().solve(y);
}

Eigen::VectorXd KernelSystem::gram_apply(const Eigen::Ref<const Eigen::VectorXd>& alpha) const {
  if (alpha.size() != size()) throw std::invalid_argument("gram_apply: size mismatch");
  const Eigen::MatrixXd& x = centers_.matrix();
  const Index d = size();
  Eigen::VectorXd out = kernel_.from_squared_distance(0.0) * alpha;
  for (Index j = 0; j < d; ++j) {
    for (Index i = j + 1; i < d; ++i) {
      const double value = kernel_.from_squared_distance((x.col(i) - x.col(j)).squaredNorm());
      out(i) += value * alpha(j);
      out(j) += value * alpha(i);
    }
  }
  return out;
}

Eigen::VectorXd KernelSystem::features(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return kernel_vector(kernel_, centers_, x);
}

double native_norm(const WendlandKernel& kernel, const PointCloud& centers, const NativeVector& f) {
  const Eigen::MatrixXd gram = assemble_kernel_matrix(kernel, centers);
  if (f.coefficients.size() != centers.size()) {
    throw std::invalid_argument("native_norm: coefficient count differs from center count");
  }
  return std::sqrt(std::max(0.0, f.coefficients.dot(gram * f.coefficients)));
}

std::pair<double, double> pointwise_bound_check(const WendlandKernel& kernel,
                                                const PointCloud& centers, const NativeVector& f,
                                                const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double value = f.coefficients.dot(kernel_vector(kernel, centers, x));
  const double norm = native_norm(kernel, centers, f);
  return {value * value, kernel(x, x) * norm * norm};
}

RkhsModel::RkhsModel(WendlandKernel kernel, PointCloud centers, double lambda, double jitter,
                     Eigen::MatrixXd coefficients)
    : kernel_(kernel),
      centers_(std::move(centers)),
      lambda_(lambda),
      jitter_(jitter),
      coefficients_(std::move(coefficients)) {
  require_dim(kernel_, centers_);
  if (coefficients_.rows() != centers_.size()) {
    throw std::invalid_argument("RkhsModel: coefficient rows differ from center count");
  }
}

RkhsModel::RkhsModel(std::shared_ptr<const KernelSystem> system, Eigen::MatrixXd coefficients)
    : kernel_(system->kernel()),
      centers_(system->centers()),
      lambda_(system->lambda()),
      jitter_(system->jitter()),
      coefficients_(std::move(coefficients)),
      system_(std::move(system)) {}

RkhsModel RkhsModel::fit(const WendlandKernel& kernel, const PointCloud& centers,
                         const Eigen::Ref<const Eigen::MatrixXd>& targets, double lambda) {
  return fit(std::make_shared<const KernelSystem>(kernel, centers, lambda), targets);
}

RkhsModel RkhsModel::fit(std::shared_ptr<const KernelSystem> system,
                         const Eigen::Ref<const Eigen::MatrixXd>& targets) {
  if (targets.rows() != system->size()) {
    throw std::invalid_argument("RkhsModel::fit: " + std::to_string(targets.rows()) +
                                " target rows for " + std::to_string(system->size()) + " centers");
  }
  if (!targets.allFinite()) throw std::invalid_argument("RkhsModel::fit: non-finite targets");
  Eigen::MatrixXd coefficients = system->solve(targets);
  return RkhsModel(std::move(system), std::move(coefficients));
}

Eigen::VectorXd RkhsModel::evaluate(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return coefficients_.transpose() * kernel_vector(kernel_, centers_, x);
}

Eigen::MatrixXd RkhsModel::evaluate(const PointCloud& points) const {
  require_dim(kernel_, points);
  constexpr Index kBlock = 256;
  Eigen::MatrixXd out(output_dim(), points.size());
  Eigen::MatrixXd block;
  for (Index first = 0; first < points.size(); first += kBlock) {
    const Index count = std::min(kBlock, points.size() - first);
    fill_cross(kernel_, centers_.matrix(), points.matrix(), first, count, block);
    out.middleCols(first, count).noalias() = coefficients_.transpose() * block;
  }
  return out;
}

double RkhsModel::native_norm(Index column) const {
  if (column < 0 || column >= output_dim()) throw std::out_of_range("RkhsModel::native_norm");
  const Eigen::VectorXd alpha = coefficients_.col(column);
  Eigen::VectorXd k_alpha;
  if (system_) {
    k_alpha = system_->gram_apply(alpha);
  } else {
    k_alpha = assemble_kernel_matrix(kernel_, centers_) * alpha;
  }
  return std::sqrt(std::max(0.0, alpha.dot(k_alpha)));
}

bool RegularizerReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed(); });
}

void RegularizerReport::require_ok() const {
  for (const auto& check : checks) {
    if (!check.passed()) throw IdentityViolation(check.name, check.max_violation);
  }
}

RegularizerReport verify_regularizer_identities(const WendlandKernel& kernel,
                                                const PointCloud& centers, double lambda,
                                                int trials, std::uint64_t seed, double tolerance) {
  const auto regularized = std::make_shared<const KernelSystem>(kernel, centers, lambda);
  const auto interpolating =
      lambda == 0.0 ? regularized : std::make_shared<const KernelSystem>(kernel, centers, 0.0);
  const Index d = centers.size();
  Rng rng(seed);

  IdentityCheck self_adjoint{"self_adjoint", 0.0, tolerance};
  IdentityCheck commutation{"commutation", 0.0, tolerance};
  IdentityCheck norm_bound{"norm_bound", 0.0, tolerance};

  // Native inner product of two coefficient vectors.
  auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.dot(interpolating->gram_apply(b));
  };
  auto h_norm = [&](const Eigen::VectorXd& a) { return std::sqrt(std::max(0.0, inner(a, a))); };

  for (int t = 0; t < trials; ++t) {
    const Eigen::VectorXd beta_f = rng.normal_vector(d);
    const Eigen::VectorXd beta_g = rng.normal_vector(d);
    const Eigen::VectorXd f_x = interpolating->gram_apply(beta_f);
    const Eigen::VectorXd g_x = interpolating->gram_apply(beta_g);
    const double f_norm = h_norm(beta_f);
    const double g_norm = h_norm(beta_g);

    const Eigen::VectorXd reg_f = regularized->solve(f_x);  // coefficients of R f
    const Eigen::VectorXd reg_g = regularized->solve(g_x);

    // <R f, g>, <f, R g> and the matrix form f_X^T (K + lambda I)^{-1} g_X.
    const double matrix_form = f_x.dot(reg_g);
    const double left = inner(reg_f, beta_g);
    const double right = inner(beta_f, reg_g);
    const double scale = std::max(f_norm * g_norm, 1e-300);
    self_adjoint.max_violation =
        std::max({self_adjoint.max_violation, std::abs(left - matrix_form) / scale,
                  std::abs(right - matrix_form) / scale});

    // P_X R f: re-interpolate the values of R f at the centers.
    const Eigen::VectorXd p_of_r = interpolating->solve(interpolating->gram_apply(reg_f));
    // R P_X f: regress the values of the interpolant of f.
    const Eigen::VectorXd p_f = interpolating->solve(f_x);
    const Eigen::VectorXd r_of_p = regularized->solve(interpolating->gram_apply(p_f));
    const double f_scale = std::max(f_norm, 1e-300);
    commutation.max_violation =
        std::max({commutation.max_violation, h_norm(p_of_r - reg_f) / f_scale,
                  h_norm(r_of_p - reg_f) / f_scale});

    const double reg_norm = h_norm(reg_f);
    const double proj_norm = std::sqrt(std::max(0.0, f_x.dot(p_f)));
    norm_bound.max_violation =
        std::max({norm_bound.max_violation, std::max(0.0, reg_norm - proj_norm) / f_scale,
                  std::abs(proj_norm - f_norm) / f_scale});
  }
  return RegularizerReport{lambda, trials, {self_adjoint, commutation, norm_bound}};
}

}  // namespace kedmd
