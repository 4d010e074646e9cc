#include "kedmd/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "kedmd/io.hpp"

namespace kedmd {

LyapunovSpec LyapunovSpec::power_norm(Eigen::VectorXd x_star, int p, double c) {
  if (p < 1) throw std::invalid_argument("power_norm: p must be >= 1");
  if (!(c > 0.0)) throw std::invalid_argument("power_norm: c must be > 0");
  LyapunovSpec spec;
  const Eigen::VectorXd center = x_star;
  if (p == 2) {
    spec.V = [center](const Eigen::VectorXd& x) { return (x - center).squaredNorm(); };
    spec.alpha_V = [c](double r) { return c * r * r; };
  } else {
    spec.V = [center, p](const Eigen::VectorXd& x) { return std::pow((x - center).norm(), p); };
    spec.alpha_V = [c, p](double r) { return c * std::pow(r, p); };
  }
  spec.x_star = std::move(x_star);
  spec.power_p = p;
  return spec;
}

std::vector<std::string> LyapunovSpec::validate(const PointCloud& samples) const {
  std::vector<std::string> problems;
  if (!V || !alpha_V) {
    problems.emplace_back("V and alpha_V must both be set");
    return problems;
  }
  if (samples.dim() != x_star.size()) {
    problems.emplace_back("sample dimension differs from x_star");
    return problems;
  }
  if (V(x_star) != 0.0) problems.emplace_back("V(x_star) = " + format_double(V(x_star)) + " != 0");
  if (alpha_V(0.0) != 0.0) problems.emplace_back("alpha_V(0) != 0");

  std::vector<double> radii;
  Index nonpositive = 0;
  for (Index i = 0; i < samples.size(); ++i) {
    const Eigen::VectorXd x = samples.point(i);
    const double r = (x - x_star).norm();
    if (r == 0.0) continue;
    if (!(V(x) > 0.0)) ++nonpositive;
    radii.push_back(r);
  }
  if (nonpositive > 0) {
    problems.push_back("V <= 0 at " + std::to_string(nonpositive) + " sampled points away from x_star");
  }
  std::sort(radii.begin(), radii.end());
  // Radii a few ulps apart (mirror-image points) can map to the same alpha value.
  const auto close = [](double a, double b) { return b - a <= 1e-12 * b; };
  radii.erase(std::unique(radii.begin(), radii.end(), close), radii.end());
  double previous = alpha_V(0.0);
  for (double r : radii) {
    const double value = alpha_V(r);
    if (!(value > previous)) {
      problems.push_back("alpha_V not strictly increasing at r = " + format_double(r));
      break;
    }
    previous = value;
  }
  return problems;
}

void MarginReport::write_csv(const std::filesystem::path& path) const {
  Eigen::MatrixXd rows(points.size(), points.dim() + 1);
  rows.leftCols(points.dim()) = points.matrix().transpose();
  rows.col(points.dim()) = margins;
  auto header = numbered_names("x", points.dim());
  header.emplace_back("margin");
  kedmd::write_csv(path, header, rows);
}

std::string MarginReport::summary_json() const {
  nlohmann::ordered_json j;
  j["points"] = points.size();
  j["min_margin"] = min_margin;
  j["failure_count"] = failure_count();
  j["ball_radius"] = max_failure_distance;
  j["c_fail"] = max_failure_value;
  return j.dump(2) + "\n";
}

MarginReport check_decrease(const StepMap& G, const LyapunovSpec& spec, const PointCloud& validation) {
  Eigen::MatrixXd successors(validation.dim(), validation.size());
  for (Index i = 0; i < validation.size(); ++i) {
    successors.col(i) = G(Eigen::VectorXd(validation.point(i)));
  }
  return check_decrease(successors, spec, validation);
}

MarginReport check_decrease(const Eigen::MatrixXd& successors, const LyapunovSpec& spec,
                            const PointCloud& validation) {
  return check_decrease(successors, spec, validation, 1.0);
}

MarginReport check_decrease(const Eigen::MatrixXd& successors, const LyapunovSpec& spec,
                            const PointCloud& validation, double rate_factor) {
  if (successors.cols() != validation.size()) {
    throw std::invalid_argument("check_decrease: one successor per validation point required");
  }
  MarginReport report;
  report.points = validation;
  report.margins.resize(validation.size());
  report.min_margin = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < validation.size(); ++i) {
    const Eigen::VectorXd x = validation.point(i);
    const Eigen::VectorXd gx = successors.col(i);
    const double r = (x - spec.x_star).norm();
    const double v = spec.V(x);
    const double margin = v - rate_factor * spec.alpha_V(r) - spec.V(gx);
    report.margins(i) = margin;
    report.min_margin = std::min(report.min_margin, margin);
    if (margin < 0.0) {
      report.failures.push_back(i);
      report.max_failure_distance = std::max(report.max_failure_distance, r);
      report.max_failure_value = std::max(report.max_failure_value, v);
    }
  }
  if (validation.empty()) report.min_margin = 0.0;
  return report;
}

PointCloud sublevel_filter(const LyapunovSpec& spec, const PointCloud& validation, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("sublevel_filter: c must be > 0");
  std::vector<Index> keep;
  for (Index i = 0; i < validation.size(); ++i) {
    if (spec.V(Eigen::VectorXd(validation.point(i))) <= c) keep.push_back(i);
  }
  return validation.subset(keep);
}

PracticalRegion practical_region_estimate(const MarginReport& report) {
  return {report.max_failure_value, report.max_failure_distance};
}

PracticalRegion practical_region_estimate(const StepMap& G, const LyapunovSpec& spec,
                                          const PointCloud& validation) {
  return practical_region_estimate(check_decrease(G, spec, validation));
}

PowerformReport check_powerform_transfer(const Eigen::MatrixXd& surrogate_successors,
                                         const LyapunovSpec& spec, const PointCloud& validation,
                                         double s) {
  if (!spec.power_p) throw std::invalid_argument("powerform check needs V = |x - x*|^p");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("powerform check: s must lie in (0, 1)");
  return PowerformReport{s, check_decrease(surrogate_successors, spec, validation, 1.0 - s)};
}

TransferCheck check_transfer_implication(const Eigen::MatrixXd& true_successors,
                                         const Eigen::MatrixXd& surrogate_successors,
                                         const LyapunovSpec& spec, const PointCloud& validation) {
  if (!spec.omega_V) throw std::invalid_argument("transfer check needs a declared omega_V");
  if (true_successors.cols() != surrogate_successors.cols() ||
      true_successors.rows() != surrogate_successors.rows()) {
    throw std::invalid_argument("transfer check: successor shapes differ");
  }
  const MarginReport truth = check_decrease(true_successors, spec, validation);
  const MarginReport surrogate = check_decrease(surrogate_successors, spec, validation);
  TransferCheck check;
  check.theta = truth.min_margin;
  for (Index i = 0; i < validation.size(); ++i) {
    const double omega = (*spec.omega_V)((true_successors.col(i) - surrogate_successors.col(i)).norm());
    check.max_omega_of_error = std::max(check.max_omega_of_error, omega);
    if (omega <= truth.margins(i)) {
      ++check.premise_points;
      if (surrogate.margins(i) < 0.0) ++check.conclusion_failures;
    }
  }
  check.uniform_premise = check.max_omega_of_error <= check.theta;
  return check;
}

ClosedLoopReport closed_loop_check(const ControlledStepMap& surrogate, const StepMap& feedback,
                                   const LyapunovSpec& spec, const PointCloud& validation,
                                   double control_bound, const ControlledStepMap& truth, bool clamp) {
  ClosedLoopReport report;
  Eigen::MatrixXd fhat(validation.dim(), validation.size());
  Eigen::MatrixXd f(validation.dim(), validation.size());
  for (Index i = 0; i < validation.size(); ++i) {
    const Eigen::VectorXd x = validation.point(i);
    Eigen::VectorXd u = feedback(x);
    report.max_feedback_l1 = std::max(report.max_feedback_l1, u.lpNorm<1>());
    if (u.lpNorm<Eigen::Infinity>() > control_bound) {
      ++report.clamp_count;
      if (clamp) u = u.cwiseMax(-control_bound).cwiseMin(control_bound);
    }
    fhat.col(i) = surrogate(x, u);
    if (truth) f.col(i) = truth(x, u);
  }
  report.surrogate = check_decrease(fhat, spec, validation);
  if (truth) report.truth = check_decrease(f, spec, validation);
  return report;
}

}  // namespace kedmd
