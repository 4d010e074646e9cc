#include "kedmd/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "kedmd/io.hpp"

namespace kedmd {

ObservablePair ObservablePair::coordinate_maps(int n) {
  ObservablePair pair;
  pair.state_dim = n;
  pair.observable_dim = n;
  pair.psi = [](const Eigen::VectorXd& x) { return x; };
  pair.upsilon = [n](const Eigen::VectorXd& y) -> Eigen::VectorXd { return y.head(n); };
  pair.modulus = [](double r) { return r; };
  pair.coordinates = true;
  return pair;
}

std::string to_string(SurrogateVariant variant) {
  return variant == SurrogateVariant::standard ? "standard" : "alternative";
}

SurrogateVariant parse_variant(const std::string& text) {
  if (text == "standard") return SurrogateVariant::standard;
  if (text == "alternative") return SurrogateVariant::alternative;
  throw std::invalid_argument("unknown surrogate variant '" + text + "' (standard|alternative)");
}

AutonomousSurrogate::AutonomousSurrogate(RkhsModel model, ObservablePair observables,
                                         SurrogateVariant variant)
    : model_(std::move(model)), observables_(std::move(observables)), variant_(variant) {
  if (model_.output_dim() != observables_.observable_dim) {
    throw std::invalid_argument("surrogate model output does not match the observable count");
  }
  if (model_.kernel().dim() != observables_.state_dim) {
    throw std::invalid_argument("surrogate kernel dimension does not match the state dimension");
  }
}

Eigen::VectorXd AutonomousSurrogate::predict(const Eigen::VectorXd& x) const {
  return observables_.upsilon(model_.evaluate(x));
}

Eigen::MatrixXd AutonomousSurrogate::predict(const PointCloud& points) const {
  Eigen::MatrixXd raw = model_.evaluate(points);
  if (observables_.coordinates) return raw.topRows(dim());
  Eigen::MatrixXd out(dim(), points.size());
  for (Index i = 0; i < points.size(); ++i) out.col(i) = observables_.upsilon(raw.col(i));
  return out;
}

StepMap AutonomousSurrogate::as_step_map() const {
  return [this](const Eigen::VectorXd& x) { return predict(x); };
}

AutonomousSurrogate fit_autonomous(const DynamicalSystem& system, const PointCloud& data,
                                   const WendlandKernel& kernel, double lambda,
                                   SurrogateVariant variant,
                                   const std::optional<ObservablePair>& observables) {
  if (data.dim() != system.dim) throw std::invalid_argument("fit_autonomous: data dimension mismatch");
  if (data.empty()) throw std::invalid_argument("fit_autonomous: no data");
  for (Index i = 0; i < data.size(); ++i) {
    if (!system.domain.contains(data.point(i), 1e-12)) {
      throw std::invalid_argument("fit_autonomous: data point " + std::to_string(i) +
                                  " lies outside the domain");
    }
  }
  const ObservablePair obs = observables.value_or(ObservablePair::coordinate_maps(system.dim));
  const Eigen::MatrixXd successors = system.step_all(data);
  if (!successors.allFinite()) throw NumericalError("fit_autonomous: non-finite successor values");

  auto factor = std::make_shared<const KernelSystem>(kernel, data, lambda);
  const Index d = data.size();
  Eigen::MatrixXd coefficients;
  if (variant == SurrogateVariant::standard) {
    Eigen::MatrixXd targets(d, obs.observable_dim);
    for (Index i = 0; i < d; ++i) targets.row(i) = obs.psi(successors.col(i)).transpose();
    coefficients = factor->solve(targets);
  } else {
    Eigen::MatrixXd psi_x(d, obs.observable_dim);
    for (Index i = 0; i < d; ++i) psi_x.row(i) = obs.psi(Eigen::VectorXd(data.point(i))).transpose();
    const Eigen::MatrixXd cross = cross_kernel_matrix(kernel, data, PointCloud(successors));
    coefficients = factor->solve(cross.transpose() * factor->solve(psi_x));
  }
  AutonomousSurrogate surrogate(RkhsModel(kernel, data, lambda, factor->jitter(), std::move(coefficients)),
                                obs, variant);
  for (Index i = 0; i < d; ++i) {
    if (!system.domain.contains(successors.col(i), 1e-12)) surrogate.outside_.push_back(i);
  }
  return surrogate;
}

void Trajectory::write_csv(const std::filesystem::path& path) const {
  const Index n = surrogate.rows();
  const Index steps = surrogate.cols();
  std::vector<std::string> header{"k"};
  for (const auto& name : numbered_names("x", static_cast<int>(n))) header.push_back(name);
  if (truth) {
    for (const auto& name : numbered_names("xt", static_cast<int>(n))) header.push_back(name);
    header.emplace_back("one_step_error");
    header.emplace_back("error");
  }
  Eigen::MatrixXd rows(steps, static_cast<Index>(header.size()));
  for (Index k = 0; k < steps; ++k) {
    rows(k, 0) = static_cast<double>(k);
    rows.block(k, 1, 1, n) = surrogate.col(k).transpose();
    if (truth) {
      rows.block(k, 1 + n, 1, n) = truth->col(k).transpose();
      const auto kk = static_cast<std::size_t>(k);
      rows(k, 1 + 2 * n) = kk < one_step_error.size() ? one_step_error[kk] : std::nan("");
      rows(k, 2 + 2 * n) = accumulated_error[kk];
    }
  }
  kedmd::write_csv(path, header, rows);
}

Trajectory rollout(const AutonomousSurrogate& surrogate, const Eigen::VectorXd& x0, Index steps,
                   const DynamicalSystem* truth, DomainExitPolicy policy,
                   const std::optional<Box>& domain) {
  if (steps < 0) throw std::invalid_argument("rollout: steps must be >= 0");
  if (x0.size() != surrogate.dim()) throw std::invalid_argument("rollout: x0 dimension mismatch");
  const std::optional<Box> box = domain ? domain : (truth ? std::optional<Box>(truth->domain) : std::nullopt);

  std::vector<Eigen::VectorXd> xs{x0};
  std::vector<Eigen::VectorXd> ts{x0};
  Trajectory traj;
  traj.accumulated_error.push_back(0.0);
  for (Index k = 0; k < steps; ++k) {
    if (box && !box->contains(xs.back(), 1e-12)) {
      if (!traj.exit_step) traj.exit_step = k;
      if (policy == DomainExitPolicy::halt) {
        traj.halted = true;
        break;
      }
    }
    xs.push_back(surrogate.predict(xs.back()));
    if (truth) {
      const Eigen::VectorXd& xt = ts.back();
      const Eigen::VectorXd next = truth->step(xt);
      traj.one_step_error.push_back((surrogate.predict(xt) - next).norm());
      ts.push_back(next);
      traj.accumulated_error.push_back((xs.back() - ts.back()).norm());
    }
  }
  if (box && !traj.exit_step && !box->contains(xs.back(), 1e-12)) {
    traj.exit_step = static_cast<Index>(xs.size()) - 1;
  }
  traj.surrogate.resize(x0.size(), static_cast<Index>(xs.size()));
  for (std::size_t k = 0; k < xs.size(); ++k) traj.surrogate.col(static_cast<Index>(k)) = xs[k];
  if (truth) {
    traj.truth = Eigen::MatrixXd(x0.size(), static_cast<Index>(ts.size()));
    for (std::size_t k = 0; k < ts.size(); ++k) traj.truth->col(static_cast<Index>(k)) = ts[k];
  } else {
    traj.accumulated_error.clear();
  }
  return traj;
}

EquilibriumResidual check_equilibrium_preservation(const DynamicalSystem& system,
                                                   const AutonomousSurrogate& surrogate,
                                                   const Eigen::VectorXd& x_star) {
  if (!surrogate.model().centers().find(x_star)) {
    throw std::invalid_argument("check_equilibrium_preservation: x_star is not a data site");
  }
  return {(system.step(x_star) - x_star).norm(), (surrogate.predict(x_star) - x_star).norm()};
}

Eigen::VectorXd one_step_errors(const DynamicalSystem& system, const AutonomousSurrogate& surrogate,
                                const PointCloud& validation) {
  const Eigen::MatrixXd predicted = surrogate.predict(validation);
  const Eigen::MatrixXd truth = system.step_all(validation);
  return (predicted - truth).colwise().norm().transpose();
}

double max_in_box(const PointCloud& points, const Eigen::VectorXd& values, const Box& box) {
  double best = 0.0;
  for (Index i = 0; i < points.size(); ++i) {
    if (box.contains(points.point(i))) best = std::max(best, values(i));
  }
  return best;
}

void ProportionalityProfile::write_csv(const std::filesystem::path& path) const {
  const int n = points.dim();
  Eigen::MatrixXd rows(points.size(), n + 4);
  rows.leftCols(n) = points.matrix().transpose();
  rows.col(n) = error;
  rows.col(n + 1) = dist_to_data;
  rows.col(n + 2) = dist_to_star;
  rows.col(n + 3) = ratio;
  auto header = numbered_names("x", n);
  for (const char* name : {"error", "dist_data", "dist_star", "ratio"}) header.emplace_back(name);
  kedmd::write_csv(path, header, rows);
}

ProportionalityProfile proportionality_profile(const DynamicalSystem& system,
                                               const AutonomousSurrogate& surrogate,
                                               const PointCloud& validation,
                                               const Eigen::VectorXd& x_star,
                                               const std::vector<Box>& boxes) {
  ProportionalityProfile profile;
  profile.points = validation;
  profile.error = one_step_errors(system, surrogate, validation);
  const Index p = validation.size();
  profile.dist_to_data.resize(p);
  profile.dist_to_star.resize(p);
  profile.ratio.resize(p);
  const PointCloud& centers = surrogate.model().centers();
  for (Index i = 0; i < p; ++i) {
    const Eigen::VectorXd x = validation.point(i);
    profile.dist_to_data(i) = dist_to_cloud(x, centers);
    profile.dist_to_star(i) = (x - x_star).norm();
    profile.ratio(i) = profile.dist_to_data(i) > 0.0 ? profile.error(i) / profile.dist_to_data(i) : 0.0;
    profile.max_ratio = std::max(profile.max_ratio, profile.ratio(i));
  }
  for (const Box& box : boxes) profile.box_max.emplace_back(box, max_in_box(validation, profile.error, box));
  return profile;
}

namespace {

using nlohmann::ordered_json;

ordered_json model_meta(const RkhsModel& model) {
  ordered_json meta;
  meta["kernel"] = {{"family", "wendland"},
                    {"dim", model.kernel().dim()},
                    {"smoothness", model.kernel().smoothness()},
                    {"support_radius", model.kernel().support_radius()}};
  meta["lambda"] = model.lambda();
  meta["jitter"] = model.jitter();
  meta["centers"] = model.centers().size();
  meta["outputs"] = model.output_dim();
  return meta;
}

}  // namespace

void save_model(const RkhsModel& model, const std::filesystem::path& dir,
                const std::string& extra_meta_json) {
  std::filesystem::create_directories(dir);
  write_csv(model.centers(), dir / "centers.csv");
  write_csv(dir / "coefficients.csv", numbered_names("c", static_cast<int>(model.output_dim())),
            model.coefficients());
  ordered_json meta = model_meta(model);
  const ordered_json extra = ordered_json::parse(extra_meta_json);
  for (const auto& [key, value] : extra.items()) meta[key] = value;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

RkhsModel load_model(const std::filesystem::path& dir) {
  ordered_json meta;
  try {
    meta = ordered_json::parse(read_text(dir / "meta.json"));
  } catch (const ordered_json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  try {
    const auto& k = meta.at("kernel");
    const WendlandKernel kernel(k.at("dim").get<int>(), k.at("smoothness").get<int>(),
                                k.at("support_radius").get<double>());
    PointCloud centers = read_point_cloud_csv(dir / "centers.csv");
    const CsvTable coefficients = read_csv(dir / "coefficients.csv");
    if (coefficients.rows.rows() != centers.size()) {
      throw IoError(dir.string() + ": coefficient rows do not match centers");
    }
    return RkhsModel(kernel, std::move(centers), meta.at("lambda").get<double>(),
                     meta.at("jitter").get<double>(), coefficients.rows);
  } catch (const ordered_json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
}

void save_surrogate(const AutonomousSurrogate& surrogate, const std::filesystem::path& dir) {
  if (!surrogate.observables().coordinates) {
    throw std::invalid_argument("save_surrogate: only coordinate observables can be persisted");
  }
  ordered_json extra;
  extra["variant"] = to_string(surrogate.variant());
  extra["observables"] = "coordinates";
  extra["successors_outside_domain"] = surrogate.successors_outside().size();
  save_model(surrogate.model(), dir, extra.dump());
}

AutonomousSurrogate load_surrogate(const std::filesystem::path& dir) {
  RkhsModel model = load_model(dir);
  const ordered_json meta = ordered_json::parse(read_text(dir / "meta.json"));
  const SurrogateVariant variant = parse_variant(meta.value("variant", std::string("standard")));
  const int n = model.kernel().dim();
  return AutonomousSurrogate(std::move(model), ObservablePair::coordinate_maps(n), variant);
}

}  // namespace kedmd
