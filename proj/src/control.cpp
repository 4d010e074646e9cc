#include "kedmd/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

#include "kedmd/io.hpp"
#include "kedmd/koopman.hpp"

namespace kedmd {

ControlDataset::ControlDataset(PointCloud states_, Eigen::MatrixXd controls_, PointCloud successors_,
                               double control_bound_)
    : states(std::move(states_)),
      controls(std::move(controls_)),
      successors(std::move(successors_)),
      control_bound(control_bound_) {
  if (controls.cols() != states.size() || successors.size() != states.size()) {
    throw std::invalid_argument("ControlDataset: states, controls and successors differ in count");
  }
  if (successors.dim() != states.dim()) {
    throw std::invalid_argument("ControlDataset: successor dimension differs from state dimension");
  }
  if (controls.rows() < 1) throw std::invalid_argument("ControlDataset: no control inputs");
  if (!(control_bound > 0.0)) throw std::invalid_argument("ControlDataset: control bound must be > 0");
  if (!controls.allFinite()) throw std::invalid_argument("ControlDataset: non-finite controls");
  for (Index i = 0; i < controls.cols(); ++i) {
    if (controls.col(i).lpNorm<Eigen::Infinity>() > control_bound) {
      throw std::invalid_argument("ControlDataset: control of sample " + std::to_string(i) +
                                  " exceeds the bound " + format_double(control_bound));
    }
  }
}

void ControlDataset::write_csv(const std::filesystem::path& path) const {
  const int n = state_dim();
  const int m = control_dim();
  Eigen::MatrixXd rows(size(), 2 * n + m);
  rows.leftCols(n) = states.matrix().transpose();
  rows.middleCols(n, m) = controls.transpose();
  rows.rightCols(n) = successors.matrix().transpose();
  auto header = numbered_names("x", n);
  for (auto&& name : numbered_names("u", m)) header.push_back(name);
  for (auto&& name : numbered_names("xp", n)) header.push_back(name);
  kedmd::write_csv(path, header, rows);
}

ControlDataset ControlDataset::read_csv(const std::filesystem::path& path, double control_bound) {
  const CsvTable table = kedmd::read_csv(path);
  auto count = [&](const std::string& prefix) {
    int c = 0;
    while (std::find(table.header.begin(), table.header.end(), prefix + std::to_string(c + 1)) !=
           table.header.end()) {
      ++c;
    }
    return c;
  };
  const int n = count("x");
  const int m = count("u");
  if (n < 1 || m < 1 || count("xp") != n) {
    throw IoError(path.string() + ": expected columns x1..xn,u1..um,xp1..xpn");
  }
  auto block = [&](const std::string& prefix, int k) {
    Eigen::MatrixXd out(k, table.rows.rows());
    for (int i = 0; i < k; ++i) out.row(i) = table.rows.col(table.column(prefix + std::to_string(i + 1))).transpose();
    return out;
  };
  return ControlDataset(PointCloud(block("x", n)), block("u", m), PointCloud(block("xp", n)), control_bound);
}

namespace {

ControlDataset sample(const ControlAffineSystem& system, const PointCloud& centers, Index per_center,
                      double epsilon, Rng& rng) {
  if (per_center < 1) throw std::invalid_argument("sampling: per-center count must be >= 1");
  if (centers.dim() != system.state_dim) throw std::invalid_argument("sampling: center dimension mismatch");
  const Index total = centers.size() * per_center;
  const double bound = system.control_bound;
  Eigen::MatrixXd states(system.state_dim, total);
  Eigen::MatrixXd controls(system.control_dim, total);
  Eigen::MatrixXd next(system.state_dim, total);
  Index col = 0;
  for (Index l = 0; l < centers.size(); ++l) {
    for (Index j = 0; j < per_center; ++j, ++col) {
      states.col(col) = epsilon > 0.0 ? rng.uniform_in_ball(centers.point(l), epsilon)
                                      : Eigen::VectorXd(centers.point(l));
      controls.col(col) = rng.uniform_vector(system.control_dim, -bound, bound);
      next.col(col) = system.step(states.col(col), controls.col(col));
    }
  }
  return ControlDataset(PointCloud(std::move(states)), std::move(controls), PointCloud(std::move(next)), bound);
}

}  // namespace

ControlDataset sample_exact_centers(const ControlAffineSystem& system, const PointCloud& centers,
                                    Index per_center, Rng& rng) {
  return sample(system, centers, per_center, 0.0, rng);
}

ControlDataset sample_epsilon_balls(const ControlAffineSystem& system, const PointCloud& centers,
                                    Index per_center, double epsilon, Rng& rng) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("sample_epsilon_balls: epsilon must be > 0");
  return sample(system, centers, per_center, epsilon, rng);
}

ClusterFit fit_cluster(const Eigen::MatrixXd& controls, const Eigen::MatrixXd& successors,
                       double rejection_threshold) {
  const Index m = controls.rows();
  const Index N = controls.cols();
  if (successors.cols() != N) throw std::invalid_argument("fit_cluster: successors not aligned");
  ClusterFit fit;
  fit.U.resize(m + 1, N);
  fit.U.row(0).setOnes();
  fit.U.bottomRows(m) = controls;
  fit.X_plus = successors;

  const Eigen::MatrixXd S = fit.U * fit.U.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S, Eigen::EigenvaluesOnly);
  fit.lambda_min_S = eig.eigenvalues()(0);
  if (!(fit.lambda_min_S >= rejection_threshold)) {
    fit.rejected = true;
    fit.H = Eigen::MatrixXd::Zero(successors.rows(), m + 1);
    fit.pinv_norm = std::numeric_limits<double>::infinity();
    fit.scaled_pinv_norm = fit.pinv_norm;
    return fit;
  }
  fit.pinv_norm = 1.0 / std::sqrt(fit.lambda_min_S);
  fit.scaled_pinv_norm = std::sqrt(static_cast<double>(N)) * fit.pinv_norm;
  fit.H = fit.U.transpose().colPivHouseholderQr().solve(successors.transpose()).transpose();
  return fit;
}

PointCloud ClusterRegression::retained_centers() const {
  std::vector<Index> keep;
  for (Index l = 0; l < centers.size(); ++l) {
    if (!clusters[static_cast<std::size_t>(l)].rejected) keep.push_back(l);
  }
  return centers.subset(keep);
}

ControlSurrogate::ControlSurrogate(RkhsModel model, int state_dim, int control_dim, double control_bound)
    : model_(std::move(model)), n_(state_dim), m_(control_dim), bound_(control_bound) {
  if (model_.output_dim() != static_cast<Index>(n_) * (m_ + 1)) {
    throw std::invalid_argument("ControlSurrogate: model needs n (m + 1) outputs");
  }
}

Eigen::MatrixXd ControlSurrogate::stacked(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd flat = model_.evaluate(x);
  return Eigen::Map<const Eigen::MatrixXd>(flat.data(), n_, m_ + 1);
}

Eigen::VectorXd ControlSurrogate::drift(const Eigen::VectorXd& x) const { return stacked(x).col(0); }

Eigen::MatrixXd ControlSurrogate::input_matrix(const Eigen::VectorXd& x) const {
  return stacked(x).rightCols(m_);
}

Eigen::VectorXd ControlSurrogate::predict(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  if (x.size() != n_ || u.size() != m_) throw std::invalid_argument("ControlSurrogate::predict: dimension mismatch");
  const Eigen::MatrixXd h = stacked(x);
  return h.col(0) + h.rightCols(m_) * u;
}

Eigen::MatrixXd ControlSurrogate::stacked_all(const PointCloud& points) const {
  return model_.evaluate(points);
}

ControlledStepMap ControlSurrogate::as_step_map() const {
  return [this](const Eigen::VectorXd& x, const Eigen::VectorXd& u) { return predict(x, u); };
}

ClusterFitResult fit_cluster_regression(const ControlDataset& data, const PointCloud& centers, Index N,
                                const WendlandKernel& kernel, double lambda,
                                const ClusterFitOptions& options) {
  const int n = data.state_dim();
  const int m = data.control_dim();
  if (N < m + 1) {
    throw std::invalid_argument("fit_cluster_regression: N=" + std::to_string(N) + " must be >= m+1=" +
                                std::to_string(m + 1));
  }
  if (data.size() < N) throw std::invalid_argument("fit_cluster_regression: fewer samples than N");
  if (centers.dim() != n) throw std::invalid_argument("fit_cluster_regression: center dimension mismatch");

  const ClusterAssignment assignment = build_clusters(data.states, data.controls, centers, N);
  ClusterRegression regression{centers, {}, {}, N, assignment.max_radius_eps};
  regression.clusters.reserve(static_cast<std::size_t>(centers.size()));
  for (Index l = 0; l < centers.size(); ++l) {
    const auto& neighbors = assignment.neighbor_indices[static_cast<std::size_t>(l)];
    Eigen::MatrixXd successors(n, N);
    double radius = 0.0;
    for (Index j = 0; j < N; ++j) {
      const Index i = neighbors[static_cast<std::size_t>(j)];
      successors.col(j) = data.successors.point(i);
      radius = std::max(radius, (data.states.point(i) - centers.point(l)).norm());
    }
    ClusterFit fit = fit_cluster(assignment.controls[static_cast<std::size_t>(l)], successors,
                                 options.rejection_threshold);
    fit.radius = radius;
    if (fit.rejected) regression.rejected.push_back(l);
    regression.clusters.push_back(std::move(fit));
  }
  const auto rejected = static_cast<double>(regression.rejected.size());
  if (rejected > options.max_rejected_fraction * static_cast<double>(centers.size()) ||
      regression.rejected.size() == static_cast<std::size_t>(centers.size())) {
    throw NumericalError("fit_cluster_regression: " + std::to_string(regression.rejected.size()) + " of " +
                         std::to_string(centers.size()) +
                         " clusters rejected for rank deficiency (lambda_min(U U^T) < " +
                         format_double(options.rejection_threshold) + ")");
  }

  const PointCloud retained = regression.retained_centers();
  Eigen::MatrixXd targets(retained.size(), static_cast<Index>(n) * (m + 1));
  Index row = 0;
  for (const ClusterFit& fit : regression.clusters) {
    if (fit.rejected) continue;
    targets.row(row++) = Eigen::Map<const Eigen::RowVectorXd>(fit.H.data(), fit.H.size());
  }
  RkhsModel model = [&] {
    KernelSystem system(kernel, retained, lambda);
    return RkhsModel(kernel, retained, lambda, system.jitter(), system.solve(targets));
  }();
  return ClusterFitResult{ControlSurrogate(std::move(model), n, m, data.control_bound), std::move(regression)};
}

OnesTerm ones_term(const Eigen::MatrixXd& gram, int crossover) {
  const Index d = gram.rows();
  if (d == 0 || gram.cols() != d) throw std::invalid_argument("ones_term: square non-empty matrix required");
  if (d <= crossover && d <= 30) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("ones_term: kernel matrix not positive definite");
    const Eigen::MatrixXd inverse = llt.solve(Eigen::MatrixXd::Identity(d, d));
    // v and -v give the same value, so fix v_0 = +1.
    double best = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd v(d);
    const std::uint64_t count = std::uint64_t{1} << (d - 1);
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      v(0) = 1.0;
      for (Index i = 1; i < d; ++i) v(i) = (mask >> (i - 1)) & 1U ? -1.0 : 1.0;
      best = std::max(best, v.dot(inverse * v));
    }
    return {best, true};
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lambda_min = eig.eigenvalues()(0);
  if (!(lambda_min > 0.0)) throw NumericalError("ones_term: kernel matrix not positive definite");
  return {static_cast<double>(d) / lambda_min, false};
}

ErrorDiagnostic::ErrorDiagnostic(const ControlSurrogate& surrogate, const ClusterRegression& regression,
                                 const DiagnosticInputs& inputs)
    : centers_(surrogate.model().centers()) {
  const RkhsModel& model = surrogate.model();
  const Eigen::MatrixXd gram = assemble_kernel_matrix(model.kernel(), centers_);

  if (inputs.native_norm_bound) {
    h_norm_ = *inputs.native_norm_bound;
  } else {
    substituted_ = true;
    const Eigen::MatrixXd k_alpha = gram * model.coefficients();
    for (Index c = 0; c < model.output_dim(); ++c) {
      h_norm_ = std::max(h_norm_, std::sqrt(std::max(0.0, model.coefficients().col(c).dot(k_alpha.col(c)))));
    }
  }

  const Box bounds(centers_.matrix().rowwise().minCoeff(), centers_.matrix().rowwise().maxCoeff());
  fill_ = kedmd::fill_distance(centers_, bounds, bounds.diameter() / 400.0);

  ones_ = ones_term(gram, inputs.ones_crossover);
  for (const ClusterFit& fit : regression.clusters) {
    if (!fit.rejected) max_pinv_ = std::max(max_pinv_, fit.pinv_norm);
  }
  epsilon_ = regression.epsilon;

  const double k = model.kernel().smoothness();
  term1_scale_ = std::pow(fill_, k - 0.5) * h_norm_;
  const double phi0 = model.kernel().from_squared_distance(0.0);
  term2_ = std::sqrt(2.0 * static_cast<double>(regression.neighbors)) * max_pinv_ *
           (inputs.lipschitz_g0 + inputs.lipschitz_G * surrogate.control_bound()) * std::sqrt(phi0) *
           std::sqrt(ones_.value) * epsilon_;
}

DiagnosticBreakdown ErrorDiagnostic::operator()(const Eigen::VectorXd& x) const {
  DiagnosticBreakdown out;
  out.dist = dist_to_cloud(x, centers_);
  out.term1 = term1_scale_ * out.dist;
  out.term2 = term2_;
  return out;
}

void ConditioningStats::write_csv(const std::filesystem::path& path) const {
  Eigen::MatrixXd rows(lambda_min.size(), 3);
  for (Index i = 0; i < lambda_min.size(); ++i) {
    rows(i, 0) = static_cast<double>(i);
    rows(i, 1) = lambda_min(i);
    rows(i, 2) = scaled_pinv_norm(i);
  }
  kedmd::write_csv(path, {"cluster", "lambda_min", "scaled_pinv_norm"}, rows);
}

ConditioningStats conditioning_stats(const ClusterRegression& regression) {
  ConditioningStats stats;
  std::vector<double> lambdas;
  std::vector<double> scaled;
  for (const ClusterFit& fit : regression.clusters) {
    if (fit.rejected) {
      ++stats.rejected;
      continue;
    }
    lambdas.push_back(fit.lambda_min_S);
    scaled.push_back(fit.scaled_pinv_norm);
  }
  stats.lambda_min = Eigen::Map<const Eigen::VectorXd>(lambdas.data(), static_cast<Index>(lambdas.size()));
  stats.scaled_pinv_norm = Eigen::Map<const Eigen::VectorXd>(scaled.data(), static_cast<Index>(scaled.size()));
  if (!scaled.empty()) {
    stats.max_scaled = *std::max_element(scaled.begin(), scaled.end());
    std::sort(scaled.begin(), scaled.end());
    const std::size_t mid = scaled.size() / 2;
    stats.median_scaled = scaled.size() % 2 ? scaled[mid] : 0.5 * (scaled[mid - 1] + scaled[mid]);
  }
  return stats;
}

Eigen::VectorXd control_error_heatmap(const ControlSurrogate& surrogate,
                                      const ControlAffineSystem& truth, const PointCloud& validation,
                                      const std::vector<Eigen::VectorXd>& controls) {
  const int n = surrogate.state_dim();
  const int m = surrogate.control_dim();
  const Eigen::MatrixXd flat = surrogate.stacked_all(validation);
  Eigen::VectorXd worst = Eigen::VectorXd::Zero(validation.size());
  for (Index i = 0; i < validation.size(); ++i) {
    const Eigen::VectorXd x = validation.point(i);
    const Eigen::Map<const Eigen::MatrixXd> h(flat.col(i).data(), n, m + 1);
    const Eigen::VectorXd g0 = truth.drift(x);
    const Eigen::MatrixXd g = truth.input(x);
    for (const Eigen::VectorXd& u : controls) {
      const Eigen::VectorXd predicted = h.col(0) + h.rightCols(m) * u;
      worst(i) = std::max(worst(i), (g0 + g * u - predicted).norm());
    }
  }
  return worst;
}

Eigen::MatrixXd hold_schedule(const Eigen::MatrixXd& values, Index hold) {
  if (hold < 1) throw std::invalid_argument("hold_schedule: hold must be >= 1");
  Eigen::MatrixXd schedule(values.rows(), values.cols() * hold);
  for (Index j = 0; j < values.cols(); ++j) {
    for (Index h = 0; h < hold; ++h) schedule.col(j * hold + h) = values.col(j);
  }
  return schedule;
}

void ControlledTrajectory::write_csv(const std::filesystem::path& path) const {
  const Index n = surrogate.rows();
  const Index m = controls.rows();
  const Index len = surrogate.cols();
  std::vector<std::string> header{"k"};
  for (auto&& s : numbered_names("x", static_cast<int>(n))) header.push_back(s);
  for (auto&& s : numbered_names("xt", static_cast<int>(n))) header.push_back(s);
  for (auto&& s : numbered_names("u", static_cast<int>(m))) header.push_back(s);
  header.emplace_back("error");
  Eigen::MatrixXd rows(len, static_cast<Index>(header.size()));
  for (Index k = 0; k < len; ++k) {
    rows(k, 0) = static_cast<double>(k);
    rows.block(k, 1, 1, n) = surrogate.col(k).transpose();
    rows.block(k, 1 + n, 1, n) = truth.col(k).transpose();
    for (Index j = 0; j < m; ++j) rows(k, 1 + 2 * n + j) = k < controls.cols() ? controls(j, k) : std::nan("");
    rows(k, 1 + 2 * n + m) = error[static_cast<std::size_t>(k)];
  }
  kedmd::write_csv(path, header, rows);
}

ControlledTrajectory controlled_rollout(const ControlSurrogate& surrogate,
                                        const ControlAffineSystem& truth, const Eigen::VectorXd& x0,
                                        const Eigen::MatrixXd& schedule, bool halt_on_exit) {
  if (schedule.rows() != surrogate.control_dim() && schedule.cols() > 0) {
    throw std::invalid_argument("controlled_rollout: schedule has the wrong control dimension");
  }
  ControlledTrajectory traj;
  std::vector<Eigen::VectorXd> xs{x0};
  std::vector<Eigen::VectorXd> ts{x0};
  traj.error.push_back(0.0);
  Index k = 0;
  for (; k < schedule.cols(); ++k) {
    if (!truth.domain.contains(xs.back(), 1e-12)) {
      if (!traj.exit_step) traj.exit_step = k;
      if (halt_on_exit) {
        traj.halted = true;
        break;
      }
    }
    const Eigen::VectorXd u = schedule.col(k);
    xs.push_back(surrogate.predict(xs.back(), u));
    ts.push_back(truth.step(ts.back(), u));
    traj.error.push_back((xs.back() - ts.back()).norm());
  }
  if (!traj.exit_step && !truth.domain.contains(xs.back(), 1e-12)) traj.exit_step = static_cast<Index>(xs.size()) - 1;
  const Index len = static_cast<Index>(xs.size());
  traj.surrogate.resize(x0.size(), len);
  traj.truth.resize(x0.size(), len);
  for (Index i = 0; i < len; ++i) {
    traj.surrogate.col(i) = xs[static_cast<std::size_t>(i)];
    traj.truth.col(i) = ts[static_cast<std::size_t>(i)];
  }
  traj.controls = schedule.leftCols(k);
  return traj;
}

void ErrorEnvelope::write_csv(const std::filesystem::path& path) const {
  std::vector<std::string> header{"k"};
  for (double q : quantiles) header.push_back("q" + format_double(q));
  Eigen::MatrixXd rows(values.rows(), values.cols() + 1);
  for (Index k = 0; k < values.rows(); ++k) rows(k, 0) = static_cast<double>(k);
  rows.rightCols(values.cols()) = values;
  kedmd::write_csv(path, header, rows);
}

ErrorEnvelope error_envelope(const std::vector<ControlledTrajectory>& runs, std::vector<double> quantiles) {
  std::vector<std::vector<double>> errors;
  errors.reserve(runs.size());
  for (const auto& run : runs) errors.push_back(run.error);
  return error_envelope(errors, std::move(quantiles));
}

ErrorEnvelope error_envelope(const std::vector<std::vector<double>>& errors, std::vector<double> quantiles) {
  for (double q : quantiles) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("error_envelope: quantiles must lie in [0, 1]");
  }
  ErrorEnvelope env;
  env.quantiles = std::move(quantiles);
  std::size_t steps = 0;
  for (const auto& run : errors) steps = std::max(steps, run.size());
  env.values.resize(static_cast<Index>(steps), static_cast<Index>(env.quantiles.size()));
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<double> sample;
    for (const auto& run : errors) {
      if (k < run.size()) sample.push_back(run[k]);
    }
    std::sort(sample.begin(), sample.end());
    for (std::size_t q = 0; q < env.quantiles.size(); ++q) {
      // Linear interpolation between order statistics.
      const double pos = env.quantiles[q] * static_cast<double>(sample.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, sample.size() - 1);
      const double w = pos - static_cast<double>(lo);
      env.values(static_cast<Index>(k), static_cast<Index>(q)) = (1.0 - w) * sample[lo] + w * sample[hi];
    }
  }
  return env;
}

void save_control_surrogate(const ControlSurrogate& surrogate, const ClusterRegression& regression,
                            const std::filesystem::path& dir) {
  nlohmann::ordered_json extra;
  extra["control"] = {{"n", surrogate.state_dim()},
                      {"m", surrogate.control_dim()},
                      {"R", surrogate.control_bound()},
                      {"N", regression.neighbors},
                      {"epsilon", regression.epsilon},
                      {"requested_centers", regression.centers.size()},
                      {"rejected_clusters", regression.rejected}};
  save_model(surrogate.model(), dir, extra.dump());
}

ControlSurrogate load_control_surrogate(const std::filesystem::path& dir) {
  RkhsModel model = load_model(dir);
  try {
    const auto meta = nlohmann::json::parse(read_text(dir / "meta.json"));
    const auto& c = meta.at("control");
    return ControlSurrogate(std::move(model), c.at("n").get<int>(), c.at("m").get<int>(),
                            c.at("R").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
}

}  // namespace kedmd
