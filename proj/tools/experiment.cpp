#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <Eigen/Core>

#include "kedmd/control.hpp"
#include "kedmd/io.hpp"
#include "kedmd/koopman.hpp"
#include "kedmd/random.hpp"
#include "kedmd/stability.hpp"
#include "kedmd/svg.hpp"
#include "kedmd/systems.hpp"

namespace kedmd::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config

class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + key + ": wrong type");
    }
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + key + ": wrong type");
    }
    out = value;
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(where_ + key + ": unknown key");
    }
  }

  [[nodiscard]] const std::string& where() const { return where_; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

GridSpec read_grid(const json& j, const std::string& where, GridSpec grid) {
  Fields f(j, where);
  f.get("type", grid.type);
  f.get("delta", grid.delta);
  f.get("points_per_axis", grid.points_per_axis);
  f.get("path", grid.path);
  f.finish();
  if (grid.type != "uniform" && grid.type != "chebyshev" && grid.type != "file") {
    throw ConfigError(where + "type: expected uniform, chebyshev or file");
  }
  if (!(grid.delta > 0.0)) throw ConfigError(where + "delta: must be > 0");
  if (grid.points_per_axis < 2) throw ConfigError(where + "points_per_axis: must be >= 2");
  if (grid.type == "file" && grid.path.empty()) throw ConfigError(where + "path: required for file grids");
  return grid;
}

ordered_json grid_json(const GridSpec& g) {
  return {{"type", g.type}, {"delta", g.delta}, {"points_per_axis", g.points_per_axis}, {"path", g.path}};
}

template <class T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> parse_epsilon(const std::string& text) {
  if (text == "1/d") return std::nullopt;
  try {
    const double eps = parse_double(text);
    if (!(eps >= 0.0)) throw ConfigError("control.epsilon: must be >= 0");
    return eps;
  } catch (const IoError&) {
    throw ConfigError("control.epsilon: expected \"1/d\" or a number");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Fields f(j, "");
  f.get("system", c.system);
  if (const json* g = f.child("grid")) c.grid = read_grid(*g, "grid.", c.grid);
  if (const json* k = f.child("kernel")) {
    Fields kf(*k, "kernel.");
    kf.get("smoothness", c.kernel.smoothness);
    kf.get("support_radius", c.kernel.support_radius);
    kf.finish();
  }
  f.get("lambda", c.lambda);
  f.get("variant", c.variant);
  if (const json* v = f.child("validation")) {
    Fields vf(*v, "validation.");
    vf.get("type", c.validation.type);
    vf.get("delta", c.validation.delta);
    vf.get("boxes", c.validation.boxes);
    vf.finish();
  }
  if (const json* cj = f.child("control")) {
    Fields cf(*cj, "control.");
    cf.get("N", c.control.N);
    cf.get("sampling", c.control.sampling);
    if (const json* e = cf.child("epsilon")) {
      if (e->is_number()) {
        c.control.epsilon = format_double(e->get<double>());
      } else if (e->is_string()) {
        c.control.epsilon = e->get<std::string>();
      } else {
        throw ConfigError("control.epsilon: expected \"1/d\" or a number");
      }
    }
    if (const json* g = cf.child("centers")) c.control.centers = read_grid(*g, "control.centers.", c.control.centers);
    cf.get("control_bound", c.control.control_bound);
    cf.get("dataset", c.control.dataset);
    cf.get("validation_half", c.control.validation_half);
    cf.get("validation_delta", c.control.validation_delta);
    cf.get("validation_controls", c.control.validation_controls);
    cf.get("lipschitz_g0", c.control.lipschitz_g0);
    cf.get("lipschitz_G", c.control.lipschitz_G);
    cf.finish();
  }
  if (const json* r = f.child("rollout")) {
    Fields rf(*r, "rollout.");
    rf.get("initial", c.rollout.initial);
    rf.get("random_initial", c.rollout.random_initial);
    rf.get("steps", c.rollout.steps);
    rf.get("hold", c.rollout.hold);
    rf.get("policy", c.rollout.policy);
    rf.finish();
  }
  if (const json* l = f.child("lyapunov")) {
    Fields lf(*l, "lyapunov.");
    lf.get("s", c.powerform_s);
    lf.finish();
  }
  f.get("seed", c.seed);
  f.get("out", c.out);
  f.get("model", c.model);
  f.finish();

  if (c.kernel.smoothness < 0 || c.kernel.smoothness > 3) throw ConfigError("kernel.smoothness: expected 0..3");
  if (c.kernel.support_radius && !(*c.kernel.support_radius > 0.0)) {
    throw ConfigError("kernel.support_radius: must be > 0");
  }
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda: must be >= 0");
  if (c.variant != "standard" && c.variant != "alternative") {
    throw ConfigError("variant: expected standard or alternative");
  }
  if (c.validation.type != "staggered" && c.validation.type != "training") {
    throw ConfigError("validation.type: expected staggered or training");
  }
  if (!(c.validation.delta > 0.0)) throw ConfigError("validation.delta: must be > 0");
  for (double h : c.validation.boxes) {
    if (!(h > 0.0)) throw ConfigError("validation.boxes: half-widths must be > 0");
  }
  if (c.control.N < 1) throw ConfigError("control.N: must be >= 1");
  if (c.control.sampling != "ball" && c.control.sampling != "exact") {
    throw ConfigError("control.sampling: expected ball or exact");
  }
  (void)parse_epsilon(c.control.epsilon);
  if (c.control.control_bound && !(*c.control.control_bound > 0.0)) {
    throw ConfigError("control.control_bound: must be > 0");
  }
  if (c.control.validation_half && !(*c.control.validation_half > 0.0)) {
    throw ConfigError("control.validation_half: must be > 0");
  }
  if (!(c.control.validation_delta > 0.0)) throw ConfigError("control.validation_delta: must be > 0");
  if (c.control.validation_controls < 1) throw ConfigError("control.validation_controls: must be >= 1");
  if (c.rollout.random_initial < 0) throw ConfigError("rollout.random_initial: must be >= 0");
  if (c.rollout.steps < 0) throw ConfigError("rollout.steps: must be >= 0");
  if (c.rollout.hold < 1) throw ConfigError("rollout.hold: must be >= 1");
  if (c.rollout.policy != "halt" && c.rollout.policy != "proceed") {
    throw ConfigError("rollout.policy: expected halt or proceed");
  }
  if (!(c.powerform_s > 0.0 && c.powerform_s < 1.0)) throw ConfigError("lyapunov.s: must lie in (0, 1)");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  try {
    return from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ordered_json ExperimentConfig::to_json() const {
  ordered_json j;
  j["system"] = system;
  j["grid"] = grid_json(grid);
  j["kernel"] = {{"smoothness", kernel.smoothness}, {"support_radius", optional_json(kernel.support_radius)}};
  j["lambda"] = lambda;
  j["variant"] = variant;
  j["validation"] = {{"type", validation.type}, {"delta", validation.delta}, {"boxes", validation.boxes}};
  const auto eps = parse_epsilon(control.epsilon);
  j["control"] = {{"N", control.N},
                  {"sampling", control.sampling},
                  {"epsilon", eps ? json(*eps) : json("1/d")},
                  {"centers", grid_json(control.centers)},
                  {"control_bound", optional_json(control.control_bound)},
                  {"dataset", control.dataset},
                  {"validation_half", optional_json(control.validation_half)},
                  {"validation_delta", control.validation_delta},
                  {"validation_controls", control.validation_controls},
                  {"lipschitz_g0", optional_json(control.lipschitz_g0)},
                  {"lipschitz_G", optional_json(control.lipschitz_G)}};
  j["rollout"] = {{"initial", rollout.initial},
                  {"random_initial", rollout.random_initial},
                  {"steps", rollout.steps},
                  {"hold", rollout.hold},
                  {"policy", rollout.policy}};
  j["lyapunov"] = {{"s", powerform_s}};
  j["seed"] = seed;
  j["out"] = out;
  j["model"] = model;
  return j;
}

namespace {

// ---------------------------------------------------------------- plumbing

class Timer {
 public:
  void lap(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    timing_[name] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }
  [[nodiscard]] const ordered_json& json() const { return timing_; }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
  ordered_json timing_;
};

void write_json(const std::filesystem::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

/// Streams seeded from the one user seed; each purpose gets its own.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return seed + 0x9E3779B97F4A7C15ULL * stream;
}

struct Setup {
  std::filesystem::path out;
  NamedSystem system;
  WendlandKernel kernel;
  Eigen::VectorXd x_star;
};

Setup prepare(const ExperimentConfig& config) {
  NamedSystem system;
  try {
    system = resolve_system(config.system);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
  const Box& domain = system.autonomous.domain;
  const double sigma = config.kernel.support_radius.value_or(domain.diameter());
  WendlandKernel kernel(system.autonomous.dim, config.kernel.smoothness, sigma);
  Eigen::VectorXd x_star;
  if (system.lyapunov) {
    x_star = system.lyapunov->x_star;
  } else if (!system.equilibria.empty()) {
    x_star = system.equilibria.front();
  } else {
    x_star = 0.5 * (domain.lower() + domain.upper());
  }
  std::filesystem::create_directories(config.out);
  write_json(std::filesystem::path(config.out) / "config.json", config.to_json());
  return {config.out, std::move(system), kernel, std::move(x_star)};
}

PointCloud build_grid(const GridSpec& spec, const Box& domain, const std::string& what) {
  try {
    if (spec.type == "uniform") return uniform_grid(domain, spec.delta);
    if (spec.type == "chebyshev") return chebyshev_grid(domain, spec.points_per_axis);
    PointCloud cloud = read_point_cloud_csv(spec.path);
    if (cloud.dim() != domain.dim()) throw ConfigError(what + ": file points have the wrong dimension");
    return cloud;
  } catch (const IoError& e) {
    throw ConfigError(what + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::vector<Box> nested_boxes(const ExperimentConfig& config, const Box& domain, const Eigen::VectorXd& x_star) {
  std::vector<double> halves = config.validation.boxes;
  if (halves.empty()) {
    const double h = 0.5 * (domain.upper() - domain.lower()).minCoeff();
    halves = {h, h / 2, h / 4};
  }
  std::vector<Box> boxes;
  for (double h : halves) {
    boxes.emplace_back(x_star.array() - h, x_star.array() + h);
  }
  return boxes;
}

std::vector<std::string> point_header(int n) {
  if (n == 2) return {"x", "y"};
  return numbered_names("x", n);
}

/// Point coordinates followed by extra value columns.
void write_point_table(const std::filesystem::path& path, const PointCloud& points,
                       const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns) {
  std::vector<std::string> header = point_header(points.dim());
  Eigen::MatrixXd rows(points.size(), points.dim() + static_cast<Index>(columns.size()));
  rows.leftCols(points.dim()) = points.matrix().transpose();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    header.push_back(columns[c].first);
    rows.col(points.dim() + static_cast<Index>(c)) = columns[c].second;
  }
  write_csv(path, header, rows);
}

ordered_json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

ordered_json box_json(const Box& b) {
  return {{"lower", vector_json(b.lower())}, {"upper", vector_json(b.upper())}};
}

// ---------------------------------------------------------------- autonomous

AutonomousSurrogate autonomous_surrogate(const ExperimentConfig& config, const Setup& setup) {
  if (!config.model.empty()) {
    AutonomousSurrogate s = load_surrogate(config.model);
    if (s.dim() != setup.system.autonomous.dim) throw ConfigError("model: dimension differs from the system");
    return s;
  }
  const PointCloud grid = build_grid(config.grid, setup.system.autonomous.domain, "grid");
  try {
    return fit_autonomous(setup.system.autonomous, grid, setup.kernel, config.lambda, parse_variant(config.variant));
  } catch (const DuplicateCentersError& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

PointCloud validation_points(const ExperimentConfig& config, const Setup& setup, const AutonomousSurrogate& s) {
  if (config.validation.type == "training") return s.model().centers();
  return staggered_grid(setup.system.autonomous.domain, config.validation.delta);
}

ordered_json model_json(const AutonomousSurrogate& s) {
  const RkhsModel& m = s.model();
  return {{"centers", m.centers().size()},
          {"kernel",
           {{"dim", m.kernel().dim()},
            {"smoothness", m.kernel().smoothness()},
            {"support_radius", m.kernel().support_radius()}}},
          {"lambda", m.lambda()},
          {"jitter", m.jitter()},
          {"variant", to_string(s.variant())}};
}

/// Box maxima table: half-width per axis, points inside, max error.
ordered_json write_box_table(const std::filesystem::path& path, const PointCloud& points,
                             const Eigen::VectorXd& errors, const std::vector<Box>& boxes) {
  Eigen::MatrixXd rows(static_cast<Index>(boxes.size()), 3);
  ordered_json table = ordered_json::array();
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    Index inside = 0;
    for (Index i = 0; i < points.size(); ++i) inside += boxes[b].contains(points.point(i)) ? 1 : 0;
    const double half = 0.5 * (boxes[b].upper() - boxes[b].lower()).maxCoeff();
    const double max_error = max_in_box(points, errors, boxes[b]);
    rows.row(static_cast<Index>(b)) << half, static_cast<double>(inside), max_error;
    table.push_back({{"box", box_json(boxes[b])}, {"points", inside}, {"max_error", max_error}});
  }
  write_csv(path, {"half_width", "points", "max_error"}, rows);
  return table;
}

}  // namespace

void fit_autonomous(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  const AutonomousSurrogate s = autonomous_surrogate(config, setup);
  timer.lap("fit");
  save_surrogate(s, setup.out / "model");
  timer.lap("save");

  const DynamicalSystem& sys = setup.system.autonomous;
  const PointCloud& centers = s.model().centers();
  const double site_residual = (s.predict(centers) - sys.step_all(centers)).colwise().norm().maxCoeff();
  const double fill = fill_distance(centers, sys.domain, sys.domain.diameter() / 400.0);
  const PointCloud validation = validation_points(config, setup, s);
  const Eigen::VectorXd errors = one_step_errors(sys, s, validation);
  const std::vector<Box> boxes = nested_boxes(config, sys.domain, setup.x_star);
  timer.lap("validate");

  ordered_json eq = ordered_json::array();
  for (const Eigen::VectorXd& x : setup.system.equilibria) {
    ordered_json e{{"point", vector_json(x)}, {"is_center", centers.find(x).has_value()}};
    e["surrogate_residual"] = (s.predict(x) - x).norm();
    eq.push_back(e);
  }

  ordered_json m;
  m["artifact"] = "autonomous surrogate fit";
  m["system"] = setup.system.id;
  m["model"] = model_json(s);
  m["fill_distance"] = fill;
  m["data_site_residual"] = site_residual;
  m["successors_outside_domain"] = s.successors_outside().size();
  m["equilibria"] = eq;
  m["validation"] = {{"type", config.validation.type}, {"points", validation.size()}, {"max_error", errors.maxCoeff()}};
  ordered_json box_max = ordered_json::array();
  for (const Box& b : boxes) box_max.push_back({{"box", box_json(b)}, {"max_error", max_in_box(validation, errors, b)}});
  m["box_max_error"] = box_max;
  write_json(setup.out / "metrics.json", m);
  write_json(setup.out / "timing.json", timer.json());
}

void heatmap(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  const AutonomousSurrogate s = autonomous_surrogate(config, setup);
  timer.lap("fit");
  const DynamicalSystem& sys = setup.system.autonomous;
  const PointCloud validation = validation_points(config, setup, s);
  const std::vector<Box> boxes = nested_boxes(config, sys.domain, setup.x_star);
  const ProportionalityProfile profile = proportionality_profile(sys, s, validation, setup.x_star, boxes);
  timer.lap("evaluate");

  write_point_table(setup.out / "heatmap.csv", validation, {{"err", profile.error}});
  const LogScale scale = log_scale_for(profile.error);
  if (validation.dim() == 2) {
    write_heatmap_svg(setup.out / "heatmap.svg", validation, profile.error, "log10 one-step error", scale);
  }
  const ordered_json table = write_box_table(setup.out / "box_maxima.csv", validation, profile.error, boxes);
  profile.write_csv(setup.out / "profile.csv");
  timer.lap("write");

  ordered_json m;
  m["artifact"] = "one-step error heatmap and nested-box maxima";
  m["system"] = setup.system.id;
  m["model"] = model_json(s);
  m["validation"] = {{"type", config.validation.type}, {"points", validation.size()}};
  m["max_error"] = profile.error.maxCoeff();
  m["box_maxima"] = table;
  m["max_error_over_distance"] = profile.max_ratio;
  m["svg_scale"] = {{"log10_lo", scale.lo}, {"log10_hi", scale.hi}};
  write_json(setup.out / "metrics.json", m);
  write_json(setup.out / "timing.json", timer.json());
}

void lyapunov(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  if (!setup.system.lyapunov) throw ConfigError("lyapunov: system '" + setup.system.id + "' declares no Lyapunov function");
  const LyapunovSpec& spec = *setup.system.lyapunov;
  const AutonomousSurrogate s = autonomous_surrogate(config, setup);
  timer.lap("fit");
  const DynamicalSystem& sys = setup.system.autonomous;
  const PointCloud validation = validation_points(config, setup, s);
  const Eigen::MatrixXd surrogate_next = s.predict(validation);
  const Eigen::MatrixXd true_next = sys.step_all(validation);
  const MarginReport surrogate = check_decrease(surrogate_next, spec, validation);
  const MarginReport truth = check_decrease(true_next, spec, validation);
  timer.lap("margins");

  surrogate.write_csv(setup.out / "margins.csv");
  write_text(setup.out / "margins.json", surrogate.summary_json() + "\n");
  truth.write_csv(setup.out / "margins_true.csv");
  write_text(setup.out / "margins_true.json", truth.summary_json() + "\n");

  ordered_json m;
  m["artifact"] = "Lyapunov decrease margins";
  m["system"] = setup.system.id;
  m["model"] = model_json(s);
  m["points"] = validation.size();
  m["surrogate"] = ordered_json::parse(surrogate.summary_json());
  m["true_system"] = ordered_json::parse(truth.summary_json());
  if (spec.power_p) {
    const PowerformReport pf = check_powerform_transfer(surrogate_next, spec, validation, config.powerform_s);
    m["powerform"] = {{"s", pf.s}, {"violations", pf.violations()}, {"min_margin", pf.surrogate.min_margin}};
  }
  if (spec.omega_V) {
    const TransferCheck t = check_transfer_implication(true_next, surrogate_next, spec, validation);
    m["transfer"] = {{"theta", t.theta},
                     {"max_omega_of_error", t.max_omega_of_error},
                     {"uniform_premise", t.uniform_premise},
                     {"premise_points", t.premise_points},
                     {"conclusion_failures", t.conclusion_failures}};
  }
  const PracticalRegion region = practical_region_estimate(surrogate);
  m["practical_region"] = {{"c_fail", region.c_fail}, {"ball_radius", region.ball_radius}};
  timer.lap("checks");
  write_json(setup.out / "metrics.json", m);
  write_json(setup.out / "timing.json", timer.json());
}

namespace {

// ---------------------------------------------------------------- control

ControlAffineSystem control_system(const ExperimentConfig& config, const Setup& setup) {
  if (!setup.system.control) throw ConfigError("system '" + setup.system.id + "' has no control inputs");
  ControlAffineSystem c = *setup.system.control;
  if (config.control.control_bound) c.control_bound = *config.control.control_bound;
  return c;
}

struct ControlFit {
  ControlDataset data;
  ClusterFitResult result;
  double epsilon_requested = 0.0;
};

ControlFit fit_control_model(const ExperimentConfig& config, const Setup& setup, const ControlAffineSystem& ctrl) {
  const Index N = config.control.N;
  if (N < ctrl.control_dim + 1) {
    throw ConfigError("control.N: " + std::to_string(N) + " is below m + 1 = " + std::to_string(ctrl.control_dim + 1));
  }
  const PointCloud centers = build_grid(config.control.centers, ctrl.domain, "control.centers");
  double eps = 0.0;
  if (config.control.sampling == "ball") {
    eps = parse_epsilon(config.control.epsilon).value_or(1.0 / static_cast<double>(centers.size()));
    if (!(eps > 0.0)) throw ConfigError("control.epsilon: ball sampling needs epsilon > 0");
  }
  ControlDataset data = [&] {
    if (!config.control.dataset.empty()) {
      try {
        return ControlDataset::read_csv(config.control.dataset, ctrl.control_bound);
      } catch (const IoError& e) {
        throw ConfigError(std::string("control.dataset: ") + e.what());
      }
    }
    Rng rng(stream_seed(config.seed, 1));
    return eps > 0.0 ? sample_epsilon_balls(ctrl, centers, N, eps, rng) : sample_exact_centers(ctrl, centers, N, rng);
  }();
  if (data.state_dim() != ctrl.state_dim || data.control_dim() != ctrl.control_dim) {
    throw ConfigError("control.dataset: dimensions differ from the system");
  }
  ClusterFitResult result = fit_cluster_regression(data, centers, N, setup.kernel, config.lambda);
  return {std::move(data), std::move(result), eps};
}

std::vector<Eigen::VectorXd> validation_controls(const ExperimentConfig& config, const ControlAffineSystem& ctrl) {
  const int count = config.control.validation_controls;
  const double R = ctrl.control_bound;
  std::vector<Eigen::VectorXd> controls;
  if (ctrl.control_dim == 1) {
    // -R, -R + 2R/count, ..., R - 2R/count
    for (int j = 0; j < count; ++j) controls.push_back(Eigen::VectorXd::Constant(1, -R + 2.0 * R * j / count));
  } else {
    Rng rng(stream_seed(config.seed, 2));
    for (int j = 0; j < count; ++j) controls.push_back(rng.uniform_vector(ctrl.control_dim, -R, R));
  }
  return controls;
}

double center_residual(const ClusterRegression& regression, const ControlAffineSystem& ctrl) {
  double worst = 0.0;
  for (Index l = 0; l < regression.centers.size(); ++l) {
    const ClusterFit& fit = regression.clusters[static_cast<std::size_t>(l)];
    if (fit.rejected) continue;
    worst = std::max(worst, (fit.H - ctrl.stacked(regression.centers.point(l))).norm());
  }
  return worst;
}

ordered_json control_model_json(const ControlSurrogate& s) {
  return {{"centers", s.model().centers().size()},
          {"kernel",
           {{"dim", s.model().kernel().dim()},
            {"smoothness", s.model().kernel().smoothness()},
            {"support_radius", s.model().kernel().support_radius()}}},
          {"lambda", s.model().lambda()},
          {"jitter", s.model().jitter()},
          {"state_dim", s.state_dim()},
          {"control_dim", s.control_dim()},
          {"control_bound", s.control_bound()}};
}

}  // namespace

void fit_control(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  const ControlAffineSystem ctrl = control_system(config, setup);
  const ControlFit fit = fit_control_model(config, setup, ctrl);
  timer.lap("fit");
  const ClusterRegression& reg = fit.result.regression;
  fit.data.write_csv(setup.out / "dataset.csv");
  save_control_surrogate(fit.result.surrogate, reg, setup.out / "model");
  const ConditioningStats stats = conditioning_stats(reg);
  stats.write_csv(setup.out / "conditioning.csv");
  timer.lap("write");

  ordered_json m;
  m["artifact"] = "control-affine surrogate fit and cluster conditioning";
  m["system"] = setup.system.id;
  m["model"] = control_model_json(fit.result.surrogate);
  m["sampling"] = config.control.dataset.empty() ? config.control.sampling : "file";
  m["samples"] = fit.data.size();
  m["N"] = reg.neighbors;
  m["requested_centers"] = reg.centers.size();
  m["epsilon_requested"] = fit.epsilon_requested;
  m["epsilon_max_cluster_radius"] = reg.epsilon;
  m["rejected_clusters"] = reg.rejected;
  m["conditioning"] = {{"min_lambda_min",
                        stats.lambda_min.size() > 0 ? stats.lambda_min.minCoeff() : 0.0},
                       {"max_scaled_pinv_norm", stats.max_scaled},
                       {"median_scaled_pinv_norm", stats.median_scaled}};
  m["center_residual"] = center_residual(reg, ctrl);
  write_json(setup.out / "metrics.json", m);
  write_json(setup.out / "timing.json", timer.json());
}

void control_heatmap(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  const ControlAffineSystem ctrl = control_system(config, setup);
  std::optional<ControlFit> fit;
  std::optional<ControlSurrogate> loaded;
  if (config.model.empty()) {
    fit = fit_control_model(config, setup, ctrl);
  } else {
    loaded = load_control_surrogate(config.model);
    if (loaded->state_dim() != ctrl.state_dim || loaded->control_dim() != ctrl.control_dim) {
      throw ConfigError("model: dimensions differ from the system");
    }
  }
  const ControlSurrogate& s = fit ? fit->result.surrogate : *loaded;
  timer.lap("fit");

  const Box& domain = ctrl.domain;
  const Eigen::VectorXd mid = 0.5 * (domain.lower() + domain.upper());
  const double half = config.control.validation_half.value_or(0.25 * (domain.upper() - domain.lower()).minCoeff());
  const Box box(mid.array() - half, mid.array() + half);
  const PointCloud validation = staggered_grid(box, config.control.validation_delta);
  const std::vector<Eigen::VectorXd> controls = validation_controls(config, ctrl);
  const Eigen::VectorXd errors = control_error_heatmap(s, ctrl, validation, controls);
  timer.lap("evaluate");

  write_point_table(setup.out / "control_heatmap.csv", validation, {{"err", errors}});
  const LogScale scale = log_scale_for(errors);
  if (validation.dim() == 2) {
    write_heatmap_svg(setup.out / "control_heatmap.svg", validation, errors, "log10 max one-step error over controls",
                      scale);
  }

  ordered_json m;
  m["artifact"] = "control one-step error heatmap";
  m["system"] = setup.system.id;
  m["model"] = control_model_json(s);
  m["validation"] = {{"box", box_json(box)}, {"points", validation.size()}, {"controls", controls.size()}};
  m["max_error"] = errors.maxCoeff();
  m["svg_scale"] = {{"log10_lo", scale.lo}, {"log10_hi", scale.hi}};

  if (fit && config.control.lipschitz_g0 && config.control.lipschitz_G) {
    const ErrorDiagnostic diag(s, fit->result.regression,
                               {*config.control.lipschitz_g0, *config.control.lipschitz_G, std::nullopt, 16});
    Eigen::VectorXd dist(validation.size()), term1(validation.size()), term2(validation.size());
    Index covered = 0;
    for (Index i = 0; i < validation.size(); ++i) {
      const DiagnosticBreakdown b = diag(validation.point(i));
      dist(i) = b.dist;
      term1(i) = b.term1;
      term2(i) = b.term2;
      covered += errors(i) <= b.total() ? 1 : 0;
    }
    write_point_table(setup.out / "diagnostic.csv", validation,
                      {{"err", errors}, {"dist", dist}, {"term1", term1}, {"term2", term2},
                       {"total", term1 + term2}});
    m["diagnostic"] = {{"fill_distance", diag.fill_distance()},
                       {"native_norm", diag.max_native_norm()},
                       {"native_norm_substituted", diag.native_norm_substituted()},
                       {"ones_term", diag.ones().value},
                       {"ones_term_exact", diag.ones().exact},
                       {"max_pinv_norm", diag.max_pinv_norm()},
                       {"epsilon", diag.epsilon()},
                       {"points_with_error_below_diagnostic", covered}};
    timer.lap("diagnostic");
  }
  write_json(setup.out / "metrics.json", m);
  write_json(setup.out / "timing.json", timer.json());
}

namespace {

std::vector<Eigen::VectorXd> initial_points(const ExperimentConfig& config, const Box& domain) {
  std::vector<Eigen::VectorXd> points;
  for (const auto& p : config.rollout.initial) {
    if (static_cast<int>(p.size()) != domain.dim()) throw ConfigError("rollout.initial: wrong dimension");
    points.push_back(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Index>(p.size())));
  }
  Rng rng(stream_seed(config.seed, 3));
  for (long long i = 0; i < config.rollout.random_initial; ++i) {
    Eigen::VectorXd x(domain.dim());
    for (int a = 0; a < domain.dim(); ++a) x(a) = rng.uniform(domain.lower()(a), domain.upper()(a));
    points.push_back(x);
  }
  if (points.empty()) throw ConfigError("rollout: no initial conditions (initial or random_initial)");
  return points;
}

std::string run_name(std::size_t i) {
  char buffer[48];
  std::snprintf(buffer, sizeof(buffer), "trajectory_%03zu.csv", i);
  return buffer;
}

ordered_json run_json(const Eigen::VectorXd& x0, const std::vector<double>& error, Index steps,
                      const std::optional<Index>& exit_step, bool halted) {
  ordered_json r;
  r["x0"] = vector_json(x0);
  r["steps"] = steps;
  r["max_error"] = error.empty() ? 0.0 : *std::max_element(error.begin(), error.end());
  r["final_error"] = error.empty() ? 0.0 : error.back();
  r["exit_step"] = exit_step ? json(*exit_step) : json(nullptr);
  r["halted"] = halted;
  return r;
}

}  // namespace

void rollout(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  const std::vector<Eigen::VectorXd> starts = initial_points(config, setup.system.autonomous.domain);
  const std::filesystem::path dir = setup.out / "trajectories";
  std::filesystem::create_directories(dir);
  const Index steps = config.rollout.steps;
  const bool halt = config.rollout.policy == "halt";

  std::vector<std::vector<double>> errors;
  ordered_json runs = ordered_json::array();
  ordered_json m;
  m["artifact"] = "trajectory comparison and error envelope";
  m["system"] = setup.system.id;

  if (setup.system.control) {
    const ControlAffineSystem ctrl = control_system(config, setup);
    std::optional<ControlSurrogate> surrogate;
    if (config.model.empty()) {
      surrogate = fit_control_model(config, setup, ctrl).result.surrogate;
    } else {
      surrogate = load_control_surrogate(config.model);
    }
    timer.lap("fit");
    m["model"] = control_model_json(*surrogate);
    Rng rng(stream_seed(config.seed, 4));
    const Index hold = config.rollout.hold;
    const Index values = (steps + hold - 1) / hold;
    for (std::size_t i = 0; i < starts.size(); ++i) {
      Eigen::MatrixXd v(ctrl.control_dim, values);
      for (Index j = 0; j < values; ++j) v.col(j) = rng.uniform_vector(ctrl.control_dim, -ctrl.control_bound, ctrl.control_bound);
      const Eigen::MatrixXd schedule = hold_schedule(v, hold).leftCols(steps);
      const ControlledTrajectory t = controlled_rollout(*surrogate, ctrl, starts[i], schedule, halt);
      t.write_csv(dir / run_name(i));
      errors.push_back(t.error);
      runs.push_back(run_json(starts[i], t.error, t.surrogate.cols() - 1, t.exit_step, t.halted));
    }
  } else {
    const AutonomousSurrogate s = autonomous_surrogate(config, setup);
    timer.lap("fit");
    m["model"] = model_json(s);
    const DomainExitPolicy policy = halt ? DomainExitPolicy::halt : DomainExitPolicy::proceed;
    for (std::size_t i = 0; i < starts.size(); ++i) {
      const Trajectory t = kedmd::rollout(s, starts[i], steps, &setup.system.autonomous, policy);
      t.write_csv(dir / run_name(i));
      errors.push_back(t.accumulated_error);
      ordered_json r = run_json(starts[i], t.accumulated_error, t.length() - 1, t.exit_step, t.halted);
      r["max_one_step_error"] =
          t.one_step_error.empty() ? 0.0 : *std::max_element(t.one_step_error.begin(), t.one_step_error.end());
      runs.push_back(r);
    }
  }
  timer.lap("rollout");

  const ErrorEnvelope env = error_envelope(errors);
  env.write_csv(setup.out / "envelope.csv");
  m["runs"] = runs;
  m["envelope_quantiles"] = env.quantiles;
  m["envelope_max_error"] = env.values.size() > 0 ? env.values.col(env.values.cols() - 1).maxCoeff() : 0.0;
  write_json(setup.out / "metrics.json", m);
  write_json(setup.out / "timing.json", timer.json());
}

namespace {

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

Check at_most(std::string name, double value, double tolerance, std::string detail = {}) {
  return {std::move(name), value, tolerance, value <= tolerance, std::move(detail)};
}

}  // namespace

void verify(const ExperimentConfig& config) {
  Timer timer;
  const Setup setup = prepare(config);
  const DynamicalSystem& sys = setup.system.autonomous;
  const PointCloud grid = build_grid(config.grid, sys.domain, "grid");
  std::vector<Check> checks;

  // Interpolation and equilibria use lambda = 0 regardless of the config.
  const auto interp = [&](SurrogateVariant v) { return kedmd::fit_autonomous(sys, grid, setup.kernel, 0.0, v); };
  const AutonomousSurrogate standard = interp(SurrogateVariant::standard);
  checks.push_back(at_most("interpolation_exactness",
                           (standard.predict(grid) - sys.step_all(grid)).colwise().norm().maxCoeff(), 1e-8));
  const AutonomousSurrogate alternative = interp(SurrogateVariant::alternative);
  for (const Eigen::VectorXd& x : setup.system.equilibria) {
    if (!grid.find(x)) continue;
    for (const AutonomousSurrogate* s : {&standard, &alternative}) {
      const EquilibriumResidual r = check_equilibrium_preservation(sys, *s, x);
      checks.push_back(at_most("equilibrium_" + to_string(s->variant()), r.surrogate, 1e-10));
    }
  }
  timer.lap("interpolation");

  // Regularizer identities on at most 400 well-spread centers.
  const PointCloud sub = grid.size() > 400 ? farthest_point_centers(grid, 400) : grid;
  std::vector<double> lambdas{1e-4, 1e-2, 1.0};
  if (config.lambda > 0.0 && std::find(lambdas.begin(), lambdas.end(), config.lambda) == lambdas.end()) {
    lambdas.push_back(config.lambda);
  }
  for (double lambda : lambdas) {
    const RegularizerReport report = verify_regularizer_identities(setup.kernel, sub, lambda, 20, config.seed);
    for (const IdentityCheck& c : report.checks) {
      checks.push_back(at_most("regularizer_" + c.name, c.max_violation, c.tolerance, "lambda=" + format_double(lambda)));
    }
    const KernelSystem ks(setup.kernel, sub, lambda);
    Rng rng(stream_seed(config.seed, 5));
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd f = rng.normal_vector(sub.size());
      const Eigen::VectorXd alpha = ks.solve(f);
      worst = std::max(worst, (f - ks.gram_apply(alpha) - lambda * alpha).norm() / f.norm());
    }
    checks.push_back(at_most("residual_identity", worst, 1e-10, "lambda=" + format_double(lambda)));
  }
  timer.lap("identities");

  // Determinism and persistence of the configured fit.
  {
    const AutonomousSurrogate a = kedmd::fit_autonomous(sys, grid, setup.kernel, config.lambda, parse_variant(config.variant));
    const AutonomousSurrogate b = kedmd::fit_autonomous(sys, grid, setup.kernel, config.lambda, parse_variant(config.variant));
    const PointCloud probe = staggered_grid(sys.domain, std::max(config.validation.delta, sys.domain.diameter() / 100));
    const Eigen::MatrixXd pa = a.predict(probe);
    const Eigen::MatrixXd pb = b.predict(probe);
    checks.push_back(at_most("deterministic_fit", (pa.array() != pb.array()).count(), 0.0, "differing entries"));
    const std::filesystem::path bundle = setup.out / "verify_model";
    save_surrogate(a, bundle);
    const AutonomousSurrogate back = load_surrogate(bundle);
    Rng rng(stream_seed(config.seed, 6));
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd x(sys.dim);
      for (int i = 0; i < sys.dim; ++i) x(i) = rng.uniform(sys.domain.lower()(i), sys.domain.upper()(i));
      worst = std::max(worst, (back.predict(x) - a.predict(x)).norm());
    }
    std::filesystem::remove_all(bundle);
    checks.push_back(at_most("persistence_round_trip", worst, 1e-14));
  }
  timer.lap("determinism");

  if (setup.system.lyapunov) {
    const LyapunovSpec& spec = *setup.system.lyapunov;
    const PointCloud validation = staggered_grid(sys.domain, config.validation.delta);
    const std::vector<std::string> problems = spec.validate(validation);
    checks.push_back(at_most("lyapunov_spec", static_cast<double>(problems.size()), 0.0,
                             problems.empty() ? "" : problems.front()));
    const MarginReport truth = check_decrease(sys.step, spec, validation);
    checks.push_back(at_most("true_decrease_failures", static_cast<double>(truth.failure_count()), 0.0,
                             "min margin " + format_double(truth.min_margin)));
    timer.lap("lyapunov");
  }

  if (setup.system.control) {
    const ControlAffineSystem ctrl = control_system(config, setup);
    PointCloud centers = build_grid(config.control.centers, ctrl.domain, "control.centers");
    if (centers.size() > 441) centers = farthest_point_centers(centers, 441);
    const Index N = std::max<Index>(config.control.N, ctrl.control_dim + 1);
    Rng rng(stream_seed(config.seed, 7));
    const ControlDataset data = sample_exact_centers(ctrl, centers, N, rng);
    const ClusterFitResult r = fit_cluster_regression(data, centers, N, setup.kernel, 0.0);
    checks.push_back(at_most("exact_recovery", center_residual(r.regression, ctrl), 1e-8));

    double scaled_min = std::numeric_limits<double>::infinity();
    for (const ClusterFit& c : r.regression.clusters) {
      if (!c.rejected) scaled_min = std::min(scaled_min, c.scaled_pinv_norm);
    }
    checks.push_back({"scaled_pinv_norm_at_least_one", scaled_min, 1.0, scaled_min >= 1.0 - 1e-12, ""});

    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd x(ctrl.state_dim);
      for (int i = 0; i < ctrl.state_dim; ++i) x(i) = rng.uniform(ctrl.domain.lower()(i), ctrl.domain.upper()(i));
      const Eigen::VectorXd u = rng.uniform_vector(ctrl.control_dim, -ctrl.control_bound, ctrl.control_bound);
      const Eigen::VectorXd h = rng.uniform_vector(ctrl.control_dim, -0.1, 0.1);
      const Eigen::VectorXd mid = r.surrogate.predict(x, u);
      const Eigen::VectorXd second = r.surrogate.predict(x, u + h) - 2 * mid + r.surrogate.predict(x, u - h);
      worst = std::max(worst, second.norm() / (1.0 + mid.norm()));
    }
    checks.push_back(at_most("control_affinity", worst, 1e-10));
    timer.lap("control");
  }

  ordered_json report;
  report["artifact"] = "invariant suite";
  report["system"] = setup.system.id;
  ordered_json list = ordered_json::array();
  std::vector<std::string> failed;
  for (const Check& c : checks) {
    list.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"passed", c.passed},
                    {"detail", c.detail}});
    if (!c.passed) failed.push_back(c.name + (c.detail.empty() ? "" : " (" + c.detail + ")"));
  }
  report["checks"] = list;
  report["passed"] = failed.empty();
  write_json(setup.out / "verify.json", report);
  write_json(setup.out / "metrics.json", report);
  write_json(setup.out / "timing.json", timer.json());
  if (!failed.empty()) {
    std::string message = "violated:";
    for (const auto& f : failed) message += " " + f;
    throw PropertyViolation(message);
  }
}

}  // namespace kedmd::cli
