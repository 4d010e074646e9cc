#include "kedmd/systems.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "kedmd/expression.hpp"
#include "kedmd/io.hpp"

namespace kedmd {

Eigen::MatrixXd DynamicalSystem::step_all(const PointCloud& points) const {
  Eigen::MatrixXd out(dim, points.size());
  for (Index i = 0; i < points.size(); ++i) out.col(i) = step(Eigen::VectorXd(points.point(i)));
  return out;
}

Eigen::VectorXd ControlAffineSystem::step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  if (u.size() != control_dim) throw std::invalid_argument("control dimension mismatch");
  return drift(x) + input(x) * u;
}

DynamicalSystem ControlAffineSystem::with_constant_control(const Eigen::VectorXd& u) const {
  if (u.size() != control_dim) throw std::invalid_argument("control dimension mismatch");
  const ControlAffineSystem copy = *this;
  return DynamicalSystem{state_dim, domain, [copy, u](const Eigen::VectorXd& x) { return copy.step(x, u); }};
}

Eigen::MatrixXd ControlAffineSystem::stacked(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd h(state_dim, control_dim + 1);
  h.col(0) = drift(x);
  h.rightCols(control_dim) = input(x);
  return h;
}

Eigen::VectorXd kellett_step(const Eigen::VectorXd& x) {
  if (x.size() != 2) throw std::invalid_argument("kellett_step: state must be 2-dimensional");
  const double s = x.squaredNorm() - 1.0;
  Eigen::VectorXd next(2);
  next(0) = (s * x(0) - x(1)) / 8.0;
  next(1) = (x(0) + s * x(1)) / 8.0;
  return next;
}

Eigen::VectorXd duffing_drift(const Eigen::VectorXd& x, double dt) {
  if (x.size() != 2) throw std::invalid_argument("duffing: state must be 2-dimensional");
  return Eigen::Vector2d(x(0) + dt * x(1), x(1) + dt * x(0));
}

Eigen::MatrixXd duffing_input(const Eigen::VectorXd& x, double dt) {
  if (x.size() != 2) throw std::invalid_argument("duffing: state must be 2-dimensional");
  Eigen::MatrixXd g(2, 1);
  g(0, 0) = 0.0;
  g(1, 0) = -3.0 * dt * x(0) * x(0) * x(0);
  return g;
}

Eigen::VectorXd duffing_step(const Eigen::VectorXd& x, double u, double dt) {
  return duffing_drift(x, dt) + duffing_input(x, dt) * u;
}

NamedSystem kellett_system() {
  NamedSystem system;
  system.id = "kellett";
  system.autonomous = DynamicalSystem{2, Box::cube(2, -2.0, 2.0), kellett_step};
  system.equilibria.push_back(Eigen::VectorXd::Zero(2));
  LyapunovSpec spec = LyapunovSpec::power_norm(Eigen::VectorXd::Zero(2), 2, 7.0 / 32.0);
  // |F(x)| <= 2.5 on the domain, so |V(a) - V(b)| <= (5 + r) r when |a - b| <= r.
  spec.omega_V = [](double r) { return (5.0 + r) * r; };
  system.lyapunov = std::move(spec);
  return system;
}

NamedSystem duffing_system(double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("duffing_system: dt must be > 0");
  NamedSystem system;
  system.id = "duffing";
  ControlAffineSystem control;
  control.state_dim = 2;
  control.control_dim = 1;
  control.domain = Box::cube(2, -2.0, 2.0);
  control.control_bound = 2.0;
  control.drift = [dt](const Eigen::VectorXd& x) { return duffing_drift(x, dt); };
  control.input = [dt](const Eigen::VectorXd& x) { return duffing_input(x, dt); };
  system.autonomous = control.with_constant_control(Eigen::VectorXd::Zero(1));
  system.control = std::move(control);
  system.equilibria.push_back(Eigen::VectorXd::Zero(2));
  return system;
}

NamedSystem euler_discretize(const VectorField& drift, const InputField& input, int control_dim,
                             double dt, const Box& domain, double control_bound) {
  if (!(dt > 0.0)) throw std::invalid_argument("euler_discretize: dt must be > 0");
  if (control_dim < 0) throw std::invalid_argument("euler_discretize: negative control dimension");
  const int n = domain.dim();
  ControlAffineSystem control;
  control.state_dim = n;
  control.control_dim = control_dim;
  control.domain = domain;
  control.control_bound = control_bound;
  control.drift = [drift, dt](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x + dt * drift(x); };
  control.input = [input, dt, n, control_dim](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    if (control_dim == 0) return Eigen::MatrixXd(n, 0);
    return dt * input(x);
  };
  NamedSystem system;
  system.id = "custom";
  system.autonomous = control.with_constant_control(Eigen::VectorXd::Zero(control_dim));
  system.control = std::move(control);
  return system;
}

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& message) {
  throw std::invalid_argument("system config: " + message);
}

Eigen::VectorXd read_vector(const json& value, int expected, const std::string& what) {
  if (!value.is_array() || static_cast<int>(value.size()) != expected) {
    config_error(what + " must be an array of " + std::to_string(expected) + " numbers");
  }
  Eigen::VectorXd v(expected);
  for (int i = 0; i < expected; ++i) {
    if (!value[static_cast<std::size_t>(i)].is_number()) config_error(what + " must contain numbers");
    v(i) = value[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

std::vector<Expression> read_expressions(const json& value, std::size_t count, int n, int m,
                                         const std::map<std::string, double>& constants,
                                         const std::string& what) {
  if (!value.is_array() || value.size() != count) {
    config_error(what + " must hold " + std::to_string(count) + " expressions");
  }
  std::vector<Expression> out;
  for (const auto& item : value) {
    if (item.is_number()) {
      out.emplace_back(format_double(item.get<double>()), n, m, constants);
    } else if (item.is_string()) {
      out.emplace_back(item.get<std::string>(), n, m, constants);
    } else {
      config_error(what + " entries must be strings or numbers");
    }
  }
  return out;
}

}  // namespace

NamedSystem parse_system_config(const std::string& json_text) {
  json config;
  try {
    config = json::parse(json_text);
  } catch (const json::exception& e) {
    config_error(std::string("invalid JSON: ") + e.what());
  }
  if (!config.is_object()) config_error("top level must be an object");
  try {
    const int n = config.at("dim").get<int>();
    if (n < 1) config_error("dim must be >= 1");
    const int m = config.value("control_dim", 0);
    if (m < 0) config_error("control_dim must be >= 0");
    const std::string mode = config.value("discretization", std::string("euler"));
    if (mode != "euler" && mode != "map") config_error("discretization must be 'euler' or 'map'");
    const double dt = config.value("dt", mode == "euler" ? 0.0 : 1.0);
    if (mode == "euler" && !(dt > 0.0)) config_error("dt must be > 0 for euler discretization");

    std::map<std::string, double> constants{{"dt", dt}};
    if (config.contains("constants")) {
      for (const auto& [name, value] : config.at("constants").items()) constants[name] = value.get<double>();
    }

    const auto& domain_json = config.at("domain");
    const Box domain(read_vector(domain_json.at("lower"), n, "domain.lower"),
                     read_vector(domain_json.at("upper"), n, "domain.upper"));
    const double bound = config.value("control_bound", 1.0);
    if (!(bound > 0.0)) config_error("control_bound must be > 0");

    auto g0 = std::make_shared<std::vector<Expression>>(
        read_expressions(config.at("g0"), static_cast<std::size_t>(n), n, m, constants, "g0"));
    auto input_rows = std::make_shared<std::vector<std::vector<Expression>>>();
    if (m > 0) {
      const auto& g = config.at("G");
      if (!g.is_array() || static_cast<int>(g.size()) != n) config_error("G must have dim rows");
      for (const auto& row : g) {
        input_rows->push_back(read_expressions(row, static_cast<std::size_t>(m), n, m, constants, "G row"));
      }
    }

    VectorField field = [g0, n](const Eigen::VectorXd& x) {
      Eigen::VectorXd out(n);
      for (int i = 0; i < n; ++i) out(i) = (*g0)[static_cast<std::size_t>(i)](x);
      return out;
    };
    InputField input = [input_rows, n, m](const Eigen::VectorXd& x) {
      Eigen::MatrixXd out(n, m);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
          out(i, j) = (*input_rows)[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](x);
        }
      }
      return out;
    };

    NamedSystem system;
    if (mode == "euler") {
      system = euler_discretize(field, input, m, dt, domain, bound);
    } else {
      ControlAffineSystem control{n, m, domain, bound, field, input};
      system.autonomous = control.with_constant_control(Eigen::VectorXd::Zero(m));
      system.control = std::move(control);
    }
    system.id = config.value("name", std::string("custom"));
    if (m == 0) system.control.reset();

    if (config.contains("equilibria")) {
      for (const auto& e : config.at("equilibria")) system.equilibria.push_back(read_vector(e, n, "equilibrium"));
    }

    if (config.contains("lyapunov")) {
      const auto& ly = config.at("lyapunov");
      LyapunovSpec spec;
      spec.x_star = ly.contains("x_star") ? read_vector(ly.at("x_star"), n, "lyapunov.x_star")
                                          : Eigen::VectorXd::Zero(n);
      auto v_expr = std::make_shared<Expression>(ly.at("V").get<std::string>(), n, 0, constants);
      auto a_expr = std::make_shared<Expression>(ly.at("alpha_V").get<std::string>(), 0, 0, constants);
      spec.V = [v_expr](const Eigen::VectorXd& x) { return (*v_expr)(x); };
      spec.alpha_V = [a_expr](double r) { return (*a_expr)(ExpressionScope{nullptr, nullptr, r}); };
      if (ly.contains("omega_V")) {
        auto w_expr = std::make_shared<Expression>(ly.at("omega_V").get<std::string>(), 0, 0, constants);
        spec.omega_V = [w_expr](double r) { return (*w_expr)(ExpressionScope{nullptr, nullptr, r}); };
      }
      if (ly.contains("power_p")) spec.power_p = ly.at("power_p").get<int>();
      system.lyapunov = std::move(spec);
    }
    return system;
  } catch (const json::exception& e) {
    config_error(e.what());
  }
}

NamedSystem load_system_config(const std::filesystem::path& path) {
  return parse_system_config(read_text(path));
}

NamedSystem resolve_system(const std::string& id_or_path) {
  if (id_or_path == "kellett") return kellett_system();
  if (id_or_path == "duffing") return duffing_system();
  return load_system_config(id_or_path);
}

}  // namespace kedmd
