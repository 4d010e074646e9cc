// kedmd: fit and check kernel EDMD surrogates from the command line.

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "experiment.hpp"
#include "kedmd/expression.hpp"
#include "kedmd/io.hpp"
#include "kedmd/rkhs.hpp"

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kNumerical = 3, kViolation = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace kedmd::cli;

  CLI::App app{"Kernel EDMD surrogates: fit, evaluate and verify"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> lambda;
  std::optional<std::string> variant;

  const std::map<std::string, std::pair<std::string, std::function<void(const ExperimentConfig&)>>> commands{
      {"fit-autonomous", {"Fit an autonomous surrogate and persist it", fit_autonomous}},
      {"heatmap", {"One-step error heatmap (CSV + SVG) and nested-box maxima", heatmap}},
      {"lyapunov", {"Lyapunov decrease margins of the surrogate", lyapunov}},
      {"fit-control", {"Sample micro data, run the cluster regression and fit", fit_control}},
      {"control-heatmap", {"Max one-step error over a control list", control_heatmap}},
      {"rollout", {"Surrogate vs true trajectories and error envelopes", rollout}},
      {"verify", {"Run the invariant suite; exit 4 on a violation", verify}},
  };
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", config_path, "Experiment config (JSON)");
    sub->add_option("--seed", seed, "Seed for all sampling");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--lambda", lambda, "Regularization parameter")->check(CLI::NonNegativeNumber);
    sub->add_option("--variant", variant, "Surrogate variant")->check(CLI::IsMember({"standard", "alternative"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
    if (seed) config.seed = *seed;
    if (out) config.out = *out;
    if (lambda) config.lambda = *lambda;
    if (variant) config.variant = *variant;
    config = ExperimentConfig::from_json(config.to_json());

    const std::string name = app.get_subcommands().front()->get_name();
    commands.at(name).second(config);
    std::cout << name << ": wrote " << config.out << "\n";
    return kOk;
  } catch (const PropertyViolation& e) {
    std::cerr << "property violation: " << e.what() << "\n";
    return kViolation;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const kedmd::IoError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const kedmd::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const kedmd::IdentityViolation& e) {
    std::cerr << "property violation: " << e.what() << "\n";
    return kViolation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
