#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsmhe/grammian.hpp"
#include "obsmhe/signal.hpp"

namespace obsmhe::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCondition = 3;

/// Invalid configuration; `path()` names the offending field ("solver.grad_tol").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct SystemSpec {
  std::string kind = "bearing";  // bearing | custom
  std::vector<double> landmark{0.0, 0.0};
  std::string name;  // registered factory, custom only
  json params = json::object();
};

struct InputSpec {
  std::string family = "circ";  // cst | circ | spi | constant | zero
  double sigma = 1.0;
  double omega = 1.0;
  double alpha = 0.3;
  std::vector<double> value;
};

struct NoiseSpec {
  std::string family = "zero";  // zero | constant | sinusoid | seeded-uniform | samples
  double amplitude = 0.0;
  std::vector<double> direction;
  double frequency = 1.0;
  double phase = 0.0;
  double hold = 0.1;
  std::vector<std::vector<double>> samples;
};

struct TGridSpec {
  double start = 1.0;
  double stop = 10.0;
  int count = 10;
};

struct SolverSpec {
  double ball_radius = 0.2;
  int max_iters = 50;
  double grad_tol = 1e-9;
  double damping = 1e-3;
  double damping_growth = 10.0;
  double damping_shrink = 0.1;
  std::string hessian = "gauss_newton";  // gauss_newton | full_fd
  std::vector<double> init_offset;
};

struct CertifySpec {
  double mu_threshold = 1e-6;
  std::optional<double> singular_tol;
  double ball_radius = 0.1;
  int n_ball_samples = 8;
};

struct AuditSpec {
  double R = 0.05;
  double alpha = 0.5;
  double nu = 1e-3;
  int n_ball_samples = 3;
  std::vector<std::string> channels{"v"};
  double fd_delta = 1e-3;
  double noise_step = 0.0;
  std::string mhe_run_csv;
};

struct Config {
  std::string preset;
  SystemSpec system;
  std::vector<double> x0{1.0, 0.0};
  InputSpec input;
  double T = 1.0;
  TGridSpec t_grid;
  double grid_step = 0.01;
  double sim_start = 0.0;
  double sim_end = 1.0;
  std::uint64_t seed = 0;
  NoiseSpec noise_v;
  NoiseSpec noise_w;
  SolverSpec solver;
  CertifySpec certify;
  AuditSpec audit;
};

/// Registered custom systems: factory(params) -> System.
using SystemFactory = std::function<System(const json& params)>;
void register_system(const std::string& name, SystemFactory factory);
std::vector<std::string> registered_systems();

/// Full JSON document of a named preset; throws ConfigError on unknown names.
json preset(const std::string& name);
std::vector<std::string> preset_names();

/// Expands `preset` (if any), merges the remaining fields over it and validates.
Config parse_config(const json& doc);
json to_json(const Config& cfg);
inline json normalize(const json& doc) { return to_json(parse_config(doc)); }

std::vector<double> t_grid_values(const Config& cfg);

/// Everything a command needs, built from a validated config.
struct Scenario {
  System sys;
  Input u;
  Eigen::VectorXd x0;
  NoiseSignals<double> eta;
  double noise_horizon = 0.0;
};

Scenario build(const Config& cfg);

struct RunOptions {
  std::filesystem::path out = ".";
  int threads = 1;
};

std::string format_number(double v);

/// Each command writes its artifacts into `opts.out` and returns an exit code.
int cmd_simulate(const Config& cfg, const RunOptions& opts, std::ostream& log);
int cmd_grammian_scan(const Config& cfg, const RunOptions& opts, std::ostream& log);
int cmd_mhe_run(const Config& cfg, const RunOptions& opts, std::ostream& log);
int cmd_stability_audit(const Config& cfg, const RunOptions& opts, std::ostream& log);

/// Command-line entry: `obsmhe <verb> --config PATH [--out DIR] [--threads N] [--seed S]`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace obsmhe::cli
