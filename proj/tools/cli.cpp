#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "obsmhe/bearing.hpp"
#include "obsmhe/mhe.hpp"
#include "obsmhe/noise.hpp"
#include "obsmhe/ode.hpp"
#include "obsmhe/stability.hpp"

namespace obsmhe::cli {

namespace {

// ---------------------------------------------------------------- registry

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

Eigen::MatrixXd matrix_param(const json& params, const std::string& key, const std::string& path) {
  if (!params.contains(key) || !params[key].is_array() || params[key].empty()) {
    throw ConfigError(path + "." + key, "expected a non-empty array of rows");
  }
  const json& rows = params[key];
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_cols = rows[0].is_array() ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    const json& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols) {
      throw ConfigError(path + "." + key, "rows must be arrays of equal length");
    }
    for (Eigen::Index j = 0; j < n_cols; ++j) {
      const json& v = row[static_cast<std::size_t>(j)];
      if (!v.is_number()) throw ConfigError(path + "." + key, "entries must be numbers");
      m(i, j) = v.get<double>();
    }
  }
  return m;
}

/// x' = A x + B u,  y = C x.
System linear_system(const json& params) {
  const Eigen::MatrixXd A = matrix_param(params, "A", "system.params");
  const Eigen::MatrixXd B = matrix_param(params, "B", "system.params");
  const Eigen::MatrixXd C = matrix_param(params, "C", "system.params");
  if (A.rows() != A.cols()) throw ConfigError("system.params.A", "A must be square");
  if (B.rows() != A.rows()) throw ConfigError("system.params.B", "B must have as many rows as A");
  if (C.cols() != A.rows()) throw ConfigError("system.params.C", "C must have as many columns as A");
  System sys;
  sys.n_x = static_cast<int>(A.rows());
  sys.n_u = static_cast<int>(B.cols());
  sys.n_y = static_cast<int>(C.rows());
  sys.f = [A, B](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd { return A * x + B * u; };
  sys.h = [C](const Eigen::VectorXd& x, const Eigen::VectorXd&) -> Eigen::VectorXd { return C * x; };
  sys.df_dx = [A](const Eigen::VectorXd&, const Eigen::VectorXd&) -> Eigen::MatrixXd { return A; };
  sys.dh_dx = [C](const Eigen::VectorXd&, const Eigen::VectorXd&) -> Eigen::MatrixXd { return C; };
  return sys;
}

std::map<std::string, SystemFactory>& registry() {
  static std::map<std::string, SystemFactory> r{{"linear", linear_system}};
  return r;
}

// ---------------------------------------------------------------- reading

/// Strict reader over one JSON object: typed getters with defaults, and
/// `finish()` rejects keys that were never asked for.
class Reader {
 public:
  Reader(json obj, std::string path) : obj_(std::move(obj)), path_(std::move(path)) {
    if (obj_.is_null()) obj_ = json::object();
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) && !obj_[key].is_null();
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const json& v = obj_[key];
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(at(key), "must be finite");
    return d;
  }

  double positive(const std::string& key, double def) {
    const double d = number(key, def);
    if (!(d > 0.0)) throw ConfigError(at(key), "must be positive");
    return d;
  }

  double non_negative(const std::string& key, double def) {
    const double d = number(key, def);
    if (d < 0.0) throw ConfigError(at(key), "must be non-negative");
    return d;
  }

  std::optional<double> optional_positive(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return positive(key, 1.0);
  }

  long long integer(const std::string& key, long long def, long long min) {
    if (!has(key)) return def;
    const json& v = obj_[key];
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    const long long i = v.get<long long>();
    if (i < min) throw ConfigError(at(key), "must be >= " + std::to_string(min));
    return i;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = obj_[key];
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(at(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& def, const std::set<std::string>& allowed = {}) {
    if (!has(key)) return def;
    const json& v = obj_[key];
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    std::string s = v.get<std::string>();
    if (!allowed.empty() && !allowed.count(s)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(at(key), "unknown value '" + s + "' (expected one of: " + list + ")");
    }
    return s;
  }

  std::vector<double> vector(const std::string& key, const std::vector<double>& def) {
    if (!has(key)) return def;
    const json& v = obj_[key];
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(at(key), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::vector<double>> table(const std::string& key) {
    if (!has(key)) return {};
    const json& v = obj_[key];
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of rows");
    std::vector<std::vector<double>> out;
    for (const auto& row : v) {
      if (!row.is_array()) throw ConfigError(at(key), "expected an array of rows");
      std::vector<double> r;
      for (const auto& e : row) {
        if (!e.is_number()) throw ConfigError(at(key), "entries must be numbers");
        r.push_back(e.get<double>());
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key, const std::vector<std::string>& def,
                                   const std::set<std::string>& allowed) {
    if (!has(key)) return def;
    const json& v = obj_[key];
    if (!v.is_array()) throw ConfigError(at(key), "expected an array of strings");
    std::set<std::string> out;
    for (const auto& e : v) {
      if (!e.is_string() || !allowed.count(e.get<std::string>())) {
        throw ConfigError(at(key), "entries must be among the allowed names");
      }
      out.insert(e.get<std::string>());
    }
    return {out.begin(), out.end()};
  }

  json raw(const std::string& key, const json& def) {
    if (!has(key)) return def;
    return obj_[key];
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(obj_.contains(key) ? obj_[key] : json::object(), at(key));
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown field");
    }
  }

 private:
  json obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void check_lattice(double t, double step, const std::string& path) {
  if (!TimeGrid::on_lattice(t, step)) {
    throw ConfigError(path, "value " + format_number(t) + " is not a multiple of grid_step " + format_number(step));
  }
}

NoiseSpec read_noise(Reader r, double grid_step) {
  NoiseSpec n;
  n.family = r.string("family", n.family, {"zero", "constant", "sinusoid", "seeded-uniform", "samples"});
  n.amplitude = r.non_negative("amplitude", n.amplitude);
  n.direction = r.vector("direction", n.direction);
  n.frequency = r.non_negative("frequency", n.frequency);
  n.phase = r.number("phase", n.phase);
  n.hold = r.positive("hold", n.hold);
  n.samples = r.table("samples");
  r.finish();
  const double ratio = n.hold / grid_step;
  if (std::abs(ratio - std::round(ratio)) > 1e-7 || std::round(ratio) < 1.0) {
    throw ConfigError(r.at("hold"), "must be a positive multiple of grid_step");
  }
  if (n.family == "samples" && n.samples.empty()) throw ConfigError(r.at("samples"), "sample table is empty");
  if (!n.direction.empty()) {
    double norm = 0.0;
    for (double d : n.direction) norm += d * d;
    if (norm == 0.0) throw ConfigError(r.at("direction"), "direction must be non-zero");
  }
  return n;
}

json noise_json(const NoiseSpec& n) {
  return json{{"family", n.family},       {"amplitude", n.amplitude}, {"direction", n.direction},
              {"frequency", n.frequency}, {"phase", n.phase},         {"hold", n.hold},
              {"samples", n.samples}};
}

Config preset_config(const std::string& name) {
  Config c;
  c.preset = name;
  c.system.kind = "bearing";
  c.system.landmark = {0.0, 0.0};
  c.x0 = {1.0, 0.0};
  c.grid_step = 0.01;
  if (name == "circ-default") {
    c.input.family = "circ";
    c.input.omega = 1.0;
    c.T = 2.0;
    c.t_grid = {2.0, 11.0, 10};
    c.sim_end = 6.0;
    c.noise_v.family = "seeded-uniform";
    c.noise_v.amplitude = 1e-3;
    c.solver.init_offset = {0.03, -0.04};
    c.certify.mu_threshold = 0.5;
  } else if (name == "cst-default") {
    c.input.family = "cst";
    c.input.sigma = -1.0;
    c.T = 1.0;
    c.t_grid = {1.0, 10.0, 10};
    c.sim_end = 5.0;
    c.solver.init_offset = {0.0, 0.0};
  } else if (name == "spi-default") {
    c.input.family = "spi";
    c.input.omega = 1.0;
    c.input.alpha = 0.3;
    c.T = 2.0;
    c.t_grid = {2.0, 20.0, 10};
    c.sim_end = 10.0;
    c.solver.init_offset = {0.0, 0.0};
    c.certify.mu_threshold = 1e-3;
  } else {
    std::string list;
    for (const auto& p : preset_names()) list += (list.empty() ? "" : ", ") + p;
    throw ConfigError("preset", "unknown preset '" + name + "' (expected one of: " + list + ")");
  }
  return c;
}

// ---------------------------------------------------------------- output

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

void write_json(const std::filesystem::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::string csv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) line += ',';
    line += cells[i];
  }
  return line + "\n";
}

std::vector<std::string> numbered(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json report_header(const std::string& command, const Config& cfg) {
  return json{{"command", command}, {"config", to_json(cfg)}};
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SampledSignal<double> make_noise(const NoiseSpec& n, int dim, double horizon, Rng rng, const std::string& path) {
  Eigen::VectorXd dir = Eigen::VectorXd::Ones(dim);
  if (!n.direction.empty()) {
    if (static_cast<int>(n.direction.size()) != dim) {
      throw ConfigError(path + ".direction", "expected " + std::to_string(dim) + " components");
    }
    dir = as_vector(n.direction);
  }
  dir /= dir.norm();
  if (n.family == "zero") return SampledSignal<double>::zero(dim, 0.0, horizon, n.hold);
  if (n.family == "constant") return constant_signal(n.amplitude * dir, horizon, n.hold);
  if (n.family == "sinusoid") return sinusoid_signal(n.amplitude * dir, n.frequency, n.phase, horizon, n.hold);
  if (n.family == "seeded-uniform") return uniform_signal(dim, n.amplitude, horizon, n.hold, rng);
  Eigen::MatrixXd samples(dim, static_cast<Eigen::Index>(n.samples.size()));
  for (std::size_t j = 0; j < n.samples.size(); ++j) {
    if (static_cast<int>(n.samples[j].size()) != dim) {
      throw ConfigError(path + ".samples", "every sample needs " + std::to_string(dim) + " components");
    }
    samples.col(static_cast<Eigen::Index>(j)) = as_vector(n.samples[j]);
  }
  SampledSignal<double> sig(0.0, n.hold, samples);
  if (!sig.covers(0.0, horizon)) {
    throw ConfigError(path + ".samples", "sample table ends before t = " + format_number(horizon));
  }
  return sig;
}

std::vector<double> lattice_t_grid(const Config& cfg) {
  const auto grid = t_grid_values(cfg);
  for (double t : grid) check_lattice(t, cfg.grid_step, "t_grid");
  check_lattice(cfg.T, cfg.grid_step, "T");
  return grid;
}

SolverOptions solver_options(const Config& cfg) {
  SolverOptions o;
  o.ball_radius = cfg.solver.ball_radius;
  o.max_iters = cfg.solver.max_iters;
  o.grad_tol = cfg.solver.grad_tol;
  o.damping = cfg.solver.damping;
  o.damping_growth = cfg.solver.damping_growth;
  o.damping_shrink = cfg.solver.damping_shrink;
  o.hessian = cfg.solver.hessian == "full_fd" ? HessianMode::FullFd : HessianMode::GaussNewton;
  return o;
}

double max_error_from_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("audit.mhe_run_csv", "cannot read " + path);
  std::string line;
  std::getline(f, line);
  if (line.rfind("t,error,", 0) != 0) throw ConfigError("audit.mhe_run_csv", "not an mhe-run CSV");
  double best = 0.0;
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string t;
    std::string err;
    std::getline(ss, t, ',');
    std::getline(ss, err, ',');
    const double e = std::strtod(err.c_str(), nullptr);
    if (std::isnan(e)) return e;
    best = std::max(best, e);
  }
  return best;
}

}  // namespace

void register_system(const std::string& name, SystemFactory factory) {
  const std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::vector<std::string> registered_systems() {
  const std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [name, f] : registry()) out.push_back(name);
  return out;
}

std::vector<std::string> preset_names() { return {"circ-default", "cst-default", "spi-default"}; }

json preset(const std::string& name) { return to_json(preset_config(name)); }

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v == 0.0 ? 0.0 : v);
  return buf;
}

Config parse_config(const json& input) {
  if (!input.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  json doc = input;
  std::string preset_name;
  if (doc.contains("preset") && !doc["preset"].is_null()) {
    if (!doc["preset"].is_string()) throw ConfigError("preset", "expected a string");
    preset_name = doc["preset"].get<std::string>();
    json base = preset(preset_name);
    json patch = doc;
    patch.erase("preset");
    base.merge_patch(patch);
    doc = base;
  }

  Reader r(doc, "");
  Config c;
  c.preset = r.string("preset", preset_name);

  Reader sys = r.child("system");
  c.system.kind = sys.string("kind", c.system.kind, {"bearing", "custom"});
  c.system.landmark = sys.vector("landmark", c.system.landmark);
  c.system.name = sys.string("name", "");
  c.system.params = sys.raw("params", json::object());
  sys.finish();
  if (c.system.kind == "bearing" && c.system.landmark.size() != 2) {
    throw ConfigError("system.landmark", "expected 2 components");
  }
  if (c.system.kind == "custom") {
    const auto names = registered_systems();
    if (std::find(names.begin(), names.end(), c.system.name) == names.end()) {
      throw ConfigError("system.name", "no registered system named '" + c.system.name + "'");
    }
  }

  c.x0 = r.vector("x0", c.x0);

  Reader in = r.child("input");
  c.input.family = in.string("family", c.input.family, {"cst", "circ", "spi", "constant", "zero"});
  c.input.sigma = in.number("sigma", c.input.sigma);
  c.input.omega = in.positive("omega", c.input.omega);
  c.input.alpha = in.positive("alpha", c.input.alpha);
  c.input.value = in.vector("value", c.input.value);
  in.finish();
  if (c.system.kind != "bearing" && (c.input.family == "cst" || c.input.family == "circ" || c.input.family == "spi")) {
    throw ConfigError("input.family", "family '" + c.input.family + "' needs the bearing system");
  }

  c.T = r.positive("T", c.T);
  c.grid_step = r.positive("grid_step", c.grid_step);

  Reader tg = r.child("t_grid");
  c.t_grid.start = tg.positive("start", c.t_grid.start);
  c.t_grid.stop = tg.positive("stop", c.t_grid.stop);
  c.t_grid.count = static_cast<int>(tg.integer("count", c.t_grid.count, 1));
  tg.finish();
  if (c.t_grid.stop < c.t_grid.start) throw ConfigError("t_grid.stop", "must not precede t_grid.start");
  if (c.t_grid.start < c.T - 1e-12) throw ConfigError("t_grid.start", "must be >= T");
  if (c.t_grid.count > 1 && c.t_grid.stop == c.t_grid.start) {
    throw ConfigError("t_grid.count", "several windows need stop > start");
  }

  Reader sim = r.child("simulate");
  c.sim_start = sim.non_negative("t_start", c.sim_start);
  c.sim_end = sim.non_negative("t_end", c.sim_end);
  sim.finish();
  if (!(c.sim_end > c.sim_start)) throw ConfigError("simulate", "empty time range: t_end must exceed t_start");

  c.seed = r.unsigned_integer("seed", c.seed);

  Reader noise = r.child("noise");
  c.noise_v = read_noise(noise.child("v"), c.grid_step);
  c.noise_w = read_noise(noise.child("w"), c.grid_step);
  noise.finish();

  Reader sol = r.child("solver");
  c.solver.ball_radius = sol.positive("ball_radius", c.solver.ball_radius);
  c.solver.max_iters = static_cast<int>(sol.integer("max_iters", c.solver.max_iters, 1));
  c.solver.grad_tol = sol.positive("grad_tol", c.solver.grad_tol);
  c.solver.damping = sol.positive("damping", c.solver.damping);
  c.solver.damping_growth = sol.positive("damping_growth", c.solver.damping_growth);
  c.solver.damping_shrink = sol.positive("damping_shrink", c.solver.damping_shrink);
  c.solver.hessian = sol.string("hessian", c.solver.hessian, {"gauss_newton", "full_fd"});
  c.solver.init_offset = sol.vector("init_offset", c.solver.init_offset);
  sol.finish();
  if (!(c.solver.damping_growth > 1.0)) throw ConfigError("solver.damping_growth", "must exceed 1");
  if (!(c.solver.damping_shrink < 1.0)) throw ConfigError("solver.damping_shrink", "must be below 1");

  Reader cert = r.child("certify");
  c.certify.mu_threshold = cert.positive("mu_threshold", c.certify.mu_threshold);
  c.certify.singular_tol = cert.optional_positive("singular_tol");
  c.certify.ball_radius = cert.positive("ball_radius", c.certify.ball_radius);
  c.certify.n_ball_samples = static_cast<int>(cert.integer("n_ball_samples", c.certify.n_ball_samples, 0));
  cert.finish();

  Reader au = r.child("audit");
  c.audit.R = au.positive("R", c.audit.R);
  c.audit.alpha = au.positive("alpha", c.audit.alpha);
  c.audit.nu = au.non_negative("nu", c.audit.nu);
  c.audit.n_ball_samples = static_cast<int>(au.integer("n_ball_samples", c.audit.n_ball_samples, 0));
  c.audit.channels = au.strings("channels", c.audit.channels, {"v", "w"});
  c.audit.fd_delta = au.positive("fd_delta", c.audit.fd_delta);
  c.audit.noise_step = au.non_negative("noise_step", c.audit.noise_step);
  c.audit.mhe_run_csv = au.string("mhe_run_csv", c.audit.mhe_run_csv);
  au.finish();
  if (!(c.audit.alpha < 1.0)) throw ConfigError("audit.alpha", "must lie in (0, 1)");

  r.finish();
  return c;
}

json to_json(const Config& c) {
  json doc;
  doc["preset"] = c.preset.empty() ? json(nullptr) : json(c.preset);
  doc["system"] = {{"kind", c.system.kind}, {"landmark", c.system.landmark}, {"name", c.system.name},
                   {"params", c.system.params}};
  doc["x0"] = c.x0;
  doc["input"] = {{"family", c.input.family}, {"sigma", c.input.sigma}, {"omega", c.input.omega},
                  {"alpha", c.input.alpha},   {"value", c.input.value}};
  doc["T"] = c.T;
  doc["grid_step"] = c.grid_step;
  doc["t_grid"] = {{"start", c.t_grid.start}, {"stop", c.t_grid.stop}, {"count", c.t_grid.count}};
  doc["simulate"] = {{"t_start", c.sim_start}, {"t_end", c.sim_end}};
  doc["seed"] = c.seed;
  doc["noise"] = {{"v", noise_json(c.noise_v)}, {"w", noise_json(c.noise_w)}};
  doc["solver"] = {{"ball_radius", c.solver.ball_radius},
                   {"max_iters", c.solver.max_iters},
                   {"grad_tol", c.solver.grad_tol},
                   {"damping", c.solver.damping},
                   {"damping_growth", c.solver.damping_growth},
                   {"damping_shrink", c.solver.damping_shrink},
                   {"hessian", c.solver.hessian},
                   {"init_offset", c.solver.init_offset}};
  doc["certify"] = {{"mu_threshold", c.certify.mu_threshold},
                    {"singular_tol", optional_json(c.certify.singular_tol)},
                    {"ball_radius", c.certify.ball_radius},
                    {"n_ball_samples", c.certify.n_ball_samples}};
  doc["audit"] = {{"R", c.audit.R},
                  {"alpha", c.audit.alpha},
                  {"nu", c.audit.nu},
                  {"n_ball_samples", c.audit.n_ball_samples},
                  {"channels", c.audit.channels},
                  {"fd_delta", c.audit.fd_delta},
                  {"noise_step", c.audit.noise_step},
                  {"mhe_run_csv", c.audit.mhe_run_csv}};
  return doc;
}

std::vector<double> t_grid_values(const Config& cfg) {
  std::vector<double> out;
  const int n = cfg.t_grid.count;
  for (int k = 0; k < n; ++k) {
    out.push_back(n == 1 ? cfg.t_grid.start
                         : cfg.t_grid.start + (cfg.t_grid.stop - cfg.t_grid.start) * k / (n - 1));
  }
  return out;
}

Scenario build(const Config& cfg) {
  Scenario s{System{}, Input::zero(0), Eigen::VectorXd(), NoiseSignals<double>::zero(0, 0, 1.0, 1.0), 0.0};
  if (cfg.system.kind == "bearing") {
    s.sys = bearing::bearing_system<double>(as_vector(cfg.system.landmark));
  } else {
    SystemFactory factory;
    {
      const std::lock_guard<std::mutex> lock(registry_mutex());
      factory = registry().at(cfg.system.name);
    }
    s.sys = factory(cfg.system.params);
  }
  if (static_cast<int>(cfg.x0.size()) != s.sys.n_x) {
    throw ConfigError("x0", "expected " + std::to_string(s.sys.n_x) + " components");
  }
  s.x0 = as_vector(cfg.x0);
  if (!cfg.solver.init_offset.empty() && static_cast<int>(cfg.solver.init_offset.size()) != s.sys.n_x) {
    throw ConfigError("solver.init_offset", "expected " + std::to_string(s.sys.n_x) + " components");
  }

  const std::string& fam = cfg.input.family;
  if (fam == "cst" || fam == "circ" || fam == "spi") {
    std::optional<bearing::Scenario> sc;
    try {
      sc.emplace(Eigen::Vector2d(cfg.system.landmark[0], cfg.system.landmark[1]), Eigen::Vector2d(cfg.x0[0], cfg.x0[1]));
    } catch (const Error& e) {
      throw ConfigError("x0", e.what());
    }
    if (fam == "cst") s.u = bearing::u_cst<double>(*sc, cfg.input.sigma);
    if (fam == "circ") s.u = bearing::u_circ<double>(*sc, cfg.input.omega);
    if (fam == "spi") s.u = bearing::u_spi<double>(*sc, cfg.input.omega, cfg.input.alpha);
  } else if (fam == "constant") {
    if (static_cast<int>(cfg.input.value.size()) != s.sys.n_u) {
      throw ConfigError("input.value", "expected " + std::to_string(s.sys.n_u) + " components");
    }
    s.u = Input::constant(as_vector(cfg.input.value));
  } else {
    s.u = Input::zero(s.sys.n_u);
  }

  s.noise_horizon = std::max(cfg.t_grid.stop, cfg.sim_end);
  s.eta.v = make_noise(cfg.noise_v, s.sys.n_y, s.noise_horizon, Rng(cfg.seed, 1), "noise.v");
  s.eta.w = make_noise(cfg.noise_w, s.sys.n_x, s.noise_horizon, Rng(cfg.seed, 2), "noise.w");
  return s;
}

int cmd_simulate(const Config& cfg, const RunOptions& opts, std::ostream& log) {
  const Scenario sc = build(cfg);
  check_lattice(cfg.sim_start, cfg.grid_step, "simulate.t_start");
  check_lattice(cfg.sim_end, cfg.grid_step, "simulate.t_end");
  const TimeGrid grid = TimeGrid::covering(0.0, cfg.sim_end, cfg.grid_step);
  const Trajectory<double> traj = perturbed_flow(sc.sys, sc.x0, sc.u, sc.eta.w, grid);

  std::vector<std::string> header{"t"};
  for (const auto& h : numbered("x", sc.sys.n_x)) header.push_back(h);
  for (const auto& h : numbered("u", sc.sys.n_u)) header.push_back(h);
  for (const auto& h : numbered("y", sc.sys.n_y)) header.push_back(h);
  std::string csv = csv_row(header);
  const std::int64_t first = grid.local_index(cfg.sim_start);
  std::size_t rows = 0;
  for (std::int64_t i = first; i <= grid.intervals(); ++i) {
    const double t = grid.time(i);
    const Eigen::VectorXd& x = traj.states[static_cast<std::size_t>(i)];
    const Eigen::VectorXd u = sc.u(t);
    Eigen::VectorXd y = sc.sys.h(x, u);
    if (!sc.eta.v.is_zero()) y += sc.eta.v(t);
    std::vector<std::string> cells{format_number(t)};
    for (Eigen::Index k = 0; k < x.size(); ++k) cells.push_back(format_number(x(k)));
    for (Eigen::Index k = 0; k < u.size(); ++k) cells.push_back(format_number(u(k)));
    for (Eigen::Index k = 0; k < y.size(); ++k) cells.push_back(format_number(y(k)));
    csv += csv_row(cells);
    ++rows;
  }
  write_text(opts.out / "simulate.csv", csv);
  json rep = report_header("simulate", cfg);
  rep["rows"] = rows;
  rep["status"] = "ok";
  write_json(opts.out / "simulate.json", rep);
  log << "simulate: " << rows << " rows\n";
  return kExitOk;
}

int cmd_grammian_scan(const Config& cfg, const RunOptions& opts, std::ostream& log) {
  const Scenario sc = build(cfg);
  const auto t_grid = lattice_t_grid(cfg);
  CertifyOptions co;
  co.singular_tol = cfg.certify.singular_tol;
  co.mu_threshold = cfg.certify.mu_threshold;
  co.ball_radius = cfg.certify.ball_radius;
  co.n_ball_samples = cfg.certify.n_ball_samples;
  co.seed = cfg.seed;
  co.threads = opts.threads;
  const PersistenceCertificate cert =
      certify_weak_regular_persistence(sc.sys, sc.x0, sc.u, cfg.T, t_grid, cfg.grid_step, co);

  std::string csv = csv_row({"t", "min_eig", "max_eig"});
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    csv += csv_row({format_number(t_grid[k]), format_number(cert.min_eig[k]), format_number(cert.max_eig[k])});
  }
  write_text(opts.out / "grammian_scan.csv", csv);

  json rep = report_header("grammian-scan", cfg);
  rep["status"] = "ok";
  rep["verdict"] = to_string(cert.verdict);
  rep["label"] = cert.label;
  rep["T"] = cert.T;
  rep["t_grid"] = cert.t_grid;
  rep["min_eig"] = cert.min_eig;
  rep["max_eig"] = cert.max_eig;
  rep["singular_tol"] = cert.singular_tol;
  rep["mu_hat"] = cert.mu_hat;
  rep["mu_threshold"] = optional_json(cert.mu_threshold);
  rep["norm_decreasing"] = cert.norm_decreasing;
  rep["evidence"] = {{"worst_t", cert.worst_t},
                     {"worst_min_eig", *std::min_element(cert.min_eig.begin(), cert.min_eig.end())}};
  if (cert.witness) {
    rep["witness"] = {{"t", cert.witness->t},
                      {"direction", vec_json(cert.witness->direction)},
                      {"displacement", cert.witness->displacement},
                      {"cost", cert.witness->cost},
                      {"flat", cert.witness->flat}};
  } else {
    rep["witness"] = nullptr;
  }
  if (cert.boundedness) {
    const auto& b = *cert.boundedness;
    rep["boundedness"] = {{"T", b.T},         {"R", b.R},           {"L_hat", b.L_hat},
                          {"passed", b.passed}, {"growing", b.growing}, {"window_max", b.window_max},
                          {"trajectories", b.trajectories}};
  } else {
    rep["boundedness"] = nullptr;
  }
  write_json(opts.out / "grammian_scan.json", rep);
  log << "grammian-scan: " << to_string(cert.verdict) << " (mu_hat " << format_number(cert.mu_hat) << ")\n";
  return kExitOk;
}

int cmd_mhe_run(const Config& cfg, const RunOptions& opts, std::ostream& log) {
  const Scenario sc = build(cfg);
  const auto t_grid = lattice_t_grid(cfg);
  Eigen::VectorXd init = reference_state(sc.sys, sc.x0, sc.u, std::max(0.0, t_grid.front() - cfg.T), cfg.grid_step);
  if (!cfg.solver.init_offset.empty()) init += as_vector(cfg.solver.init_offset);
  const auto sols = rolling_estimate(sc.sys, sc.x0, sc.u, t_grid, cfg.T, sc.eta, init, solver_options(cfg),
                                     cfg.grid_step);

  std::string csv = csv_row({"t", "error", "grad_norm", "iters", "converged", "status"});
  double max_error = 0.0;
  std::size_t failures = 0;
  json windows = json::array();
  for (const auto& s : sols) {
    const double err = s.error_to_reference.value_or(std::nan(""));
    if (s.status != "ok") ++failures;
    if (std::isnan(err) || err > max_error) max_error = err;
    csv += csv_row({format_number(s.t), format_number(err), format_number(s.grad_norm), std::to_string(s.iterations),
                    s.converged ? "1" : "0", s.status});
    windows.push_back({{"t", s.t}, {"xi_star", vec_json(s.xi_star)}, {"hess_min_eig", s.hess_min_eig},
                       {"cost", s.cost}, {"projected", s.projected}});
  }
  write_text(opts.out / "mhe_run.csv", csv);

  json rep = report_header("mhe-run", cfg);
  rep["status"] = failures == 0 ? "ok" : "WindowFailures";
  rep["failures"] = failures;
  rep["max_error"] = max_error;
  rep["noise_norm"] = sc.eta.norm();
  rep["windows"] = windows;
  write_json(opts.out / "mhe_run.json", rep);
  log << "mhe-run: max error " << format_number(max_error) << ", " << failures << " failed windows\n";
  return failures == 0 ? kExitOk : kExitCondition;
}

int cmd_stability_audit(const Config& cfg, const RunOptions& opts, std::ostream& log) {
  const Scenario sc = build(cfg);
  const auto t_grid = lattice_t_grid(cfg);
  UniformOptions uo;
  uo.seed = cfg.seed;
  uo.n_ball_samples = cfg.audit.n_ball_samples;
  uo.channels.v = std::count(cfg.audit.channels.begin(), cfg.audit.channels.end(), "v") > 0;
  uo.channels.w = std::count(cfg.audit.channels.begin(), cfg.audit.channels.end(), "w") > 0;
  uo.noise_step = cfg.audit.noise_step;
  uo.fd_delta = cfg.audit.fd_delta;
  uo.singular_tol = cfg.certify.singular_tol;
  uo.threads = opts.threads;

  json rep = report_header("stability-audit", cfg);
  std::optional<double> measured;
  if (!cfg.audit.mhe_run_csv.empty()) measured = max_error_from_csv(cfg.audit.mhe_run_csv);

  StabilityAudit audit;
  try {
    audit = evaluate_uniform_stability(sc.sys, sc.x0, sc.u, cfg.T, t_grid, cfg.audit.R, cfg.audit.nu,
                                       cfg.audit.alpha, cfg.grid_step, uo);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::SingularWindow) throw;
    rep["status"] = "SingularWindow";
    rep["message"] = e.what();
    write_json(opts.out / "stability_audit.json", rep);
    log << "stability-audit: " << e.what() << "\n";
    return kExitCondition;
  }

  std::vector<std::string> failed;
  if (!audit.condition1_ok) failed.emplace_back("g1/mu <= alpha");
  if (!audit.condition2_ok) failed.emplace_back("g2/mu <= R(1-alpha)");
  rep["status"] = failed.empty() ? "ok" : "ConditionsFailed";
  rep["failed_conditions"] = failed;
  rep["label"] = audit.label;
  rep["T"] = audit.T;
  rep["R"] = audit.R;
  rep["nu"] = audit.nu;
  rep["alpha"] = audit.alpha;
  rep["t_grid"] = audit.t_grid;
  rep["min_eig"] = audit.min_eig;
  rep["mu_hat"] = audit.mu_hat;
  rep["a1_hat"] = audit.a1_hat;
  rep["a2_hat"] = audit.a2_hat;
  rep["g1"] = audit.g1;
  rep["g2"] = audit.g2;
  rep["g3_hat"] = audit.g3_hat;
  rep["condition1_ok"] = audit.condition1_ok;
  rep["condition2_ok"] = audit.condition2_ok;
  rep["conditions_ok"] = audit.conditions_ok;
  rep["channels"] = cfg.audit.channels;
  rep["bound_coefficient"] = optional_json(audit.bound_coefficient);
  rep["predicted_bound"] = optional_json(audit.predicted_bound);
  rep["measured_max_error"] = optional_json(measured);
  if (measured && audit.predicted_bound) {
    rep["bound_holds"] = *measured <= *audit.predicted_bound;
  } else {
    rep["bound_holds"] = nullptr;
  }
  write_json(opts.out / "stability_audit.json", rep);
  log << "stability-audit: " << (failed.empty() ? "conditions hold" : "conditions failed") << ", predicted bound "
      << (audit.predicted_bound ? format_number(*audit.predicted_bound) : std::string("n/a")) << "\n";
  return failed.empty() ? kExitOk : kExitCondition;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Observability Grammian certification and moving horizon estimation"};
  std::string verb;
  std::string config_path;
  std::string out_dir = ".";
  int threads = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("command", verb, "simulate | grammian-scan | mhe-run | stability-audit")
      ->required()
      ->check(CLI::IsMember({"simulate", "grammian-scan", "mhe-run", "stability-audit"}));
  app.add_option("--config", config_path, "JSON scenario config")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    std::ifstream f(config_path);
    if (!f) throw ConfigError("--config", "cannot read " + config_path);
    json doc;
    try {
      doc = json::parse(f);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
    }
    if (seed) {
      if (!doc.is_object()) throw ConfigError("<root>", "config must be a JSON object");
      doc["seed"] = *seed;
    }
    const Config cfg = parse_config(doc);
    if (!cfg.preset.empty()) err << "expanded preset " << cfg.preset << "\n";
    RunOptions opts;
    opts.out = out_dir;
    opts.threads = threads;
    std::filesystem::create_directories(opts.out);
    if (verb == "simulate") return cmd_simulate(cfg, opts, out);
    if (verb == "grammian-scan") return cmd_grammian_scan(cfg, opts, out);
    if (verb == "mhe-run") return cmd_mhe_run(cfg, opts, out);
    return cmd_stability_audit(cfg, opts, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace obsmhe::cli
