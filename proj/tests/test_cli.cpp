#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.hpp"

using namespace obsmhe;
using namespace obsmhe::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("obsmhe_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const fs::path& dir, const std::string& verb, const json& cfg, const std::vector<std::string>& extra = {}) {
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << cfg.dump();
  std::vector<std::string> args{"obsmhe", verb, "--config", cfg_path.string(), "--out", (dir / "out").string()};
  args.insert(args.end(), extra.begin(), extra.end());
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n') + 1); }

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<double> row(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::strtod(cell.c_str(), nullptr));
  return out;
}

std::string config_error_path(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "";
}

}  // namespace

TEST_CASE("config normalization round trips") {
  for (const auto& name : preset_names()) {
    const json doc{{"preset", name}};
    const json n1 = normalize(doc);
    CHECK(normalize(n1) == n1);
    CHECK(to_json(parse_config(n1)) == n1);
    CHECK(n1["preset"] == name);
  }
  const json custom{{"system", {{"kind", "bearing"}, {"landmark", {0.5, -0.5}}}},
                    {"x0", {2.0, 1.0}},
                    {"input", {{"family", "spi"}, {"omega", 2.0}, {"alpha", 0.1}}},
                    {"T", 1.5},
                    {"t_grid", {{"start", 1.5}, {"stop", 4.5}, {"count", 4}}},
                    {"noise", {{"v", {{"family", "sinusoid"}, {"amplitude", 1e-3}, {"direction", {1.0, 2.0}}}}}}};
  const json n = normalize(custom);
  CHECK(normalize(n) == n);
  CHECK(n["input"]["alpha"] == 0.1);
  CHECK(n["preset"].is_null());
}

TEST_CASE("preset expansion merges user fields") {
  const Config cfg = parse_config(json{{"preset", "circ-default"}, {"T", 3.0}, {"t_grid", {{"start", 3.0}}}});
  CHECK(cfg.T == 3.0);
  CHECK(cfg.t_grid.start == 3.0);
  CHECK(cfg.t_grid.stop == parse_config(json{{"preset", "circ-default"}}).t_grid.stop);
  CHECK(cfg.input.family == "circ");
}

TEST_CASE("config errors name the offending field") {
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"bogus", 1}}) == "bogus");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"solver", {{"grad_tol", -1.0}}}}) == "solver.grad_tol");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"simulate", {{"t_start", 2.0}, {"t_end", 2.0}}}}) ==
        "simulate");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"t_grid", {{"start", 5.0}, {"stop", 4.0}}}}) ==
        "t_grid.stop");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"t_grid", {{"count", 0}}}}) == "t_grid.count");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"noise", {{"v", {{"hold", 0.015}}}}}}) == "noise.v.hold");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"input", {{"family", "square"}}}}) == "input.family");
  CHECK(config_error_path(json{{"preset", "circ-default"}, {"audit", {{"alpha", 1.0}}}}) == "audit.alpha");
  CHECK(config_error_path(json{{"system", {{"kind", "custom"}, {"name", "nope"}}}}) == "system.name");
  CHECK(config_error_path(json{{"preset", "nope"}}) == "preset");
}

TEST_CASE("exit codes for bad invocations") {
  TempDir tmp("exit");
  CHECK(invoke(tmp.path, "mhe-run", json{{"preset", "no-such-preset"}}).code == kExitConfig);
  CHECK(invoke(tmp.path, "simulate", json{{"preset", "circ-default"}, {"simulate", {{"t_end", 0.0}}}}).code ==
        kExitConfig);
  CHECK(invoke(tmp.path, "launch", json{{"preset", "circ-default"}}).code == kExitConfig);

  std::vector<const char*> argv{"obsmhe", "simulate", "--config", "/nonexistent/config.json"};
  std::ostringstream out, err;
  CHECK(run(4, argv.data(), out, err) == kExitConfig);
}

TEST_CASE("simulate closes the circle and writes the documented header") {
  TempDir tmp("sim");
  const double h = std::numbers::pi / 500.0;
  const json cfg{{"preset", "circ-default"},
                 {"grid_step", h},
                 {"simulate", {{"t_start", 0.0}, {"t_end", 2.0 * std::numbers::pi}}},
                 {"noise", {{"v", {{"family", "zero"}, {"hold", 50 * h}}}, {"w", {{"family", "zero"}, {"hold", 50 * h}}}}}};
  const auto res = invoke(tmp.path, "simulate", cfg);
  REQUIRE(res.code == kExitOk);
  CHECK(res.err.find("expanded preset circ-default") != std::string::npos);
  const std::string csv = slurp(tmp.path / "out" / "simulate.csv");
  CHECK(first_line(csv) == "t,x1,x2,u1,u2,y1,y2\n");
  const auto all = lines(csv);
  REQUIRE(all.size() == 1002);
  const auto first = row(all[1]);
  const auto last = row(all.back());
  CHECK(std::abs(last[1] - first[1]) <= 1e-8);
  CHECK(std::abs(last[2] - first[2]) <= 1e-8);
  CHECK(all[1].rfind("0,1,0,", 0) == 0);

  const json rep = json::parse(slurp(tmp.path / "out" / "simulate.json"));
  CHECK(rep["config"] == normalize(cfg));
  CHECK(rep["rows"] == 1001);
}

TEST_CASE("custom linear system through the registry") {
  TempDir tmp("linear");
  const json cfg{{"system", {{"kind", "custom"}, {"name", "linear"}, {"params", {{"A", {{0.0, 1.0}, {-1.0, 0.0}}}, {"B", {{0.0}, {1.0}}}, {"C", {{1.0, 0.0}}}}}}},
                 {"x0", {1.0, 0.0}},
                 {"input", {{"family", "zero"}}},
                 {"T", 1.0},
                 {"simulate", {{"t_end", 1.0}}}};
  const auto res = invoke(tmp.path, "simulate", cfg);
  REQUIRE(res.code == kExitOk);
  const auto all = lines(slurp(tmp.path / "out" / "simulate.csv"));
  CHECK(all[0] == "t,x1,x2,u1,y1");
  const auto last = row(all.back());
  CHECK(std::abs(last[1] - std::cos(1.0)) <= 1e-9);
  CHECK(std::abs(last[2] + std::sin(1.0)) <= 1e-9);
}

TEST_CASE("grammian-scan verdicts") {
  TempDir tmp("scan");
  auto verdict = [&](const std::string& preset) {
    const auto res = invoke(tmp.path, "grammian-scan", json{{"preset", preset}});
    REQUIRE(res.code == kExitOk);
    CHECK(first_line(slurp(tmp.path / "out" / "grammian_scan.csv")) == "t,min_eig,max_eig\n");
    return json::parse(slurp(tmp.path / "out" / "grammian_scan.json"));
  };
  CHECK(verdict("circ-default")["verdict"] == "WeaklyRegularlyPersistentSampled");
  const json cst = verdict("cst-default");
  CHECK(cst["verdict"] == "NotWeaklyPersistent");
  CHECK(cst["witness"]["flat"] == true);
  const json spi = verdict("spi-default");
  CHECK(spi["verdict"] != "WeaklyRegularlyPersistentSampled");
  const auto mins = spi["min_eig"].get<std::vector<double>>();
  for (std::size_t k = 1; k < mins.size(); ++k) CHECK(mins[k] < mins[k - 1]);
  CHECK(spi["boundedness"]["growing"] == true);
}

TEST_CASE("mhe-run without noise recovers every window") {
  TempDir tmp("mhe");
  const json cfg{{"preset", "circ-default"}, {"noise", {{"v", {{"family", "zero"}}}}}};
  const auto res = invoke(tmp.path, "mhe-run", cfg);
  REQUIRE(res.code == kExitOk);
  const auto all = lines(slurp(tmp.path / "out" / "mhe_run.csv"));
  CHECK(all[0] == "t,error,grad_norm,iters,converged,status");
  REQUIRE(all.size() == 11);
  for (std::size_t k = 1; k < all.size(); ++k) {
    CHECK(row(all[k])[1] <= 1e-8);
    CHECK(all[k].substr(all[k].size() - 5) == ",1,ok");
  }
}

TEST_CASE("mhe-run exits 3 when a window fails") {
  TempDir tmp("mhefail");
  const auto res = invoke(tmp.path, "mhe-run", json{{"preset", "circ-default"}, {"solver", {{"max_iters", 1}}}});
  CHECK(res.code == kExitCondition);
  const json rep = json::parse(slurp(tmp.path / "out" / "mhe_run.json"));
  CHECK(rep["status"] == "WindowFailures");
}

TEST_CASE("stability-audit outcomes") {
  TempDir tmp("audit");
  SUBCASE("circ-default holds and compares with a measured run") {
    REQUIRE(invoke(tmp.path, "mhe-run", json{{"preset", "circ-default"}}).code == kExitOk);
    const fs::path run_csv = tmp.path / "run.csv";
    fs::copy_file(tmp.path / "out" / "mhe_run.csv", run_csv);
    const auto res =
        invoke(tmp.path, "stability-audit", json{{"preset", "circ-default"}, {"audit", {{"mhe_run_csv", run_csv.string()}}}});
    CHECK(res.code == kExitOk);
    const json rep = json::parse(slurp(tmp.path / "out" / "stability_audit.json"));
    CHECK(rep["conditions_ok"] == true);
    CHECK(rep["bound_holds"] == true);
    CHECK(rep["measured_max_error"].get<double>() <= rep["predicted_bound"].get<double>());
  }
  SUBCASE("alpha near one") {
    const auto res = invoke(tmp.path, "stability-audit", json{{"preset", "circ-default"}, {"audit", {{"alpha", 0.999}}}});
    CHECK(res.code == kExitCondition);
    const json rep = json::parse(slurp(tmp.path / "out" / "stability_audit.json"));
    CHECK(rep["status"] == "ConditionsFailed");
    CHECK(rep["condition2_ok"] == false);
  }
  SUBCASE("constant input") {
    const auto res = invoke(tmp.path, "stability-audit", json{{"preset", "cst-default"}});
    CHECK(res.code == kExitCondition);
    CHECK(json::parse(slurp(tmp.path / "out" / "stability_audit.json"))["status"] == "SingularWindow");
  }
}

TEST_CASE("artifacts do not depend on the thread count") {
  TempDir tmp("threads");
  for (const std::string verb : {"grammian-scan", "mhe-run", "stability-audit"}) {
    const json cfg{{"preset", "circ-default"}};
    REQUIRE(invoke(tmp.path, verb, cfg, {"--threads", "1"}).code == kExitOk);
    std::vector<std::string> one;
    for (const auto& e : fs::directory_iterator(tmp.path / "out")) one.push_back(slurp(e.path()));
    fs::remove_all(tmp.path / "out");
    REQUIRE(invoke(tmp.path, verb, cfg, {"--threads", "4"}).code == kExitOk);
    std::vector<std::string> four;
    for (const auto& e : fs::directory_iterator(tmp.path / "out")) four.push_back(slurp(e.path()));
    fs::remove_all(tmp.path / "out");
    std::sort(one.begin(), one.end());
    std::sort(four.begin(), four.end());
    CHECK(one == four);
  }
}

TEST_CASE("seed override changes the noise draw") {
  TempDir tmp("seed");
  const json cfg{{"preset", "circ-default"}};
  REQUIRE(invoke(tmp.path, "mhe-run", cfg).code == kExitOk);
  const std::string a = slurp(tmp.path / "out" / "mhe_run.csv");
  REQUIRE(invoke(tmp.path, "mhe-run", cfg, {"--seed", "9"}).code == kExitOk);
  const std::string b = slurp(tmp.path / "out" / "mhe_run.csv");
  CHECK(a != b);
  CHECK(json::parse(slurp(tmp.path / "out" / "mhe_run.json"))["config"]["seed"] == 9);
}

TEST_CASE("number formatting") {
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(2.0) == "2");
  CHECK(std::strtod(format_number(std::numbers::pi).c_str(), nullptr) == std::numbers::pi);
}
