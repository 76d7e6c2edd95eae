#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bselab/runner.hpp"

using namespace bselab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("bselab_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json base_config() {
    return Json::parse(R"json({
      "space": {"kind": "walk", "steps": 4, "horizon": 1.0},
      "p": 2.0,
      "terminal": {"kind": "walk_abs"},
      "generator": {"kind": "pointwise", "ay": 0.05, "az": 0.05},
      "solver": {"method": "contraction", "C": 0.121, "tol": 1e-10},
      "seed": 3
    })json");
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BSELAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("parse_config rejects malformed fields by name") {
    Json cfg = base_config();
    cfg["solver"]["C"] = 0.3; // above the p = 2 threshold: caught at solve time
    RunConfig parsed = parse_config(cfg);
    fs::path dir = temp_dir("budget");
    CHECK_THROWS_AS(cmd_solve(parsed, dir), ConfigError);
    try {
        cmd_solve(parsed, dir);
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("solver.C") != std::string::npos);
        CHECK(std::string(e.what()).find("block 0") != std::string::npos);
    }

    Json bad = base_config();
    bad["generator"].erase("kind");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);

    Json bad_tol = base_config();
    bad_tol["solver"]["tol"] = -1.0;
    CHECK_THROWS_AS(parse_config(bad_tol), ConfigError);

    Json bad_kind = base_config();
    bad_kind["terminal"]["kind"] = "nonsense";
    try {
        parse_config(bad_kind);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("terminal.kind") != std::string::npos);
    }
}

TEST_CASE("cmd_solve writes deterministic artifacts and exit codes") {
    RunConfig cfg = parse_config(base_config());
    fs::path a = temp_dir("solve_a");
    fs::path b = temp_dir("solve_b");
    CHECK(cmd_solve(cfg, a) == 0);
    CHECK(cmd_solve(cfg, b) == 0);
    CHECK(slurp(a / "report.txt") == slurp(b / "report.txt"));
    CHECK(slurp(a / "solution.csv") == slurp(b / "solution.csv"));
    CHECK(slurp(a / "report.txt").find("status converged") == 0);
}

TEST_CASE("counterexample run lists the family") {
    Json cfg = Json::parse(R"json({
      "space": {"kind": "walk", "steps": 3, "horizon": 1.0},
      "terminal": {"kind": "walk", "center": true},
      "generator": {"kind": "counterexample", "a": 1.0},
      "solver": {"method": "counterexample", "y0": [0.0, 1.0, 2.0]}
    })json");
    fs::path dir = temp_dir("family");
    CHECK(cmd_solve(parse_config(cfg), dir) == 0);
    const std::string report = slurp(dir / "report.txt");
    CHECK(report.find("family_size 3") != std::string::npos);
    CHECK(fs::exists(dir / "family.csv"));
}

TEST_CASE("cmd_verify handles unknown suites and passes known ones") {
    std::ostringstream sink;
    CHECK(cmd_verify("nonsense", 1, SuiteSizes::minimal(), sink) == 1);
    std::ostringstream out;
    CHECK(cmd_verify("fubini", 1, SuiteSizes::minimal(), out) == 0);
    CHECK(out.str().find("suite fubini passed") != std::string::npos);
}

TEST_CASE("installed binary: verbs and exit codes") {
    if (!fs::exists(BSELAB_CLI_PATH)) return; // build layout changed
    fs::path dir = temp_dir("cli");
    Json cfg = base_config();
    std::ofstream(dir / "run.json") << cfg.dump(2);

    CHECK(run_cli("solve --config " + (dir / "run.json").string() + " --out " +
                  (dir / "out").string()) == 0);
    CHECK(fs::exists(dir / "out" / "solution.csv"));

    // malformed config exits 1
    std::ofstream(dir / "bad.json") << "{ not json";
    CHECK(run_cli("solve --config " + (dir / "bad.json").string()) == 1);

    CHECK(run_cli("verify --suite orthogonality --sizes minimal") == 0);
    CHECK(run_cli("verify --suite nonsense") == 1);
}
