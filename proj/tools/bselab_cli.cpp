// Command-line front end: solve a configured backward stochastic equation,
// run the verification suites, or write the built-in demonstration runs.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "bselab/runner.hpp"

namespace {

const char* kDemoCounterexample = R"json({
  "space": {"kind": "walk", "steps": 4, "horizon": 1.0},
  "p": 2.0,
  "terminal": {"kind": "walk", "center": true},
  "generator": {"kind": "counterexample", "a": 1.0},
  "solver": {"method": "counterexample", "y0": [0.0, 1.0, -1.5, 2.0, 3.25]},
  "seed": 1
})json";

const char* kDemoContraction = R"json({
  "space": {"kind": "walk", "steps": 6, "horizon": 1.0},
  "p": 2.0,
  "terminal": {"kind": "walk_abs"},
  "generator": {"kind": "pointwise", "ay": 0.05, "az": 0.05},
  "solver": {"method": "contraction", "C": 0.121, "tol": 1e-10},
  "seed": 1
})json";

int run_demo(const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    using bselab::Json;
    fs::create_directories(out_dir);
    int worst = 0;
    const std::pair<const char*, const char*> demos[] = {
        {"counterexample", kDemoCounterexample},
        {"contraction", kDemoContraction},
    };
    for (const auto& [name, text] : demos) {
        fs::path dir = out_dir / name;
        try {
            bselab::RunConfig cfg = bselab::parse_config(Json::parse(text));
            const int code = bselab::cmd_solve(cfg, dir);
            std::cout << "demo " << name << " -> " << dir.string() << " (exit " << code << ")\n";
            worst = std::max(worst, code);
        } catch (const std::exception& e) {
            std::cerr << "demo " << name << " failed: " << e.what() << "\n";
            return 1;
        }
    }
    return worst;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scenario-tree laboratory for backward stochastic equations"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs/out";
    std::string suite = "all";
    std::string sizes_name = "standard";
    std::uint64_t seed = 1;
    double tol = -1.0;

    CLI::App* solve = app.add_subcommand("solve", "Solve a configured equation");
    solve->add_option("--config", config_path, "Path to the JSON run configuration")
        ->required();
    solve->add_option("--out", out_dir, "Output directory");
    solve->add_option("--tol", tol, "Override the solver tolerance");
    solve->add_option("--seed", seed, "Override the configuration seed");

    CLI::App* verify = app.add_subcommand("verify", "Run a verification suite");
    verify->add_option("--suite", suite, "Suite name or 'all'");
    verify->add_option("--seed", seed, "Seed for randomized cases");
    verify->add_option("--sizes", sizes_name, "Case-count profile: standard or minimal");

    CLI::App* demo = app.add_subcommand("demo", "Write the built-in demonstration runs");
    demo->add_option("--out", out_dir, "Output directory");

    CLI11_PARSE(app, argc, argv);

    if (solve->parsed()) {
        std::optional<double> tol_override;
        if (tol > 0.0) tol_override = tol;
        std::optional<std::uint64_t> seed_override;
        if (solve->count("--seed") > 0) seed_override = seed;
        return bselab::cmd_solve_file(config_path, out_dir, tol_override, seed_override);
    }
    if (verify->parsed()) {
        bselab::SuiteSizes sizes = sizes_name == "minimal" ? bselab::SuiteSizes::minimal()
                                                           : bselab::SuiteSizes::standard();
        if (sizes_name != "minimal" && sizes_name != "standard") {
            std::cerr << "unknown sizes profile '" << sizes_name << "'\n";
            return 1;
        }
        return bselab::cmd_verify(suite, seed, sizes, std::cout);
    }
    return run_demo(out_dir);
}
