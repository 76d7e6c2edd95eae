#pragma once

// Batch front end: run a configured solve and write the solution table and
// a structured report with a stable field order, or run the verification
// suites. Identical configuration and seed produce byte-identical artifacts.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "bselab/config.hpp"
#include "bselab/verify.hpp"

namespace bselab {

namespace runner_detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

/// Ordered key-value report; the field order is part of the format.
class Report {
public:
    template <class T>
    void add(const std::string& key, const T& value) {
        lines_.emplace_back(key, fmt(value));
    }
    void add(const std::string& key, const std::string& value) {
        lines_.emplace_back(key, value);
    }
    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        for (const auto& [k, v] : lines_) out << k << " " << v << "\n";
    }

private:
    std::vector<std::pair<std::string, std::string>> lines_;
};

inline void write_solution_csv(const std::filesystem::path& path, const RunConfig& cfg,
                               const BseSolution& sol) {
    const SpacePtr& space = cfg.space;
    const std::size_t d = sol.Y.dim();
    std::optional<Decomposition> dec;
    std::size_t marks = 0;
    if (cfg.basis) {
        dec = martingale_decompose(sol.M, *cfg.basis);
        marks = cfg.basis->jumps.size();
    }

    std::ofstream out(path);
    out << "time,atom";
    for (std::size_t c = 0; c < d; ++c) out << ",Y" << c;
    for (std::size_t c = 0; c < d; ++c) out << ",M" << c;
    if (dec) {
        for (std::size_t c = 0; c < d; ++c) out << ",Z" << c;
        for (std::size_t x = 0; x < marks; ++x)
            for (std::size_t c = 0; c < d; ++c) out << ",U" << x << "_" << c;
        for (std::size_t c = 0; c < d; ++c) out << ",K" << c;
    }
    out << "\n";
    for (std::size_t k = cfg.start_index; k <= space->step_count(); ++k) {
        for (std::size_t atom = 0; atom < space->atom_count(); ++atom) {
            out << fmt(space->time(k)) << "," << atom;
            for (std::size_t c = 0; c < d; ++c) out << "," << fmt(sol.Y.at(k).at(atom, c));
            for (std::size_t c = 0; c < d; ++c) out << "," << fmt(sol.M.at(k).at(atom, c));
            if (dec) {
                const bool has_step = k < space->step_count();
                for (std::size_t c = 0; c < d; ++c)
                    out << ","
                        << fmt(has_step ? dec->walk_coeff(k).at(atom, c) : 0.0);
                for (std::size_t x = 0; x < marks; ++x)
                    for (std::size_t c = 0; c < d; ++c)
                        out << ","
                            << fmt(has_step ? dec->jump_coeff(x, k).at(atom, c) : 0.0);
                for (std::size_t c = 0; c < d; ++c)
                    out << "," << fmt(dec->remainder.at(k).at(atom, c));
            }
            out << "\n";
        }
    }
}

inline void add_block_lines(Report& report, const SolveReport& sr, const Partition& base) {
    report.add("blocks", base.block_count());
    for (std::size_t b = 0; b < base.block_count(); ++b) {
        std::ostringstream key;
        key << "block " << b;
        std::ostringstream val;
        val << "count "
            << (b < sr.block_iter_count.size() ? sr.block_iter_count[b] : 1) << " residual "
            << fmt(b < sr.block_final_residual.size() ? sr.block_final_residual[b] : 0.0)
            << " max_ratio " << fmt(b < sr.block_max_ratio.size() ? sr.block_max_ratio[b] : 0.0)
            << " bound "
            << fmt(b < sr.block_ratio_bound.size() ? sr.block_ratio_bound[b] : 0.0);
        report.add(key.str(), val.str());
    }
}

} // namespace runner_detail

/// Runs the configured solve and writes solution.csv and report.txt under
/// `out_dir`. Returns 0 on convergence, 2 on reported non-convergence.
/// Configuration errors throw ConfigError before anything is written.
inline int cmd_solve(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    using runner_detail::Report;
    using runner_detail::fmt;

    GenContext ctx{cfg.basis ? &*cfg.basis : nullptr, cfg.start_index};
    const Partition& base = cfg.space->partition(cfg.start_index);
    Report report;
    int exit_code = 0;

    fs::create_directories(out_dir);

    if (cfg.method == SolveMethod::counterexample) {
        const auto* gen = std::get_if<PathScaleGen>(&cfg.generator);
        if (gen == nullptr)
            throw ConfigError("solver.method", "counterexample needs the counterexample kind");
        if (cfg.y0_samples.empty())
            throw ConfigError("solver.y0", "at least one start value required");
        std::vector<BseSolution> family;
        try {
            family = enumerate_counterexample_solutions(cfg.terminal, gen->a, cfg.y0_samples, ctx);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("solver", e.what());
        }
        report.add("status", std::string("converged"));
        report.add("exit_code", 0);
        report.add("method", std::string("counterexample"));
        report.add("family_size", family.size());
        double worst = 0.0;
        for (const auto& sol : family)
            worst = std::max(worst, bse_residual(cfg.generator, cfg.terminal, sol, ctx));
        report.add("worst_residual", worst);
        report.write(out_dir / "report.txt");

        std::ofstream csv(out_dir / "family.csv");
        csv << "member,time,atom,Y0,M0\n";
        for (std::size_t i = 0; i < family.size(); ++i)
            for (std::size_t k = cfg.start_index; k <= cfg.space->step_count(); ++k)
                for (std::size_t atom = 0; atom < cfg.space->atom_count(); ++atom)
                    csv << i << "," << fmt(cfg.space->time(k)) << "," << atom << ","
                        << fmt(family[i].Y.at(k).at(atom)) << ","
                        << fmt(family[i].M.at(k).at(atom)) << "\n";
        runner_detail::write_solution_csv(out_dir / "solution.csv", cfg, family.front());
        return 0;
    }

    SolveOutcome outcome;
    std::string method_name;
    switch (cfg.method) {
        case SolveMethod::contraction: {
            method_name = "contraction";
            if (!cfg.budget) throw ConfigError("solver.C", "contraction budget required");
            try {
                cfg.budget->validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError("solver.C", e.what());
            }
            outcome = solve_bse_contraction(cfg.generator, cfg.terminal, *cfg.budget, ctx,
                                            cfg.tol, cfg.max_iter);
            break;
        }
        case SolveMethod::integral: {
            method_name = "integral";
            const auto* gen = std::get_if<IntegralPathGen>(&cfg.generator);
            if (gen == nullptr)
                throw ConfigError("generator.kind", "integral method needs the integral kind");
            try {
                outcome = solve_bsde_integral(*gen, cfg.terminal, cfg.p, ctx, cfg.tol,
                                              cfg.max_iter, cfg.seed);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("generator", e.what());
            }
            break;
        }
        case SolveMethod::zu: {
            method_name = "zu";
            const auto* gen = std::get_if<PointwiseGen>(&cfg.generator);
            if (gen == nullptr)
                throw ConfigError("generator.kind", "zu method needs a pointwise driver");
            try {
                outcome = solve_bsde_zu(*gen, cfg.zu_lipschitz, cfg.terminal, ctx, cfg.tol,
                                        cfg.max_iter);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("solver", e.what());
            }
            break;
        }
        case SolveMethod::delayed: {
            method_name = "delayed";
            const auto* gen = std::get_if<DelayedGen>(&cfg.generator);
            if (gen == nullptr)
                throw ConfigError("generator.kind", "delayed method needs the delayed kind");
            L0Value base_lip = cfg.zu_lipschitz;
            try {
                DelayedOutcome d = solve_bsde_delayed(*gen, base_lip, cfg.terminal, ctx, cfg.tol,
                                                      cfg.seed);
                outcome = std::move(d.outcome);
                report.add("swap_defect", d.swap_defect);
            } catch (const std::invalid_argument& e) {
                throw ConfigError("solver", e.what());
            }
            break;
        }
        case SolveMethod::nonexpansive: {
            method_name = "nonexpansive";
            if (cfg.ball_radius.empty())
                throw ConfigError("solver.radius", "nonexpansive method needs a ball radius");
            L0Value center = cfg.ball_center_terminal
                                 ? cfg.terminal
                                 : L0Value::zero(cfg.space, cfg.terminal.dim());
            NonexpansiveOutcome n =
                solve_nonexpansive(cfg.generator, cfg.terminal, center, cfg.ball_radius,
                                   cfg.lambda, ctx, cfg.p, cfg.tol, cfg.max_iter, cfg.seed);
            outcome = std::move(n.outcome);
            report.add("ball_ok", n.ball_ok ? 1 : 0);
            report.add("worst_expansion", n.worst_expansion);
            if (n.inconclusive) exit_code = 2;
            break;
        }
        case SolveMethod::concatenation: {
            method_name = "concatenation";
            if (!cfg.budget) throw ConfigError("solver.C", "concatenation budget required");
            std::vector<L0Value> xis(base.block_count(), cfg.terminal);
            ConcatenationOutcome c = solve_by_concatenation(cfg.generator, base, xis,
                                                            *cfg.budget, ctx, cfg.tol);
            outcome = std::move(c.outcome);
            report.add("direct_attempted", c.direct_attempted ? 1 : 0);
            report.add("direct_gap", c.direct_gap);
            break;
        }
        default:
            throw ConfigError("solver.method", "unhandled method");
    }

    if (!outcome.report.converged) exit_code = 2;
    report.add("status", outcome.report.status.empty() ? "unknown" : outcome.report.status);
    report.add("exit_code", exit_code);
    report.add("method", method_name);
    report.add("iterations", outcome.report.outer_iterations);
    report.add("residual", outcome.residual);
    runner_detail::add_block_lines(report, outcome.report, base);
    if (!outcome.block_counts.empty()) {
        std::ostringstream counts;
        for (std::size_t b = 0; b < outcome.block_counts.size(); ++b) {
            if (b) counts << " ";
            counts << outcome.block_counts[b];
        }
        report.add("block_counts", counts.str());
    }
    report.write(out_dir / "report.txt");
    runner_detail::write_solution_csv(out_dir / "solution.csv", cfg, outcome.solution);
    return exit_code;
}

inline int cmd_solve_file(const std::filesystem::path& config_path,
                          const std::filesystem::path& out_dir,
                          std::optional<double> tol_override = std::nullopt,
                          std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "config error: cannot open " << config_path << "\n";
        return 1;
    }
    Json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        std::cerr << "config error: invalid JSON: " << e.what() << "\n";
        return 1;
    }
    try {
        RunConfig cfg = parse_config(doc);
        if (tol_override) cfg.tol = *tol_override;
        if (seed_override) cfg.seed = *seed_override;
        return cmd_solve(cfg, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

/// Runs one named suite (or all) and prints one line per checked identity
/// with its worst deviation. Exit 0 iff everything passed.
inline int cmd_verify(const std::string& suite, std::uint64_t seed, const SuiteSizes& sizes,
                      std::ostream& out) {
    std::vector<std::string> selected;
    if (suite == "all") {
        selected = suite_names();
    } else {
        const auto names = suite_names();
        if (std::find(names.begin(), names.end(), suite) == names.end()) {
            out << "unknown suite '" << suite << "'\n";
            return 1;
        }
        selected.push_back(suite);
    }
    bool all_ok = true;
    for (const auto& name : selected) {
        SuiteResult result = run_suite(name, seed, sizes);
        out << "suite " << result.name << "\n";
        for (const auto& check : result.checks)
            out << "  " << (check.ok ? "pass" : "FAIL") << "  worst " << runner_detail::fmt(check.worst)
                << "  tol " << runner_detail::fmt(check.tol) << "  cases " << check.cases << "  "
                << check.identity << "\n";
        out << "suite " << result.name << (result.passed ? " passed" : " FAILED") << " in "
            << runner_detail::fmt(result.seconds) << " s\n";
        all_ok = all_ok && result.passed;
    }
    return all_ok ? 0 : 1;
}

} // namespace bselab
