#pragma once

// Run configuration: a JSON document with nested sections for the space, the
// terminal condition, the generator and the solver. Field names are
// documented in docs/config_reference.md. Parsing failures throw
// ConfigError naming the offending field.

#include <json.hpp>

#include <optional>
#include <string>

#include "bselab/gexp.hpp"
#include "bselab/solvers.hpp"

namespace bselab {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config error: " + field + ": " + what) {}
};

enum class SolveMethod {
    contraction,
    integral,
    zu,
    delayed,
    nonexpansive,
    concatenation,
    counterexample,
};

struct RunConfig {
    SpacePtr space;
    std::optional<WalkBasis> basis;     // present for walk spaces
    std::size_t start_index = 0;
    double p = 2.0;
    L0Value terminal;
    GeneratorSpec generator = ZeroGen{};
    L0Value zu_lipschitz;               // per-block Lipschitz data for zu kinds
    SolveMethod method = SolveMethod::contraction;
    double tol = 1e-10;
    int max_iter = 400;
    double lambda = 0.5;
    std::optional<ContractionBudget> budget;
    L0Value ball_radius;
    bool ball_center_terminal = true;
    std::vector<L0Value> y0_samples;    // nonuniqueness family starts
    std::uint64_t seed = 1;
};

namespace config_detail {

inline const Json& need(const Json& j, const char* field, const std::string& scope) {
    auto it = j.find(field);
    if (it == j.end()) throw ConfigError(scope + "." + field, "missing");
    return *it;
}

inline double number(const Json& j, const std::string& scope) {
    if (j.is_string() && j.get<std::string>() == "inf") return kInfP;
    if (!j.is_number()) throw ConfigError(scope, "expected a number");
    return j.get<double>();
}

/// Number -> constant; array -> one value per block of `base`.
inline L0Value block_scalar(const Json& j, const SpacePtr& space, const Partition& base,
                            const std::string& scope) {
    if (j.is_number()) return L0Value::scalar_constant(space, j.get<double>());
    if (!j.is_array() || j.size() != base.block_count())
        throw ConfigError(scope, "expected a number or one entry per start block");
    std::vector<double> data(space->atom_count());
    for (std::size_t b = 0; b < base.block_count(); ++b) {
        if (!j[b].is_number()) throw ConfigError(scope, "expected numeric entries");
        for (std::size_t atom : base.block(b)) data[atom] = j[b].get<double>();
    }
    return L0Value(space, 1, std::move(data), base);
}

inline void build_space(const Json& cfg, RunConfig& out) {
    const Json& sp = need(cfg, "space", "config");
    const std::string kind = need(sp, "kind", "space").get<std::string>();
    if (kind == "walk") {
        WalkSpec walk;
        walk.steps = need(sp, "steps", "space").get<std::size_t>();
        if (sp.contains("horizon")) walk.horizon = number(sp["horizon"], "space.horizon");
        if (sp.contains("marks")) walk.mark_probs = sp["marks"].get<std::vector<double>>();
        if (sp.contains("excess_branches"))
            walk.excess_branches = sp["excess_branches"].get<std::size_t>();
        if (sp.contains("excess_prob")) walk.excess_prob = sp["excess_prob"].get<double>();
        try {
            out.basis = build_walk_basis(walk);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("space", e.what());
        }
        out.space = out.basis->space;
    } else if (kind == "tree") {
        std::vector<std::size_t> branching =
            need(sp, "branching", "space").get<std::vector<std::size_t>>();
        std::vector<std::vector<double>> probs;
        if (sp.contains("edge_probs"))
            probs = sp["edge_probs"].get<std::vector<std::vector<double>>>();
        double horizon = sp.contains("horizon") ? number(sp["horizon"], "space.horizon") : 1.0;
        try {
            out.space = bselab::build_space(branching, probs, horizon);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("space", e.what());
        }
    } else {
        throw ConfigError("space.kind", "unknown kind '" + kind + "'");
    }
}

inline void build_terminal(const Json& cfg, RunConfig& out) {
    const Json& tj = need(cfg, "terminal", "config");
    const std::string kind = need(tj, "kind", "terminal").get<std::string>();
    const SpacePtr& space = out.space;
    const Partition& base = space->partition(out.start_index);

    L0Value xi;
    if (kind == "values") {
        std::vector<double> vals = need(tj, "values", "terminal").get<std::vector<double>>();
        const std::size_t dim = tj.contains("dim") ? tj["dim"].get<std::size_t>() : 1;
        if (vals.size() != space->atom_count() * dim)
            throw ConfigError("terminal.values", "expected dim values per atom");
        xi = L0Value::from_atoms(space, dim, std::move(vals));
    } else if (kind == "walk" || kind == "walk_max" || kind == "walk_abs") {
        if (!out.basis) throw ConfigError("terminal.kind", "walk expressions need a walk space");
        const MartingaleProcess& w = out.basis->walk;
        if (kind == "walk") {
            xi = w.terminal();
        } else if (kind == "walk_abs") {
            xi = w.terminal().map_scalar([](double v) { return std::abs(v); });
        } else {
            std::vector<L0Value> path;
            for (std::size_t k = out.start_index; k <= space->step_count(); ++k)
                path.push_back(w.at(k));
            xi = l0_sup(path);
        }
    } else {
        throw ConfigError("terminal.kind", "unknown kind '" + kind + "'");
    }
    if (tj.contains("scale"))
        xi = xi.scaled_by(block_scalar(tj["scale"], space, base, "terminal.scale"));
    if (tj.contains("shift")) {
        if (xi.dim() != 1) throw ConfigError("terminal.shift", "shift requires scalar data");
        xi = xi + block_scalar(tj["shift"], space, base, "terminal.shift");
    }
    if (tj.contains("center") && tj["center"].get<bool>()) xi = xi - cond_expect(xi, base);
    out.terminal = std::move(xi);
}

inline PointwiseGen linear_pointwise(const L0Value& ay, const L0Value& az, const L0Value& au) {
    PointwiseGen g;
    g.uses_y = max_abs(ay) != 0.0;
    g.uses_zu = true;
    g.f = [ay, az, au](std::size_t, std::size_t atom, std::span<const double> y,
                       std::span<const double> z, std::span<const double> u,
                       std::span<double> res) {
        double v = ay.at(atom) * y[0] + az.at(atom) * z[0];
        if (!u.empty()) v += au.at(atom) * u[0];
        res[0] = v;
    };
    return g;
}

inline void build_generator(const Json& cfg, RunConfig& out) {
    const Json& gj = need(cfg, "generator", "config");
    const std::string kind = need(gj, "kind", "generator").get<std::string>();
    const SpacePtr& space = out.space;
    const Partition& base = space->partition(out.start_index);

    if (kind == "zero") {
        out.generator = ZeroGen{};
        out.zu_lipschitz = L0Value::scalar_constant(space, 0.0);
    } else if (kind == "integral") {
        IntegralPathGen g;
        g.c1 = block_scalar(need(gj, "c1", "generator"), space, base, "generator.c1");
        g.c2 = block_scalar(need(gj, "c2", "generator"), space, base, "generator.c2");
        for (std::size_t a = 0; a < space->atom_count(); ++a) {
            if (!(g.c1.at(a) > 0.0)) throw ConfigError("generator.c1", "must be positive");
            if (g.c2.at(a) < 0.0) throw ConfigError("generator.c2", "must be nonnegative");
        }
        if (gj.contains("a_coupling")) g.a = gj["a_coupling"].get<double>();
        if (gj.contains("b_coupling")) g.b = gj["b_coupling"].get<double>();
        if (std::abs(g.a) > 1.0 || std::abs(g.b) > 1.0)
            throw ConfigError("generator.a_coupling", "couplings must lie in [-1, 1]");
        out.generator = g;
    } else if (kind == "pointwise" || kind == "zu") {
        auto coeff = [&](const char* field) {
            return gj.contains(field)
                       ? block_scalar(gj[field], space, base, std::string("generator.") + field)
                       : L0Value::scalar_constant(space, 0.0);
        };
        L0Value ay = coeff("ay"), az = coeff("az"), au = coeff("au");
        if (kind == "zu" && max_abs(ay) != 0.0)
            throw ConfigError("generator.ay", "zu drivers must not depend on y");
        out.generator = linear_pointwise(ay, az, au);
        std::vector<double> lips(space->atom_count());
        for (std::size_t a = 0; a < space->atom_count(); ++a)
            lips[a] = std::abs(ay.at(a)) + std::abs(az.at(a)) + std::abs(au.at(a));
        out.zu_lipschitz = L0Value(space, 1, std::move(lips),
                                   Partition::join(ay.meas(), Partition::join(az.meas(), au.meas())));
    } else if (kind == "delayed") {
        DelayedGen g;
        auto coeff = [&](const char* field) {
            return gj.contains(field)
                       ? block_scalar(gj[field], space, base, std::string("generator.") + field)
                       : L0Value::scalar_constant(space, 0.0);
        };
        L0Value az = coeff("az"), au = coeff("au");
        g.g = linear_pointwise(L0Value::scalar_constant(space, 0.0), az, au);
        const Json& mj = need(gj, "measure", "generator");
        if (!mj.is_array()) throw ConfigError("generator.measure", "expected an array");
        g.delay.base = base;
        if (mj.size() == base.block_count() && mj[0].is_array()) {
            for (const auto& row : mj)
                g.delay.weights.push_back(row.get<std::vector<double>>());
        } else {
            std::vector<double> row = mj.get<std::vector<double>>();
            g.delay.weights.assign(base.block_count(), row);
        }
        try {
            g.delay.validate(space->step_count() - out.start_index + 1);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("generator.measure", e.what());
        }
        std::vector<double> lips(space->atom_count());
        for (std::size_t a = 0; a < space->atom_count(); ++a)
            lips[a] = std::abs(az.at(a)) + std::abs(au.at(a));
        out.zu_lipschitz = L0Value(space, 1, std::move(lips), base);
        out.generator = g;
    } else if (kind == "counterexample") {
        PathScaleGen g;
        g.a = block_scalar(need(gj, "a", "generator"), space, base, "generator.a");
        out.generator = g;
    } else if (kind == "clamp") {
        ClampGen g;
        g.bound = need(gj, "bound", "generator").get<double>();
        g.p = out.p;
        if (!(g.bound > 0.0)) throw ConfigError("generator.bound", "must be positive");
        out.generator = g;
    } else if (kind == "matrix") {
        const Json& mj = need(gj, "matrix", "generator");
        if (!mj.is_array() || mj.empty()) throw ConfigError("generator.matrix", "expected rows");
        MatrixMGen g;
        g.dim = mj.size();
        for (const auto& row : mj) {
            if (!row.is_array() || row.size() != g.dim)
                throw ConfigError("generator.matrix", "expected a square matrix");
            for (const auto& e : row)
                g.entries.push_back(block_scalar(e, space, base, "generator.matrix"));
        }
        out.generator = g;
    } else {
        throw ConfigError("generator.kind", "unknown kind '" + kind + "'");
    }
}

inline void build_solver(const Json& cfg, RunConfig& out) {
    const Json& sj = need(cfg, "solver", "config");
    const std::string method = need(sj, "method", "solver").get<std::string>();
    const SpacePtr& space = out.space;
    const Partition& base = space->partition(out.start_index);

    if (method == "contraction") out.method = SolveMethod::contraction;
    else if (method == "integral") out.method = SolveMethod::integral;
    else if (method == "zu") out.method = SolveMethod::zu;
    else if (method == "delayed") out.method = SolveMethod::delayed;
    else if (method == "nonexpansive") out.method = SolveMethod::nonexpansive;
    else if (method == "concatenation") out.method = SolveMethod::concatenation;
    else if (method == "counterexample") out.method = SolveMethod::counterexample;
    else throw ConfigError("solver.method", "unknown method '" + method + "'");

    if (sj.contains("tol")) out.tol = sj["tol"].get<double>();
    if (!(out.tol > 0.0)) throw ConfigError("solver.tol", "must be positive");
    if (sj.contains("max_iter")) out.max_iter = sj["max_iter"].get<int>();
    if (sj.contains("lambda")) out.lambda = sj["lambda"].get<double>();
    if (out.lambda <= 0.0 || out.lambda >= 1.0)
        throw ConfigError("solver.lambda", "must lie in (0, 1)");

    if (sj.contains("C") || out.method == SolveMethod::contraction ||
        out.method == SolveMethod::concatenation) {
        L0Value C = sj.contains("C")
                        ? block_scalar(sj["C"], space, base, "solver.C")
                        : out.zu_lipschitz;
        if (C.empty()) throw ConfigError("solver.C", "missing contraction coefficient");
        RandomIterCount L = RandomIterCount::uniform(base);
        if (sj.contains("L")) {
            if (sj["L"].is_number()) {
                L = RandomIterCount::uniform(base, sj["L"].get<int>());
            } else {
                std::vector<int> counts = sj["L"].get<std::vector<int>>();
                if (counts.size() != base.block_count())
                    throw ConfigError("solver.L", "one count per start block required");
                L = RandomIterCount::per_block(base, counts);
            }
        }
        out.budget = ContractionBudget{out.p, C, L};
    }
    if (sj.contains("radius"))
        out.ball_radius = block_scalar(sj["radius"], space, base, "solver.radius");
    if (sj.contains("center_terminal"))
        out.ball_center_terminal = sj["center_terminal"].get<bool>();
    if (sj.contains("y0")) {
        for (const auto& y : sj["y0"])
            out.y0_samples.push_back(block_scalar(y, space, base, "solver.y0"));
    }
}

} // namespace config_detail

inline RunConfig parse_config(const Json& cfg) {
    RunConfig out;
    config_detail::build_space(cfg, out);
    if (cfg.contains("start_index")) out.start_index = cfg["start_index"].get<std::size_t>();
    if (out.start_index >= out.space->step_count())
        throw ConfigError("start_index", "must precede the terminal time");
    if (cfg.contains("p")) out.p = config_detail::number(cfg["p"], "p");
    if (!(out.p > 1.0)) throw ConfigError("p", "must exceed 1");
    if (cfg.contains("seed")) out.seed = cfg["seed"].get<std::uint64_t>();
    config_detail::build_terminal(cfg, out);
    config_detail::build_generator(cfg, out);
    config_detail::build_solver(cfg, out);
    return out;
}

} // namespace bselab
