#pragma once

// End-to-end solvers: the contraction solver driven by a validated budget,
// the integral-driver solver with its random iteration count, the (Z, U)
// solver with random subinterval stitching, the delayed-measure solver via
// the discrete change of variables, Mann iteration for nonexpansive-type
// equations, per-block classical solves glued by concatenation, the
// closed-form nonuniqueness family, and an independent backward-induction
// oracle for binomial trees.

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "bselab/bsecore.hpp"
#include "bselab/sampling.hpp"

namespace bselab {

// ============================================================================
// Thresholds and budgets
// ============================================================================

/// Contraction admissibility threshold: 1/5 for p = 2, 1/4 for p = inf,
/// (p-1)/(4p-1) otherwise.
inline double contraction_threshold(double p) {
    if (p == 2.0) return 0.2;
    if (p == kInfP) return 0.25;
    return (p - 1.0) / (4.0 * p - 1.0);
}

inline double doob_constant(double p) { return p == kInfP ? 1.0 : p / (p - 1.0); }

/// Budget for the contraction solver: the iterate-bound coefficient C of the
/// generator (below the p-threshold on every block) and the random iteration
/// count L it is valid for. The induced map on terminal identifiers then
/// contracts with the derived outer factor.
struct ContractionBudget {
    double p = 2.0;
    L0Value C;
    RandomIterCount L;

    /// 4C/(1-C) for p = 2 and 3 C_p C/(1-C) otherwise, per atom.
    L0Value outer_factor() const {
        const double cp = doob_constant(p);
        const double mult = p == 2.0 ? 4.0 : 3.0 * cp;
        return C.map_scalar([mult](double c) { return mult * c / (1.0 - c); });
    }

    /// Throws naming the first violating block when C >= c_p (strictly,
    /// with margin 1e-9) or the derived factor reaches 1.
    void validate() const {
        const double cap = contraction_threshold(p);
        L0Value factor = outer_factor();
        for (std::size_t b = 0; b < L.base.block_count(); ++b) {
            const std::size_t lead = L.base.block(b).front();
            if (!(C.at(lead) < cap - 1e-9) || !(factor.at(lead) < 1.0)) {
                std::ostringstream msg;
                msg << "ContractionBudget: coefficient " << C.at(lead) << " on block " << b
                    << " is not below the p=" << p << " threshold " << cap;
                throw std::invalid_argument(msg.str());
            }
        }
    }
};

// ============================================================================
// Outcome
// ============================================================================

struct SolveOutcome {
    BseSolution solution;
    L0Value fixed_point;
    SolveReport report;
    double residual = 0.0;     // worst equation defect
    std::vector<int> block_counts;  // per-block L or subinterval count used
};

namespace detail {

/// Conversion factor from a conditional p-norm bound per block to an
/// atomwise absolute bound: the worst (weight/mass)^(1/p) over blocks.
inline double norm_to_abs_factor(const FilteredSpace& space, const Partition& base, double p) {
    if (p == kInfP) return 1.0;
    double worst = 1.0;
    for (std::size_t b = 0; b < base.block_count(); ++b) {
        double mass = 0.0, mn = 1.0;
        for (std::size_t atom : base.block(b)) mass += space.weight(atom);
        for (std::size_t atom : base.block(b)) mn = std::min(mn, space.weight(atom) / mass);
        worst = std::min(worst, std::pow(mn, 1.0 / p));
    }
    return worst;
}

inline L0Value embed_blocks(const SpacePtr& parent, const Partition& meas,
                            std::span<const BlockRestriction* const> parts,
                            std::span<const L0Value* const> values, std::size_t dim) {
    std::vector<double> data(parent->atom_count() * dim, 0.0);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& r = *parts[i];
        for (std::size_t s = 0; s < r.atoms.size(); ++s)
            for (std::size_t c = 0; c < dim; ++c)
                data[r.atoms[s] * dim + c] = values[i]->at(s, c);
    }
    return L0Value(parent, dim, std::move(data), meas);
}

} // namespace detail

// ============================================================================
// Generator iterates and restriction
// ============================================================================

/// F^(L)(Y, M): glues F(Y^(k,M), M) along the blocks (L = k), with the
/// recursion Y^(1,M) = Y and Y^(k,M)_t = Y_start - F_t(Y^(k-1,M), M) - M_t.
inline AdaptedProcess generator_iterate(const GeneratorSpec& F, const AdaptedProcess& Y,
                                        const MartingaleProcess& M, const RandomIterCount& L,
                                        const GenContext& ctx) {
    const SpacePtr& space = Y.space();
    const int kmax = L.max_count();
    AdaptedProcess y0 = AdaptedProcess::constant(space, Y.at(ctx.start), ctx.start);
    std::vector<AdaptedProcess> f_iters;
    AdaptedProcess cur = Y;
    for (int k = 1; k <= kmax; ++k) {
        f_iters.push_back(eval_generator(F, cur, M, ctx));
        if (k < kmax) cur = y0 - f_iters.back() - M.process();
    }
    return glue_processes(f_iters, L);
}

/// Restriction of a catalog generator to a sub-space: base-measurable
/// parameters are restricted, pointwise drivers are rewired to parent atom
/// ids.
inline GeneratorSpec restrict_generator(const GeneratorSpec& F, const BlockRestriction& r) {
    return std::visit(
        [&](const auto& g) -> GeneratorSpec {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, ZeroGen>) {
                return g;
            } else if constexpr (std::is_same_v<T, IntegralPathGen>) {
                return IntegralPathGen{restrict_value(g.c1, r), restrict_value(g.c2, r), g.a,
                                       g.b};
            } else if constexpr (std::is_same_v<T, PointwiseGen>) {
                PointwiseGen out = g;
                auto atoms = r.atoms;
                auto inner = g.f;
                out.f = [atoms, inner](std::size_t k, std::size_t atom,
                                       std::span<const double> y, std::span<const double> z,
                                       std::span<const double> u, std::span<double> res) {
                    inner(k, atoms[atom], y, z, u, res);
                };
                out.time_scale.clear();
                for (const auto& s : g.time_scale) out.time_scale.push_back(restrict_value(s, r));
                return out;
            } else if constexpr (std::is_same_v<T, DelayedGen>) {
                DelayedGen out;
                GeneratorSpec sub = restrict_generator(GeneratorSpec{g.g}, r);
                out.g = std::get<PointwiseGen>(sub);
                // the restricted base is the target block alone
                const std::size_t lead_block = g.delay.base.block_of(r.atoms.front());
                out.delay.base = Partition::trivial(r.sub->atom_count());
                out.delay.weights = {g.delay.weights.at(lead_block)};
                return out;
            } else if constexpr (std::is_same_v<T, PathScaleGen>) {
                return PathScaleGen{restrict_value(g.a, r)};
            } else if constexpr (std::is_same_v<T, ClampGen>) {
                return g;
            } else {
                static_assert(std::is_same_v<T, MatrixMGen>);
                MatrixMGen out;
                out.dim = g.dim;
                for (const auto& e : g.entries) out.entries.push_back(restrict_value(e, r));
                return out;
            }
        },
        F);
}

// ============================================================================
// Contraction solver
// ============================================================================

/// Engine-level solve of V = G(V) on terminal identifiers, iterating the
/// L-indexed composite of G. No budget gate; callers supply the asserted
/// per-block factor directly.
inline SolveOutcome solve_bse_fixed_point(const GeneratorSpec& F, const L0Value& xi,
                                          const RandomIterCount& L, const L0Value& factor,
                                          const GenContext& ctx, const CondNorm& norm,
                                          double tol, int max_iter,
                                          const L0Value* start = nullptr,
                                          const InnerSolve* inner_override = nullptr) {
    const SpacePtr& space = xi.space();
    InnerSolve inner = inner_override
                           ? *inner_override
                           : InnerSolve{L, factor.map_scalar([](double f) {
                                            return std::min(f, 0.995);
                                        }),
                                        tol / 10.0, 600};
    auto G = [&](const L0Value& V) { return g_map(F, xi, V, ctx, norm, inner); };

    const double abs_factor = detail::norm_to_abs_factor(*space, norm.base, norm.p);
    const double engine_tol = tol * abs_factor;
    auto [V, report] = fixed_point_random_contraction(
        std::function<L0Value(const L0Value&)>(G), L, factor, start ? *start : xi, norm,
        engine_tol, max_iter);

    SolveOutcome out{to_solution(F, V, ctx, norm, inner), V, std::move(report), 0.0, {}};
    out.residual = bse_residual(F, xi, out.solution, ctx);
    for (std::size_t b = 0; b < L.base.block_count(); ++b)
        out.block_counts.push_back(L.per_atom[L.base.block(b).front()]);
    if (out.report.converged && out.residual > tol) out.report.status = "residual-above-tol";
    return out;
}

/// Contraction solver under a validated budget: Picard iteration of the
/// L-indexed composite of G from the terminal condition, with per-block
/// ratios asserted against the derived outer factor plus 0.05 slack.
inline SolveOutcome solve_bse_contraction(const GeneratorSpec& F, const L0Value& xi,
                                          const ContractionBudget& budget, const GenContext& ctx,
                                          double tol, int max_iter = 400,
                                          const L0Value* start = nullptr) {
    budget.validate();
    const SpacePtr& space = xi.space();
    CondNorm norm(budget.p, space->partition(ctx.start), space);
    InnerSolve inner{budget.L, budget.C, tol / 10.0, 600};
    return solve_bse_fixed_point(F, xi, budget.L, budget.outer_factor(), ctx, norm, tol,
                                 max_iter, start, &inner);
}

// ============================================================================
// Integral-driver solver (random iteration count)
// ============================================================================

/// Per-block bound 2 (C1 T')^k / k! + (e^{C1 T'} - 1) C2 / C1 for the k-th
/// generator iterate.
inline double integral_iterate_bound(double c1, double c2, double total_time, int k) {
    double pow_term = 2.0;
    for (int j = 1; j <= k; ++j) pow_term *= c1 * total_time / static_cast<double>(j);
    return pow_term + (std::exp(c1 * total_time) - 1.0) * c2 / c1;
}

/// Solver for the integral path generator: selects the blockwise smallest
/// iteration count whose iterate bound clears the p-threshold, verifies the
/// bound on sampled pairs, and delegates to the contraction solver.
inline SolveOutcome solve_bsde_integral(const IntegralPathGen& gen, const L0Value& xi, double p,
                                        const GenContext& ctx, double tol, int max_iter = 400,
                                        std::uint64_t seed = 1) {
    const SpacePtr& space = xi.space();
    const Partition& base = space->partition(ctx.start);
    const double total = space->horizon() - space->time(ctx.start);
    const double cap = contraction_threshold(p);

    std::vector<int> counts(base.block_count());
    std::vector<double> coeff(base.block_count());
    for (std::size_t b = 0; b < base.block_count(); ++b) {
        const std::size_t lead = base.block(b).front();
        const double c1 = gen.c1.at(lead);
        const double c2 = gen.c2.at(lead);
        if (!(c1 > 0.0) || c2 < 0.0)
            throw std::invalid_argument("solve_bsde_integral: coefficient domain violation");
        if (!((std::exp(c1 * total) - 1.0) * c2 / c1 < cap - 1e-9)) {
            std::ostringstream msg;
            msg << "solve_bsde_integral: coupling bound violated on block " << b;
            throw std::invalid_argument(msg.str());
        }
        int k = 1;
        while (k < 400 && !(integral_iterate_bound(c1, c2, total, k) < cap - 1e-9)) ++k;
        if (k >= 400)
            throw std::invalid_argument("solve_bsde_integral: no admissible iteration count");
        counts[b] = k;
        coeff[b] = integral_iterate_bound(c1, c2, total, k);
    }

    RandomIterCount L = RandomIterCount::per_block(base, counts);
    std::vector<double> c_atoms(space->atom_count());
    for (std::size_t b = 0; b < base.block_count(); ++b)
        for (std::size_t atom : base.block(b)) c_atoms[atom] = coeff[b];
    ContractionBudget budget{p, L0Value(space, 1, std::move(c_atoms), base), L};

    // sampled iterate-bound assertion
    CondNorm norm(p, base, space);
    Rng rng(seed);
    GeneratorSpec F{gen};
    for (int rep = 0; rep < 3; ++rep) {
        MartingaleProcess M = martingale_from_terminal(random_atom_value(rng, space), ctx.start);
        MartingaleProcess M2 = martingale_from_terminal(random_atom_value(rng, space), ctx.start);
        auto rand_proc = [&]() {
            std::vector<L0Value> v;
            for (std::size_t k = ctx.start; k <= space->step_count(); ++k)
                v.push_back(random_value(rng, space, space->partition(k)));
            return AdaptedProcess(space, ctx.start, std::move(v));
        };
        AdaptedProcess Y = rand_proc(), Y2 = rand_proc();
        AdaptedProcess lhs = generator_iterate(F, Y, M, L, ctx) -
                             generator_iterate(F, Y2, M2, L, ctx);
        L0Value bound = (sp_norm(Y - Y2, norm) + sp_norm(M.process() - M2.process(), norm))
                            .scaled_by(budget.C);
        L0Value got = sp_norm(lhs, norm);
        for (std::size_t a = 0; a < got.atom_count(); ++a)
            if (got.at(a) > bound.at(a) + 1e-9)
                throw std::runtime_error("solve_bsde_integral: sampled iterate bound violated");
    }
    return solve_bse_contraction(F, xi, budget, ctx, tol, max_iter);
}

// ============================================================================
// (Z, U) solver with random subinterval count
// ============================================================================

/// Smallest admissible subinterval count for a block: minimal divisor k of
/// the step count with C sqrt(3 d (d+1)) < 1/5 at d = T'/k. Returns 0 when
/// none qualifies.
inline int zu_subinterval_count(double lip, double total_time, std::size_t steps) {
    for (std::size_t k = 1; k <= steps; ++k) {
        if (steps % k != 0) continue;
        const double delta = total_time / static_cast<double>(k);
        if (lip * std::sqrt(3.0 * delta * (delta + 1.0)) < 0.2 - 1e-9)
            return static_cast<int>(k);
    }
    return 0;
}

/// Solver for pointwise (Y, Z, U) drivers at p = 2: per start-block, the
/// horizon is split into the block's admissible number of subintervals and
/// the equation is solved backward window by window, the terminal value of
/// each window feeding the previous one; the per-block solutions are then
/// glued. `lip` is the base-measurable Lipschitz coefficient of the driver.
inline SolveOutcome solve_bsde_zu(const PointwiseGen& driver, const L0Value& lip,
                                  const L0Value& xi, const GenContext& ctx, double tol,
                                  int max_iter = 600) {
    if (ctx.basis == nullptr)
        throw std::invalid_argument("solve_bsde_zu: a walk basis is required");
    const SpacePtr& space = xi.space();
    const std::size_t t0 = ctx.start;
    const Partition& base = space->partition(t0);
    const std::size_t steps = space->step_count() - t0;
    const double total = space->horizon() - space->time(t0);
    const std::size_t d = xi.dim();

    SolveOutcome out;
    out.report.converged = true;
    out.report.status = "converged";
    out.report.block_final_residual.assign(base.block_count(), 0.0);
    out.report.block_max_ratio.assign(base.block_count(), 0.0);
    out.report.block_ratio_bound.assign(base.block_count(), 0.0);
    out.block_counts.assign(base.block_count(), 0);

    std::vector<BlockRestriction> parts;
    std::vector<AdaptedProcess> y_parts;
    std::vector<AdaptedProcess> m_parts;

    for (std::size_t b = 0; b < base.block_count(); ++b) {
        const double lip_b = lip.at(base.block(b).front());
        const int k_count = zu_subinterval_count(lip_b, total, steps);
        if (k_count == 0) {
            std::ostringstream msg;
            msg << "solve_bsde_zu: no admissible subinterval count on block " << b;
            throw std::invalid_argument(msg.str());
        }
        out.block_counts[b] = k_count;

        BlockRestriction r = restrict_space(space, base.block(b));
        WalkBasis sub_basis = restrict_basis(*ctx.basis, r, t0);
        GenContext sub_ctx{&sub_basis, t0};
        CondNorm sub_norm(2.0, r.sub->partition(t0), r.sub);
        GeneratorSpec sub_gen = restrict_generator(GeneratorSpec{driver}, r);
        PointwiseGen& g = std::get<PointwiseGen>(sub_gen);

        const double delta = total / k_count;
        const double cprime = lip_b * std::sqrt(3.0 * delta * (delta + 1.0));
        const double factor = 4.0 * cprime / (1.0 - cprime);
        out.report.block_ratio_bound[b] = factor;

        const std::size_t window_steps = steps / static_cast<std::size_t>(k_count);
        const double abs_factor = detail::norm_to_abs_factor(*r.sub, sub_norm.base, 2.0);
        const double stage_tol = tol / (10.0 * k_count) * abs_factor;

        L0Value eta = restrict_value(xi, r);
        std::vector<L0Value> dm(steps, L0Value::zero(r.sub, d));
        std::vector<L0Value> y_window(steps + 1, L0Value::zero(r.sub, d));
        y_window[steps] = eta;

        for (int j = k_count; j >= 1; --j) {
            const std::size_t lo = t0 + window_steps * static_cast<std::size_t>(j - 1);
            const std::size_t hi = t0 + window_steps * static_cast<std::size_t>(j);
            g.window_lo = lo;
            g.window_hi = hi;

            InnerSolve inner = default_inner(r.sub, t0, stage_tol / 10.0);
            auto G = [&](const L0Value& V) {
                return g_map(sub_gen, eta, V, sub_ctx, sub_norm, inner);
            };
            RandomIterCount L1 = RandomIterCount::uniform(sub_norm.base);
            L0Value fac = L0Value::scalar_constant(r.sub, std::min(factor, 0.995));
            auto [V, rep] = fixed_point_random_contraction(
                std::function<L0Value(const L0Value&)>(G), L1, fac, eta, sub_norm, stage_tol,
                max_iter);
            if (!rep.converged) {
                out.report.converged = false;
                out.report.status = "stage-not-converged";
            }
            out.report.block_max_ratio[b] =
                std::max(out.report.block_max_ratio[b], rep.block_max_ratio.front());
            out.report.outer_iterations += rep.outer_iterations;

            BseSolution stage = to_solution(sub_gen, V, sub_ctx, sub_norm, inner);
            for (std::size_t s = lo; s < hi; ++s)
                dm[s - t0] = stage.M.at(s + 1) - stage.M.at(s);
            for (std::size_t s = lo; s <= hi; ++s) y_window[s - t0] = stage.Y.at(s);
            eta = stage.Y.at(lo);
        }

        // assemble the block solution
        std::vector<L0Value> mvals;
        mvals.push_back(L0Value::zero(r.sub, d).with_meas(r.sub->partition(t0)));
        L0Value acc = mvals.front();
        for (std::size_t s = 0; s < steps; ++s) {
            acc = acc + dm[s];
            mvals.push_back(acc.with_meas(r.sub->partition(t0 + s + 1)));
        }
        std::vector<L0Value> yvals;
        for (std::size_t s = 0; s <= steps; ++s)
            yvals.push_back(y_window[s].with_meas(r.sub->partition(t0 + s)));

        parts.push_back(std::move(r));
        y_parts.push_back(AdaptedProcess(parts.back().sub, t0, std::move(yvals)));
        m_parts.push_back(AdaptedProcess(parts.back().sub, t0, std::move(mvals)));
    }

    // glue the blocks back onto the parent space
    std::vector<L0Value> yg, mg;
    for (std::size_t k = t0; k <= space->step_count(); ++k) {
        std::vector<const BlockRestriction*> rp;
        std::vector<const L0Value*> yv, mv;
        for (std::size_t b = 0; b < parts.size(); ++b) {
            rp.push_back(&parts[b]);
            yv.push_back(&y_parts[b].at(k));
            mv.push_back(&m_parts[b].at(k));
        }
        yg.push_back(detail::embed_blocks(space, space->partition(k), rp, yv, d));
        mg.push_back(detail::embed_blocks(space, space->partition(k), rp, mv, d));
    }
    out.solution = BseSolution{AdaptedProcess(space, t0, std::move(yg)),
                               MartingaleProcess(AdaptedProcess(space, t0, std::move(mg)))};
    out.fixed_point = to_fixed_point(out.solution);
    out.residual = bse_residual(GeneratorSpec{driver}, xi, out.solution, ctx);
    out.report.block_iter_count = out.block_counts;
    if (out.report.converged && out.residual > tol) out.report.status = "residual-above-tol";
    return out;
}

// ============================================================================
// Delayed-measure solver
// ============================================================================

/// Flattens the delayed generator to an undelayed driver scaled per step by
/// the cumulative lag mass v([0, T - s - dt]); exact for left-endpoint sums.
inline PointwiseGen flatten_delayed(const DelayedGen& gen, const SpacePtr& space,
                                    std::size_t t0) {
    const std::size_t steps = space->step_count() - t0;
    PointwiseGen flat = gen.g;
    flat.time_scale.clear();
    for (std::size_t s = 0; s < steps; ++s) {
        std::vector<double> data(space->atom_count());
        for (std::size_t b = 0; b < gen.delay.base.block_count(); ++b) {
            const double cum = gen.delay.cumulative(b, steps - 1 - s);
            for (std::size_t atom : gen.delay.base.block(b)) data[atom] = cum;
        }
        flat.time_scale.push_back(L0Value(space, 1, std::move(data), gen.delay.base));
    }
    return flat;
}

struct DelayedOutcome {
    SolveOutcome outcome;
    double swap_defect = 0.0;   // terminal defect of the change of variables
};

/// Solver for the delayed generator. The discrete change of variables makes
/// the delayed and flattened generators agree at the terminal time (only
/// there: intermediate accumulation profiles differ), so both induce the
/// same map on terminal identifiers. The fixed point is found through the
/// (Z, U) solver for the flattened driver with the effective coefficient
/// v([0, T]) C1, and the solution is then rebuilt under the delayed
/// generator itself.
inline DelayedOutcome solve_bsde_delayed(const DelayedGen& gen, const L0Value& lip_g,
                                         const L0Value& xi, const GenContext& ctx, double tol,
                                         std::uint64_t seed = 1) {
    const SpacePtr& space = xi.space();
    gen.delay.validate(space->step_count() - ctx.start + 1);
    PointwiseGen flat = flatten_delayed(gen, space, ctx.start);

    DelayedOutcome out;
    Rng rng(seed);
    for (int rep = 0; rep < 2; ++rep) {
        MartingaleProcess M = martingale_from_terminal(random_atom_value(rng, space), ctx.start);
        AdaptedProcess Y = AdaptedProcess::constant(
            space, random_value(rng, space, space->partition(ctx.start)), ctx.start);
        AdaptedProcess direct = eval_generator(GeneratorSpec{gen}, Y, M, ctx);
        AdaptedProcess flattened = eval_generator(GeneratorSpec{flat}, Y, M, ctx);
        out.swap_defect =
            std::max(out.swap_defect, max_abs_diff(direct.terminal(), flattened.terminal()));
    }
    if (out.swap_defect > 1e-12)
        throw std::runtime_error("solve_bsde_delayed: change-of-variables identity failed");

    // effective Lipschitz coefficient per block: total lag mass times C1
    std::vector<double> lip_atoms(space->atom_count());
    for (std::size_t b = 0; b < gen.delay.base.block_count(); ++b)
        for (std::size_t atom : gen.delay.base.block(b))
            lip_atoms[atom] = gen.delay.total(b) * lip_g.at(atom);
    L0Value lip_eff(space, 1, std::move(lip_atoms),
                    Partition::join(gen.delay.base, lip_g.meas()));

    out.outcome = solve_bsde_zu(flat, lip_eff, xi, ctx, tol);

    // rebuild the solution under the delayed generator from the shared
    // fixed point (the generator does not depend on Y)
    CondNorm norm(2.0, space->partition(ctx.start), space);
    InnerSolve inner = default_inner(space, ctx.start, tol / 10.0);
    out.outcome.solution = to_solution(GeneratorSpec{gen}, out.outcome.fixed_point, ctx, norm,
                                       inner);
    out.outcome.residual = bse_residual(GeneratorSpec{gen}, xi, out.outcome.solution, ctx);
    if (out.outcome.report.converged && out.outcome.residual > tol)
        out.outcome.report.status = "residual-above-tol";
    return out;
}

// ============================================================================
// Nonexpansive-type solver (averaged iteration)
// ============================================================================

struct NonexpansiveOutcome {
    SolveOutcome outcome;
    bool ball_ok = true;            // sampled self-map check of the stated ball
    std::size_t ball_witness = 0;   // violating block when !ball_ok
    double worst_expansion = 0.0;   // positive part of |||G(V)-G(V')||| - |||V-V'|||
    bool inconclusive = false;      // iteration budget exhausted
};

/// Averaged (Mann) iteration V <- (1-lambda) V + lambda G(V) for equations
/// of nonexpansive type. Existence is guaranteed by the theory; convergence
/// of this scheme is not, so an exhausted budget is reported as inconclusive
/// rather than failed.
inline NonexpansiveOutcome solve_nonexpansive(const GeneratorSpec& F, const L0Value& xi,
                                              const L0Value& center, const L0Value& radius,
                                              double lambda, const GenContext& ctx, double p,
                                              double tol, int max_iter,
                                              std::uint64_t seed = 1) {
    const SpacePtr& space = xi.space();
    CondNorm norm(p, space->partition(ctx.start), space);
    InnerSolve inner = default_inner(space, ctx.start, tol / 10.0);
    auto G = [&](const L0Value& V) { return g_map(F, xi, V, ctx, norm, inner); };

    NonexpansiveOutcome out;

    // ball self-map on sampled boundary points: center + scaled directions
    Rng rng(seed);
    for (int rep = 0; rep < 8; ++rep) {
        L0Value dir = random_atom_value(rng, space, xi.dim());
        L0Value nrm = cond_norm(dir, norm);
        L0Value scale = nrm.map_scalar([](double v) { return v > 1e-12 ? 1.0 / v : 0.0; })
                            .scaled_by(radius);
        L0Value boundary = center + dir.scaled_by(scale);
        L0Value reach = cond_norm(G(boundary) - center, norm);
        for (std::size_t b = 0; b < norm.base.block_count(); ++b) {
            const std::size_t lead = norm.base.block(b).front();
            if (reach.at(lead) > radius.at(lead) + 1e-9) {
                out.ball_ok = false;
                out.ball_witness = b;
            }
        }
    }

    L0Value V = center;
    L0Value gv = G(V);
    out.outcome.report.status = "inconclusive";
    for (int it = 0; it < max_iter; ++it) {
        // sampled nonexpansiveness along the trajectory
        if (it % 25 == 0) {
            L0Value probe = random_atom_value(rng, space, xi.dim());
            L0Value lhs = cond_norm(G(V) - G(probe), norm);
            L0Value rhs = cond_norm(V - probe, norm);
            for (std::size_t a = 0; a < lhs.atom_count(); ++a)
                out.worst_expansion = std::max(out.worst_expansion, lhs.at(a) - rhs.at(a));
        }
        const double resid = max_abs_diff(gv, V);
        out.outcome.report.step_residuals.push_back(resid);
        // stop with headroom: the reported residual is recomputed through a
        // fresh inner solve and may shift by a few inner tolerances
        if (resid <= 0.75 * tol) {
            out.outcome.report.converged = true;
            out.outcome.report.status = "converged";
            out.outcome.report.outer_iterations = it;
            break;
        }
        V = (1.0 - lambda) * V + lambda * gv;
        gv = G(V);
    }
    out.inconclusive = !out.outcome.report.converged;

    out.outcome.fixed_point = V;
    out.outcome.solution = to_solution(F, V, ctx, norm, inner);
    out.outcome.residual = bse_residual(F, xi, out.outcome.solution, ctx);
    return out;
}

// ============================================================================
// Closed-form nonuniqueness family
// ============================================================================

/// For a (T - t0) = 1 and E_start(xi) = 0, every start-measurable Y0 yields
/// the exact solution Y_t = (1 - tau(t)) Y0 + E_t(xi), M_t = -(E_t - E_start) xi
/// of the path-functional equation; distinct Y0 give distinct solutions.
inline std::vector<BseSolution> enumerate_counterexample_solutions(
    const L0Value& xi, const L0Value& a, std::span<const L0Value> y0_samples,
    const GenContext& ctx) {
    const SpacePtr& space = xi.space();
    const std::size_t t0 = ctx.start;
    const Partition& base = space->partition(t0);
    const double total = space->horizon() - space->time(t0);
    if (max_abs(cond_expect(xi, base)) > 1e-12)
        throw std::invalid_argument(
            "enumerate_counterexample_solutions: terminal condition must have zero "
            "conditional mean");
    for (std::size_t atom = 0; atom < space->atom_count(); ++atom)
        if (std::abs(a.at(atom) * total - 1.0) > 1e-12)
            throw std::invalid_argument(
                "enumerate_counterexample_solutions: a (T - t0) must equal 1");

    GeneratorSpec F{PathScaleGen{a}};
    std::vector<BseSolution> family;
    for (const L0Value& y0 : y0_samples) {
        if (!is_measurable(y0, base))
            throw std::invalid_argument(
                "enumerate_counterexample_solutions: Y0 must be start-measurable");
        std::vector<L0Value> yvals, mvals;
        L0Value head = cond_expect(xi, base);
        for (std::size_t k = t0; k <= space->step_count(); ++k) {
            const double tau = (space->time(k) - space->time(t0)) / total;
            L0Value e_t = cond_expect(xi, space->partition(k));
            yvals.push_back(((1.0 - tau) * y0 + e_t).with_meas(space->partition(k)));
            mvals.push_back((head - e_t).with_meas(space->partition(k)));
        }
        BseSolution sol{AdaptedProcess(space, t0, std::move(yvals)),
                        MartingaleProcess(AdaptedProcess(space, t0, std::move(mvals)))};
        if (bse_residual(F, xi, sol, ctx) > 1e-12)
            throw std::runtime_error(
                "enumerate_counterexample_solutions: closed form failed the equation");
        family.push_back(std::move(sol));
    }
    return family;
}

// ============================================================================
// Concatenation solver
// ============================================================================

struct ConcatenationOutcome {
    SolveOutcome outcome;
    bool direct_attempted = false;
    double direct_gap = 0.0;    // distance between glued and direct solutions
};

/// Solves the equation per start-measurable part classically (each part's
/// base is trivial after restriction), glues the solutions and the terminal
/// conditions, and cross-checks against the direct conditional solve when
/// the budget admits one.
inline ConcatenationOutcome solve_by_concatenation(
    const GeneratorSpec& F, const EventPartition& parts, std::span<const L0Value> xi_parts,
    const ContractionBudget& budget, const GenContext& ctx, double tol) {
    if (parts.block_count() != xi_parts.size())
        throw std::invalid_argument("solve_by_concatenation: one terminal value per part");
    const SpacePtr& space = xi_parts.front().space();
    const std::size_t t0 = ctx.start;
    const std::size_t d = xi_parts.front().dim();

    std::vector<BlockRestriction> rs;
    std::vector<AdaptedProcess> y_parts, m_parts;
    ConcatenationOutcome out;
    for (std::size_t b = 0; b < parts.block_count(); ++b) {
        BlockRestriction r = restrict_space(space, parts.block(b));
        WalkBasis sub_basis;
        GenContext sub_ctx{nullptr, t0};
        if (ctx.basis != nullptr) {
            sub_basis = restrict_basis(*ctx.basis, r, t0);
            sub_ctx.basis = &sub_basis;
        }
        GeneratorSpec sub_gen = restrict_generator(F, r);
        std::vector<double> c_sub;
        for (std::size_t atom : r.atoms) c_sub.push_back(budget.C.at(atom));
        ContractionBudget sub_budget{
            budget.p, L0Value(r.sub, 1, std::move(c_sub), r.sub->partition(t0)),
            RandomIterCount::per_block(
                r.sub->partition(t0),
                std::vector<int>{budget.L.per_atom[r.atoms.front()]})};
        SolveOutcome sub =
            solve_bse_contraction(sub_gen, restrict_value(xi_parts[b], r), sub_budget, sub_ctx,
                                  tol);
        out.outcome.report.outer_iterations += sub.report.outer_iterations;
        if (!sub.report.converged) {
            out.outcome.report.converged = false;
            out.outcome.report.status = "part-not-converged";
        }
        rs.push_back(std::move(r));
        y_parts.push_back(sub.solution.Y);
        m_parts.push_back(sub.solution.M.process());
    }

    std::vector<L0Value> yg, mg;
    for (std::size_t k = t0; k <= space->step_count(); ++k) {
        std::vector<const BlockRestriction*> rp;
        std::vector<const L0Value*> yv, mv;
        for (std::size_t b = 0; b < rs.size(); ++b) {
            rp.push_back(&rs[b]);
            yv.push_back(&y_parts[b].at(k));
            mv.push_back(&m_parts[b].at(k));
        }
        yg.push_back(detail::embed_blocks(space, space->partition(k), rp, yv, d));
        mg.push_back(detail::embed_blocks(space, space->partition(k), rp, mv, d));
    }
    out.outcome.solution = BseSolution{AdaptedProcess(space, t0, std::move(yg)),
                                       MartingaleProcess(AdaptedProcess(space, t0, std::move(mg)))};
    out.outcome.fixed_point = to_fixed_point(out.outcome.solution);

    std::vector<ConcatPart> xi_glue;
    for (std::size_t b = 0; b < parts.block_count(); ++b)
        xi_glue.push_back({parts.block(b), xi_parts[b]});
    L0Value xi = concatenate(xi_glue);
    out.outcome.residual = bse_residual(F, xi, out.outcome.solution, ctx);
    if (out.outcome.report.status.empty())
        out.outcome.report.status = out.outcome.residual <= tol ? "converged" : "residual-above-tol";
    out.outcome.report.converged = out.outcome.residual <= tol;

    // direct conditional solve when the budget validates
    try {
        budget.validate();
        SolveOutcome direct = solve_bse_contraction(F, xi, budget, ctx, tol);
        out.direct_attempted = true;
        out.direct_gap =
            std::max(max_abs_diff(direct.solution.Y, out.outcome.solution.Y),
                     max_abs_diff(direct.solution.M.process(), out.outcome.solution.M.process()));
    } catch (const std::invalid_argument&) {
        out.direct_attempted = false;
    }
    return out;
}

// ============================================================================
// Backward-induction oracle
// ============================================================================

/// Pointwise driver for the oracle: step, atom, current y, walk coefficient
/// of M; must match the conventions of the solvers it cross-checks.
using OracleDriver = std::function<void(std::size_t step, std::size_t atom,
                                        std::span<const double> y, std::span<const double> z,
                                        std::span<double> out)>;

/// Independent backward induction on a binomial tree: node by node solve the
/// implicit one-step equation y = E[Y_next | node] + f(t, y, z) dt, with z
/// the node's walk coefficient of the martingale increment. Double checks
/// nothing through the fixed-point machinery.
inline BseSolution brute_force_oracle(const OracleDriver& f, const L0Value& xi,
                                      const WalkBasis& basis, std::size_t t0 = 0) {
    if (basis.branches != 2 || !basis.jumps.empty())
        throw std::invalid_argument("brute_force_oracle: binomial tree required");
    const SpacePtr& space = basis.space;
    const std::size_t d = xi.dim();
    const double dt = space->dt();

    std::vector<L0Value> yvals(space->step_count() - t0 + 1, L0Value::zero(space, d));
    yvals.back() = xi.with_meas(space->finest());
    std::vector<L0Value> minc;

    for (std::size_t k = space->step_count(); k-- > t0;) {
        const Partition& now = space->partition(k);
        const L0Value& next = yvals[k + 1 - t0];
        std::vector<double> ydata(space->atom_count() * d);
        std::vector<double> mdata(space->atom_count() * d);
        for (std::size_t b = 0; b < now.block_count(); ++b) {
            const auto& node = now.block(b);
            double mass = 0.0, wvar = 0.0;
            std::vector<double> mean(d, 0.0), zcoef(d, 0.0);
            for (std::size_t atom : node) mass += space->weight(atom);
            for (std::size_t atom : node) {
                const double w = space->weight(atom) / mass;
                const double dw = basis.walk.at(k + 1).at(atom) - basis.walk.at(k).at(atom);
                wvar += w * dw * dw;
                for (std::size_t c = 0; c < d; ++c) {
                    mean[c] += w * next.at(atom, c);
                    zcoef[c] += w * next.at(atom, c) * dw;
                }
            }
            // z: walk coefficient of dM = E[Y_next] - Y_next
            for (std::size_t c = 0; c < d; ++c) zcoef[c] = -zcoef[c] / wvar;

            // implicit step: y = mean + f(t_k, y, z) dt
            std::vector<double> y = mean, fy(d);
            bool settled = false;
            for (int it = 0; it < 500; ++it) {
                f(k, node.front(), y, zcoef, fy);
                std::vector<double> ynew(d);
                double delta = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    ynew[c] = mean[c] + fy[c] * dt;
                    delta = std::max(delta, std::abs(ynew[c] - y[c]));
                }
                y = std::move(ynew);
                if (delta <= 1e-13) {
                    settled = true;
                    break;
                }
            }
            if (!settled)
                throw std::runtime_error("brute_force_oracle: implicit step did not contract");
            // dM_k = E_k[Y_next] - Y_next
            for (std::size_t atom : node)
                for (std::size_t c = 0; c < d; ++c) {
                    ydata[atom * d + c] = y[c];
                    mdata[atom * d + c] = mean[c] - next.at(atom, c);
                }
        }
        yvals[k - t0] = L0Value(space, d, std::move(ydata), now);
        minc.insert(minc.begin(), L0Value(space, d, std::move(mdata), space->partition(k + 1)));
    }

    std::vector<L0Value> mvals;
    mvals.push_back(L0Value::zero(space, d).with_meas(space->partition(t0)));
    L0Value acc = mvals.front();
    for (std::size_t s = 0; s < minc.size(); ++s) {
        acc = acc + minc[s];
        mvals.push_back(acc.with_meas(space->partition(t0 + s + 1)));
    }
    return BseSolution{AdaptedProcess(space, t0, std::move(yvals)),
                       MartingaleProcess(AdaptedProcess(space, t0, std::move(mvals)))};
}

} // namespace bselab
