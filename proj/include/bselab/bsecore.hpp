#pragma once

// The generator catalog for backward stochastic equations of the form
//   Y_t + F_t(Y, M) + M_t = xi + F_T(Y, M) + M_T,
// the forward solvability iteration (condition (S)), and the correspondence
// between solutions and fixed points of G(V) = xi + F_T(Y^V, M^V).

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "bselab/processes.hpp"
#include "bselab/rnmodule.hpp"

namespace bselab {

// ============================================================================
// Generator catalog
// ============================================================================

/// Evaluation context: the driver basis (needed by kinds that read the
/// decomposition coefficients of M) and the start index t0 of the equation.
struct GenContext {
    const WalkBasis* basis = nullptr;
    std::size_t start = 0;
};

/// F = 0.
struct ZeroGen {};

/// Integral generator with a path driver:
///   f(t, Y, M) = c1 (Y_t - Y_start + M_t) + c2 (a Y_start + b M_t),
/// accumulated by left-endpoint sums. c1 > 0 and c2 >= 0 are base-measurable
/// scalars, |a| <= 1 and |b| <= 1.
struct IntegralPathGen {
    L0Value c1;
    L0Value c2;
    double a = 1.0;
    double b = 1.0;
};

/// Integral generator with a pointwise driver f(t, Y_t, Z_t, U_t). `f`
/// receives the step index, atom, current values and writes the d-vector
/// result; coefficients read through `atom` must be base-measurable or the
/// evaluation fails the adaptedness gate. Optional per-step scale and active
/// step window support time-masked and delay-flattened drivers.
struct PointwiseGen {
    using Fn = std::function<void(std::size_t step, std::size_t atom,
                                  std::span<const double> y, std::span<const double> z,
                                  std::span<const double> u, std::span<double> out)>;
    Fn f;
    bool uses_y = false;
    bool uses_zu = true;
    std::vector<L0Value> time_scale;              // per step (index step - start)
    std::size_t window_lo = 0;                    // active steps [window_lo, window_hi)
    std::size_t window_hi = SIZE_MAX;
};

/// An F0-measurable finite measure on the lag grid {0, dt, 2 dt, ...}: one
/// nonnegative weight per lag per base block.
struct RandomMeasure {
    Partition base;
    std::vector<std::vector<double>> weights;     // [block][lag]

    void validate(std::size_t lag_count) const {
        if (weights.size() != base.block_count())
            throw std::invalid_argument("RandomMeasure: one weight row per base block");
        for (const auto& row : weights) {
            if (row.size() != lag_count)
                throw std::invalid_argument("RandomMeasure: weight row length mismatch");
            for (double w : row)
                if (!(w >= 0.0))
                    throw std::invalid_argument("RandomMeasure: negative weight");
        }
    }
    double cumulative(std::size_t block, std::size_t max_lag) const {
        double s = 0.0;
        for (std::size_t r = 0; r <= max_lag && r < weights[block].size(); ++r)
            s += weights[block][r];
        return s;
    }
    double total(std::size_t block) const { return cumulative(block, weights[block].size()); }
};

/// Time-delayed generator: the driver g(s, Z_s, U_s) enters through the lag
/// measure,  F_t = sum_{j<t} dt sum_{r<=j-start} v_r g(t_{j-r}, Z_{j-r}, U_{j-r}).
struct DelayedGen {
    PointwiseGen g;
    RandomMeasure delay;
};

/// Path-functional generator F_t(Y, M) = a (t - t_start) Y_start; the
/// boundary a (T - t_start) = 1 yields the nonuniqueness family.
struct PathScaleGen {
    L0Value a;
};

/// Bounded-clamp generator
///   F_t(Y, M) = 1/(2 C_p) clamp_B( tau(t) (Y_start - M_t) ),
/// with tau the normalized elapsed time, clamp_B the Euclidean radial clamp
/// at radius B (nonexpansive, zero at zero) and C_p = p/(p-1).
struct ClampGen {
    double bound = 1.0;
    double p = 2.0;
};

/// Linear-in-M generator F_t(Y, M) = tau(t) A M_t with a base-measurable
/// d x d matrix A (row-major entries); its G-map difference iterates apply A
/// repeatedly, which realizes blockwise second-iterate contractions.
struct MatrixMGen {
    std::vector<L0Value> entries;
    std::size_t dim = 1;
};

using GeneratorSpec = std::variant<ZeroGen, IntegralPathGen, PointwiseGen, DelayedGen,
                                   PathScaleGen, ClampGen, MatrixMGen>;

inline bool depends_on_y(const GeneratorSpec& F) {
    return std::visit(
        [](const auto& g) -> bool {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, IntegralPathGen> || std::is_same_v<T, PathScaleGen> ||
                          std::is_same_v<T, ClampGen>)
                return true;
            else if constexpr (std::is_same_v<T, PointwiseGen>)
                return g.uses_y;
            else
                return false;
        },
        F);
}

// ============================================================================
// Evaluation
// ============================================================================

namespace detail {

inline double elapsed_fraction(const FilteredSpace& space, std::size_t start, std::size_t k) {
    const double total = space.horizon() - space.time(start);
    if (total <= 0.0) return 0.0;
    return (space.time(k) - space.time(start)) / total;
}

/// Left-endpoint accumulation of per-step values into an adapted process
/// starting at zero.
inline AdaptedProcess accumulate_steps(const SpacePtr& space, std::size_t start,
                                       std::span<const L0Value> step_values) {
    std::vector<L0Value> values;
    const std::size_t d = step_values.empty() ? 1 : step_values.front().dim();
    values.push_back(L0Value::zero(space, d).with_meas(space->partition(start)));
    L0Value acc = values.front();
    const double dt = space->dt();
    for (std::size_t k = start; k < space->step_count(); ++k) {
        acc = acc + dt * step_values[k - start];
        values.push_back(acc);
    }
    return AdaptedProcess(space, start, std::move(values));
}

/// Per-step driver values of a pointwise generator, before accumulation.
inline std::vector<L0Value> pointwise_step_values(const PointwiseGen& g,
                                                  const AdaptedProcess& Y,
                                                  const MartingaleProcess& M,
                                                  const GenContext& ctx) {
    const SpacePtr& space = Y.space();
    const std::size_t d = Y.dim();
    const std::size_t start = ctx.start;
    std::optional<Decomposition> dec;
    std::size_t marks = 0;
    if (g.uses_zu) {
        if (ctx.basis == nullptr)
            throw std::invalid_argument("eval_generator: driver needs a walk basis");
        dec = martingale_decompose(M, *ctx.basis);
        marks = ctx.basis->jumps.size();
    }
    std::vector<L0Value> out;
    std::vector<double> y(d), z(d, 0.0), u(d * std::max<std::size_t>(marks, 1), 0.0);
    std::vector<double> res(d);
    for (std::size_t k = start; k < space->step_count(); ++k) {
        std::vector<double> data(space->atom_count() * d, 0.0);
        const bool active = k >= g.window_lo && k < g.window_hi;
        if (active) {
            for (std::size_t atom = 0; atom < space->atom_count(); ++atom) {
                for (std::size_t c = 0; c < d; ++c) y[c] = Y.at(k).at(atom, c);
                if (dec) {
                    for (std::size_t c = 0; c < d; ++c) z[c] = dec->walk_coeff(k).at(atom, c);
                    for (std::size_t x = 0; x < marks; ++x)
                        for (std::size_t c = 0; c < d; ++c)
                            u[x * d + c] = dec->jump_coeff(x, k).at(atom, c);
                }
                g.f(k, atom, y, z, std::span<const double>(u.data(), d * marks), res);
                for (std::size_t c = 0; c < d; ++c) data[atom * d + c] = res[c];
            }
        }
        L0Value step(space, d, std::move(data), space->partition(k));
        if (!g.time_scale.empty()) step = step.scaled_by(g.time_scale.at(k - start));
        out.push_back(std::move(step));
    }
    return out;
}

} // namespace detail

/// Evaluates F(Y, M) as an adapted process with F_start = 0.
inline AdaptedProcess eval_generator(const GeneratorSpec& F, const AdaptedProcess& Y,
                                     const MartingaleProcess& M, const GenContext& ctx) {
    const SpacePtr& space = Y.space();
    const std::size_t start = ctx.start;
    if (Y.start() != start || M.start() != start)
        throw std::invalid_argument("eval_generator: processes must start at the context time");

    return std::visit(
        [&](const auto& g) -> AdaptedProcess {
            using T = std::decay_t<decltype(g)>;
            if constexpr (std::is_same_v<T, ZeroGen>) {
                return AdaptedProcess::constant(space, L0Value::zero(space, Y.dim()), start);
            } else if constexpr (std::is_same_v<T, IntegralPathGen>) {
                std::vector<L0Value> steps;
                const L0Value& y0 = Y.at(start);
                for (std::size_t k = start; k < space->step_count(); ++k) {
                    L0Value path = (Y.at(k) - y0 + M.at(k)).scaled_by(g.c1);
                    L0Value coupling = (g.a * y0 + g.b * M.at(k)).scaled_by(g.c2);
                    steps.push_back(path + coupling);
                }
                return detail::accumulate_steps(space, start, steps);
            } else if constexpr (std::is_same_v<T, PointwiseGen>) {
                return detail::accumulate_steps(space, start,
                                                detail::pointwise_step_values(g, Y, M, ctx));
            } else if constexpr (std::is_same_v<T, DelayedGen>) {
                g.delay.validate(space->step_count() - start + 1);
                std::vector<L0Value> inner =
                    detail::pointwise_step_values(g.g, Y, M, ctx);
                // F_t = sum_{j<t} dt sum_{r=0}^{j-start} v_r g(t_{j-r})
                std::vector<L0Value> steps;
                for (std::size_t j = start; j < space->step_count(); ++j) {
                    L0Value mix = L0Value::zero(space, Y.dim());
                    for (std::size_t r = 0; r + start <= j; ++r) {
                        std::vector<double> w(space->atom_count());
                        for (std::size_t b = 0; b < g.delay.base.block_count(); ++b)
                            for (std::size_t atom : g.delay.base.block(b))
                                w[atom] = g.delay.weights[b][r];
                        L0Value weight(space, 1, std::move(w), g.delay.base);
                        mix = mix + inner[j - r - start].scaled_by(weight);
                    }
                    steps.push_back(std::move(mix));
                }
                return detail::accumulate_steps(space, start, steps);
            } else if constexpr (std::is_same_v<T, PathScaleGen>) {
                std::vector<L0Value> values;
                const L0Value& y0 = Y.at(start);
                for (std::size_t k = start; k <= space->step_count(); ++k) {
                    const double t = space->time(k) - space->time(start);
                    values.push_back((t * y0).scaled_by(g.a));
                }
                return AdaptedProcess(space, start, std::move(values));
            } else if constexpr (std::is_same_v<T, ClampGen>) {
                const double cp = g.p == kInfP ? 1.0 : g.p / (g.p - 1.0);
                const double scale = 1.0 / (2.0 * cp);
                std::vector<L0Value> values;
                const L0Value& y0 = Y.at(start);
                for (std::size_t k = start; k <= space->step_count(); ++k) {
                    const double tau = detail::elapsed_fraction(*space, start, k);
                    L0Value arg = tau * (y0 - M.at(k));
                    std::vector<double> data(space->atom_count() * Y.dim());
                    for (std::size_t atom = 0; atom < space->atom_count(); ++atom) {
                        double norm2 = 0.0;
                        for (std::size_t c = 0; c < Y.dim(); ++c)
                            norm2 += arg.at(atom, c) * arg.at(atom, c);
                        const double r = std::sqrt(norm2);
                        const double shrink = r > g.bound ? g.bound / r : 1.0;
                        for (std::size_t c = 0; c < Y.dim(); ++c)
                            data[atom * Y.dim() + c] = scale * shrink * arg.at(atom, c);
                    }
                    values.push_back(L0Value(space, Y.dim(), std::move(data),
                                             space->partition(k)));
                }
                return AdaptedProcess(space, start, std::move(values));
            } else {
                static_assert(std::is_same_v<T, MatrixMGen>);
                const std::size_t d = g.dim;
                if (Y.dim() != d)
                    throw std::invalid_argument("eval_generator: matrix kind dimension mismatch");
                std::vector<L0Value> values;
                for (std::size_t k = start; k <= space->step_count(); ++k) {
                    const double tau = detail::elapsed_fraction(*space, start, k);
                    std::vector<double> data(space->atom_count() * d, 0.0);
                    for (std::size_t atom = 0; atom < space->atom_count(); ++atom)
                        for (std::size_t i = 0; i < d; ++i) {
                            double s = 0.0;
                            for (std::size_t j = 0; j < d; ++j)
                                s += g.entries[i * d + j].at(atom) * M.at(k).at(atom, j);
                            data[atom * d + i] = tau * s;
                        }
                    values.push_back(L0Value(space, d, std::move(data), space->partition(k)));
                }
                return AdaptedProcess(space, start, std::move(values));
            }
        },
        F);
}

// ============================================================================
// Condition (S)
// ============================================================================

/// Contraction data for the forward iteration: the random iterate count and
/// the asserted per-block factor.
struct InnerSolve {
    RandomIterCount L;
    L0Value contraction;
    double tol = 1e-12;
    int max_outer = 400;
};

inline InnerSolve default_inner(const SpacePtr& space, std::size_t start, double tol) {
    return InnerSolve{RandomIterCount::uniform(space->partition(start)),
                      L0Value::scalar_constant(space, 0.995), tol, 400};
}

/// Glue per-block choices among process iterates (used by the process-level
/// fixed-point engine).
inline AdaptedProcess glue_processes(const std::vector<AdaptedProcess>& candidates,
                                     const RandomIterCount& counts) {
    const AdaptedProcess& first = candidates.front();
    const SpacePtr& space = first.space();
    std::vector<L0Value> values;
    for (std::size_t k = first.start(); k <= first.last(); ++k) {
        const std::size_t d = first.dim();
        std::vector<double> data(space->atom_count() * d);
        for (std::size_t atom = 0; atom < space->atom_count(); ++atom) {
            const auto& pick = candidates.at(static_cast<std::size_t>(counts.per_atom[atom] - 1));
            for (std::size_t c = 0; c < d; ++c) data[atom * d + c] = pick.at(k).at(atom, c);
        }
        values.push_back(L0Value(space, d, std::move(data), space->partition(k)));
    }
    return AdaptedProcess(space, first.start(), std::move(values));
}

/// Solves the forward equation Y_t = y - F_t(Y, M) - M_t by the Picard
/// iteration on the process space; Y_start stays pinned at y. Returns the
/// solution and the iteration report.
inline std::pair<AdaptedProcess, SolveReport> solve_condition_S(
    const GeneratorSpec& F, const L0Value& y, const MartingaleProcess& M,
    const GenContext& ctx, const CondNorm& norm, const InnerSolve& inner) {
    const SpacePtr& space = M.space();
    if (!is_measurable(y, space->partition(ctx.start)))
        throw std::invalid_argument("solve_condition_S: start value not measurable at start");

    AdaptedProcess y_const = AdaptedProcess::constant(space, y, ctx.start);
    auto step = [&](const AdaptedProcess& Y) {
        return y_const - eval_generator(F, Y, M, ctx) - M.process();
    };
    auto dist = [&](const AdaptedProcess& a, const AdaptedProcess& b) {
        return sp_norm(a - b, norm);
    };
    auto glue = [](const std::vector<AdaptedProcess>& cands, const RandomIterCount& counts) {
        return glue_processes(cands, counts);
    };
    return fixed_point_random_contraction(step, inner.L, inner.contraction, y_const, dist, glue,
                                          inner.tol, inner.max_outer);
}

// ============================================================================
// Solution <-> fixed point correspondence
// ============================================================================

struct BseSolution {
    AdaptedProcess Y;
    MartingaleProcess M;
};

/// Worst absolute defect of Y_t + F_t + M_t = xi + F_T + M_T over grid times
/// and atoms.
inline double bse_residual(const GeneratorSpec& F, const L0Value& xi, const BseSolution& sol,
                           const GenContext& ctx) {
    AdaptedProcess Fp = eval_generator(F, sol.Y, sol.M, ctx);
    const std::size_t last = sol.Y.last();
    L0Value rhs = xi + Fp.at(last) + sol.M.at(last);
    double worst = 0.0;
    for (std::size_t k = ctx.start; k <= last; ++k) {
        L0Value lhs = sol.Y.at(k) + Fp.at(k) + sol.M.at(k);
        worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
    return worst;
}

/// phi: V -> (Y^V, M^V), the solution candidate attached to a terminal
/// identifier V.
inline BseSolution to_solution(const GeneratorSpec& F, const L0Value& V, const GenContext& ctx,
                               const CondNorm& norm, const InnerSolve& inner) {
    MartingaleProcess M = martingale_from_terminal(V, ctx.start);
    L0Value y = cond_expect(V, M.space()->partition(ctx.start));
    auto [Y, report] = solve_condition_S(F, y, M, ctx, norm, inner);
    if (!report.converged)
        throw std::runtime_error("to_solution: forward iteration did not converge");
    return BseSolution{std::move(Y), std::move(M)};
}

/// pi: (Y, M) -> Y_start - M_T, the fixed-point identifier of a solution.
inline L0Value to_fixed_point(const BseSolution& sol) {
    return sol.Y.at(sol.Y.start()) - sol.M.terminal();
}

/// G(V) = xi + F_T(Y^V, M^V).
inline L0Value g_map(const GeneratorSpec& F, const L0Value& xi, const L0Value& V,
                     const GenContext& ctx, const CondNorm& norm, const InnerSolve& inner) {
    BseSolution sol = to_solution(F, V, ctx, norm, inner);
    return xi + eval_generator(F, sol.Y, sol.M, ctx).terminal();
}

/// G0(V) = G(V) - E_start G(V), the zero-mean reduction available when F
/// does not depend on Y. Requires E_start V = 0.
inline L0Value g0_map(const GeneratorSpec& F, const L0Value& xi, const L0Value& V,
                      const GenContext& ctx, const CondNorm& norm, const InnerSolve& inner) {
    if (depends_on_y(F))
        throw std::invalid_argument("g0_map: generator must not depend on Y");
    const Partition& base = V.space()->partition(ctx.start);
    if (max_abs(cond_expect(V, base)) > 1e-10)
        throw std::invalid_argument("g0_map: V must have zero conditional mean");
    L0Value g = g_map(F, xi, V, ctx, norm, inner);
    return g - cond_expect(g, base);
}

/// Rebuilds the solution attached to a fixed point V of G0:
///   M_t = -E_t(V),  Y_t = E_start(xi) + E_start(F_T(M)) - F_t(M) - M_t.
inline BseSolution solution_from_zero_mean(const GeneratorSpec& F, const L0Value& xi,
                                           const L0Value& V, const GenContext& ctx) {
    if (depends_on_y(F))
        throw std::invalid_argument("solution_from_zero_mean: generator must not depend on Y");
    const SpacePtr& space = V.space();
    const Partition& base = space->partition(ctx.start);
    std::vector<L0Value> mvals;
    for (std::size_t k = ctx.start; k <= space->step_count(); ++k)
        mvals.push_back(-1.0 * cond_expect(V, space->partition(k)));
    MartingaleProcess M(AdaptedProcess(space, ctx.start, std::move(mvals)));

    AdaptedProcess any_y = AdaptedProcess::constant(space, L0Value::zero(space, V.dim()), ctx.start);
    AdaptedProcess Fp = eval_generator(F, any_y, M, ctx);
    L0Value head = cond_expect(xi, base) + cond_expect(Fp.terminal(), base);
    std::vector<L0Value> yvals;
    for (std::size_t k = ctx.start; k <= space->step_count(); ++k)
        yvals.push_back(head - Fp.at(k) - M.at(k));
    return BseSolution{AdaptedProcess(space, ctx.start, std::move(yvals)), std::move(M)};
}

// ============================================================================
// Generator stability
// ============================================================================

/// Glue adapted processes along an event partition, time by time.
inline AdaptedProcess concatenate_processes(const EventPartition& partition,
                                            std::span<const AdaptedProcess> pieces) {
    if (partition.block_count() != pieces.size())
        throw std::invalid_argument("concatenate_processes: one piece per block required");
    const AdaptedProcess& first = pieces.front();
    std::vector<L0Value> values;
    for (std::size_t k = first.start(); k <= first.last(); ++k) {
        std::vector<L0Value> slices;
        for (const auto& p : pieces) slices.push_back(p.at(k));
        values.push_back(concatenate(partition, slices).with_meas(first.space()->partition(k)));
    }
    return AdaptedProcess(first.space(), first.start(), std::move(values));
}

struct GeneratorStabilitySample {
    EventPartition partition;                 // blocks measurable at the start time
    std::vector<BseSolution> inputs;          // one (Y, M) pair per block
};

struct GeneratorStabilityReport {
    bool stable = true;
    double worst_generator = 0.0;
    double worst_g = 0.0;
};

using GeneratorFn =
    std::function<AdaptedProcess(const AdaptedProcess&, const MartingaleProcess&)>;

/// Checks that an abstract generator map commutes with concatenation along
/// start-measurable partitions (the gluing identity behind stability).
inline GeneratorStabilityReport generator_stability_check(
    const GeneratorFn& F, std::span<const GeneratorStabilitySample> samples,
    double tol = 1e-10) {
    GeneratorStabilityReport report;
    for (const auto& sample : samples) {
        std::vector<AdaptedProcess> ys, ms;
        std::vector<AdaptedProcess> f_pieces;
        for (const auto& in : sample.inputs) {
            ys.push_back(in.Y);
            ms.push_back(in.M.process());
            f_pieces.push_back(F(in.Y, in.M));
        }
        AdaptedProcess y_glued = concatenate_processes(sample.partition, ys);
        MartingaleProcess m_glued(concatenate_processes(sample.partition, ms));
        AdaptedProcess lhs = F(y_glued, m_glued);
        AdaptedProcess rhs = concatenate_processes(sample.partition, f_pieces);
        report.worst_generator = std::max(report.worst_generator, max_abs_diff(lhs, rhs));
    }
    report.stable = report.worst_generator <= tol;
    return report;
}

/// Checks that a catalog generator and its induced G commute with
/// concatenation along start-measurable partitions.
inline GeneratorStabilityReport generator_stability_check(
    const GeneratorSpec& F, const L0Value& xi, std::span<const GeneratorStabilitySample> samples,
    const GenContext& ctx, const CondNorm& norm, const InnerSolve& inner, double tol = 1e-10) {
    GeneratorFn fn = [&](const AdaptedProcess& Y, const MartingaleProcess& M) {
        return eval_generator(F, Y, M, ctx);
    };
    GeneratorStabilityReport report = generator_stability_check(fn, samples, tol);
    for (const auto& sample : samples) {
        std::vector<L0Value> g_pieces;
        std::vector<L0Value> v_pieces;
        for (const auto& in : sample.inputs) {
            L0Value v = to_fixed_point(in);
            v_pieces.push_back(v);
            g_pieces.push_back(g_map(F, xi, v, ctx, norm, inner));
        }
        L0Value v_glued = concatenate(sample.partition, v_pieces);
        L0Value g_lhs = g_map(F, xi, v_glued, ctx, norm, inner);
        L0Value g_rhs = concatenate(sample.partition, g_pieces);
        report.worst_g = std::max(report.worst_g, max_abs_diff(g_lhs, g_rhs));
    }
    report.stable = report.worst_generator <= tol && report.worst_g <= tol;
    return report;
}

} // namespace bselab
