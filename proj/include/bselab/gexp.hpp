#pragma once

// Conditional g-expectations: the time-t0 value of the classical driver
// equation Y_t = xi + int g(s, Y_s, Z_s) ds - int Z_s dW_s solved over the
// walk filtration with conditional terminal data, and the induced
// conditional convex risk measures.

#include <cmath>

#include "bselab/solvers.hpp"

namespace bselab {

/// Catalog of scalar classical drivers g(t, y, z): linear mu z + nu y, or a
/// convex kink kappa |z| (zero at zero). Lipschitz constant max(|mu|, |nu|)
/// respectively kappa.
struct GDriver {
    enum class Form { linear, abs_z };
    Form form = Form::linear;
    double mu = 0.0;
    double nu = 0.0;
    double kappa = 0.0;
    std::size_t start_index = 0;

    double lipschitz() const {
        return form == Form::linear ? std::max(std::abs(mu), std::abs(nu)) : kappa;
    }
    bool y_free() const { return form == Form::abs_z || nu == 0.0; }
    double eval(double y, double z) const {
        return form == Form::linear ? mu * z + nu * y : kappa * std::abs(z);
    }
};

namespace detail {

/// The classical equation carries -int Z dW, so its Z is the negative of the
/// walk coefficient of the associated martingale part.
inline PointwiseGen lower_gdriver(const GDriver& g) {
    PointwiseGen pw;
    pw.uses_y = !g.y_free();
    pw.uses_zu = true;
    pw.f = [g](std::size_t, std::size_t, std::span<const double> y, std::span<const double> z,
               std::span<const double>, std::span<double> out) {
        out[0] = g.eval(y[0], -z[0]);
    };
    return pw;
}

} // namespace detail

/// E^g[xi | F_t0]: the start value of the solved driver equation, measurable
/// w.r.t. the start partition.
inline L0Value g_expectation(const GDriver& g, const L0Value& xi, const WalkBasis& basis,
                             double tol = 1e-11) {
    const SpacePtr& space = basis.space;
    GenContext ctx{&basis, g.start_index};
    PointwiseGen pw = detail::lower_gdriver(g);
    L0Value lip = L0Value::scalar_constant(space, g.lipschitz());
    SolveOutcome out = solve_bsde_zu(pw, lip, xi, ctx, tol);
    if (!out.report.converged)
        throw std::runtime_error("g_expectation: solver did not converge");
    return out.solution.Y.at(g.start_index);
}

struct RiskMeasureResult {
    L0Value value;                 // rho(xi) = E^g[-xi | F_t0]
    bool monotone_ok = true;
    double translation_defect = 0.0;
};

/// Conditional convex risk measure rho(xi) = E^g[-xi | F_t0] for a convex
/// z-only driver with g(., 0) = 0; monotonicity and conditional translation
/// invariance are probed on the given number of samples.
inline RiskMeasureResult g_risk_measure(const GDriver& g, const L0Value& xi,
                                        const WalkBasis& basis, double tol = 1e-11,
                                        int samples = 3, std::uint64_t seed = 1) {
    if (!g.y_free() || (g.form == GDriver::Form::linear && g.nu != 0.0))
        throw std::invalid_argument("g_risk_measure: driver must not depend on y");
    const SpacePtr& space = basis.space;
    const Partition& base = space->partition(g.start_index);

    RiskMeasureResult out{g_expectation(g, -1.0 * xi, basis, tol), true, 0.0};

    Rng rng(seed);
    for (int s = 0; s < samples; ++s) {
        // translation by a start-measurable amount moves the value one for one
        L0Value m = random_value(rng, space, base, 1, -1.0, 1.0);
        L0Value shifted = g_expectation(g, -1.0 * (xi + m), basis, tol);
        out.translation_defect =
            std::max(out.translation_defect, max_abs_diff(shifted, out.value - m));

        // monotonicity against a dominated terminal condition
        L0Value drop = random_value(rng, space, space->finest(), 1, 0.0, 1.0);
        L0Value lower_rho = g_expectation(g, -1.0 * (xi - drop), basis, tol);
        for (std::size_t a = 0; a < lower_rho.atom_count(); ++a)
            if (lower_rho.at(a) < out.value.at(a) - 1e-9) out.monotone_ok = false;
    }
    return out;
}

struct LipschitzEstimateReport {
    bool ok = true;
    double constant = 0.0;      // e^{8 (1 + C^2) (T - t0)}
    double worst_excess = 0.0;  // positive part of lhs - constant * rhs
};

/// Atomwise check of |E^g[xi1] - E^g[xi2]| against the a-priori constant
/// e^{8 (1 + C^2) (T - t0)} times the conditional 2-norm of xi1 - xi2.
inline LipschitzEstimateReport lipschitz_estimate_check(const GDriver& g, const L0Value& xi1,
                                                        const L0Value& xi2,
                                                        const WalkBasis& basis,
                                                        double tol = 1e-11) {
    const SpacePtr& space = basis.space;
    const double span_time = space->horizon() - space->time(g.start_index);
    const double C = g.lipschitz();
    LipschitzEstimateReport report;
    report.constant = std::exp(8.0 * (1.0 + C * C) * span_time);

    L0Value lhs = (g_expectation(g, xi1, basis, tol) - g_expectation(g, xi2, basis, tol))
                      .map_scalar([](double v) { return std::abs(v); });
    CondNorm two(2.0, space->partition(g.start_index), space);
    L0Value rhs = cond_norm(xi1 - xi2, two);
    for (std::size_t a = 0; a < lhs.atom_count(); ++a)
        report.worst_excess =
            std::max(report.worst_excess, lhs.at(a) - report.constant * rhs.at(a));
    report.ok = report.worst_excess <= 1e-10;
    return report;
}

struct GStabilityReport {
    bool ok = true;
    double worst = 0.0;
};

/// Stability of the g-expectation under gluing along start-measurable
/// blocks: E^g[sum I_{A_n} xi_n] = sum I_{A_n} E^g[xi_n].
inline GStabilityReport g_stability_check(const GDriver& g, const EventPartition& parts,
                                          std::span<const L0Value> xis, const WalkBasis& basis,
                                          double tol = 1e-9) {
    if (parts.block_count() != xis.size())
        throw std::invalid_argument("g_stability_check: one terminal value per block");
    const Partition& base = basis.space->partition(g.start_index);
    if (!base.refines(parts))
        throw std::invalid_argument("g_stability_check: blocks must be start-measurable");
    std::vector<ConcatPart> glue;
    for (std::size_t b = 0; b < parts.block_count(); ++b)
        glue.push_back({parts.block(b), xis[b]});
    L0Value lhs = g_expectation(g, concatenate(glue), basis);

    std::vector<L0Value> pieces;
    for (std::size_t b = 0; b < parts.block_count(); ++b)
        pieces.push_back(g_expectation(g, xis[b], basis));
    L0Value rhs = concatenate(parts, pieces);

    GStabilityReport report;
    report.worst = max_abs_diff(lhs, rhs);
    report.ok = report.worst <= tol;
    return report;
}

} // namespace bselab
