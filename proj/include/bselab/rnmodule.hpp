#pragma once

// Conditional L^p norms turning finite modules over L0 of the base partition
// into random normed modules, the fixed-point engine for self-maps whose
// random-index iterate contracts, and nondiametral-midpoint witnesses for
// normal structure.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bselab/l0algebra.hpp"
#include "bselab/probspace.hpp"

namespace bselab {

inline constexpr double kInfP = std::numeric_limits<double>::infinity();

// ============================================================================
// Conditional norm
// ============================================================================

/// Conditional p-norm descriptor: (E[|x|^p | base])^(1/p), with the per-block
/// maximum for p = infinity. Requires p > 1.
struct CondNorm {
    double p = 2.0;
    Partition base;
    SpacePtr space;

    CondNorm() = default;
    CondNorm(double p_, Partition base_, SpacePtr space_)
        : p(p_), base(std::move(base_)), space(std::move(space_)) {
        if (!(p > 1.0)) throw std::invalid_argument("CondNorm: p must be > 1");
    }
};

inline CondNorm make_norm(const SpacePtr& space, double p, std::size_t base_index = 0) {
    return CondNorm(p, space->partition(base_index), space);
}

/// Conditional p-norm of x as a base-measurable scalar.
inline L0Value cond_norm(const L0Value& x, const CondNorm& norm) {
    if (!(norm.p > 1.0)) throw std::invalid_argument("cond_norm: p must be > 1");
    if (x.space() != norm.space)
        throw std::invalid_argument("cond_norm: value not on the norm's space");
    const auto& space = *norm.space;
    const std::size_t n = space.atom_count();
    std::vector<double> data(n);
    for (std::size_t b = 0; b < norm.base.block_count(); ++b) {
        const auto& block = norm.base.block(b);
        double out;
        if (norm.p == kInfP) {
            out = 0.0;
            for (std::size_t atom : block) {
                double abs2 = 0.0;
                for (std::size_t c = 0; c < x.dim(); ++c) abs2 += x.at(atom, c) * x.at(atom, c);
                out = std::max(out, std::sqrt(abs2));
            }
        } else {
            double mass = 0.0, acc = 0.0;
            for (std::size_t atom : block) {
                const double w = space.weight(atom);
                double abs2 = 0.0;
                for (std::size_t c = 0; c < x.dim(); ++c) abs2 += x.at(atom, c) * x.at(atom, c);
                mass += w;
                acc += w * std::pow(std::sqrt(abs2), norm.p);
            }
            out = std::pow(acc / mass, 1.0 / norm.p);
        }
        for (std::size_t atom : block) data[atom] = out;
    }
    return L0Value(norm.space, 1, std::move(data), norm.base);
}

// ============================================================================
// Axiom check
// ============================================================================

struct AxiomSample {
    L0Value x;
    L0Value y;
    L0Value factor; // scalar, base-measurable
};

struct AxiomReport {
    bool ok = true;
    double worst_definite = 0.0;   // |x| vs ||x|| = 0 coupling
    double worst_homogeneity = 0.0;
    double worst_triangle = 0.0;   // positive part of ||x+y|| - ||x|| - ||y||
};

/// Verifies the three random-norm axioms on the given samples, atomwise to
/// `tol`: definiteness (zero norm forces the zero value), homogeneity under
/// base-measurable scalars, and the triangle inequality.
inline AxiomReport rnm_axiom_check(const CondNorm& norm, std::span<const AxiomSample> samples,
                                   double tol = 1e-10) {
    AxiomReport report;
    for (const auto& s : samples) {
        L0Value nx = cond_norm(s.x, norm);
        for (std::size_t b = 0; b < norm.base.block_count(); ++b) {
            const auto& block = norm.base.block(b);
            if (nx.at(block.front()) <= tol) {
                double val = 0.0;
                for (std::size_t atom : block)
                    for (std::size_t c = 0; c < s.x.dim(); ++c)
                        val = std::max(val, std::abs(s.x.at(atom, c)));
                report.worst_definite = std::max(report.worst_definite, val);
            }
        }
        if (!is_measurable(s.factor, norm.base))
            throw std::invalid_argument("rnm_axiom_check: factor not base-measurable");
        L0Value lhs = cond_norm(s.x.scaled_by(s.factor), norm);
        L0Value rhs = cond_norm(s.x, norm).scaled_by(s.factor.map_scalar([](double v) { return std::abs(v); }));
        report.worst_homogeneity = std::max(report.worst_homogeneity, max_abs_diff(lhs, rhs));

        L0Value nsum = cond_norm(s.x + s.y, norm);
        L0Value bound = cond_norm(s.x, norm) + cond_norm(s.y, norm);
        for (std::size_t a = 0; a < nsum.atom_count(); ++a)
            report.worst_triangle = std::max(report.worst_triangle, nsum.at(a) - bound.at(a));
    }
    report.ok = report.worst_definite <= tol && report.worst_homogeneity <= tol &&
                report.worst_triangle <= tol;
    return report;
}

// ============================================================================
// Random iteration count and fixed-point engine
// ============================================================================

/// A positive integer-valued iteration count, constant on base blocks.
struct RandomIterCount {
    Partition base;
    std::vector<int> per_atom;

    static RandomIterCount uniform(const Partition& base, int k = 1) {
        if (k < 1) throw std::invalid_argument("RandomIterCount: count must be >= 1");
        return RandomIterCount{base, std::vector<int>(base.atom_count(), k)};
    }

    static RandomIterCount per_block(const Partition& base, std::span<const int> counts) {
        if (counts.size() != base.block_count())
            throw std::invalid_argument("RandomIterCount: one count per base block required");
        std::vector<int> atoms(base.atom_count());
        for (std::size_t b = 0; b < base.block_count(); ++b) {
            if (counts[b] < 1)
                throw std::invalid_argument("RandomIterCount: count must be >= 1");
            for (std::size_t atom : base.block(b)) atoms[atom] = counts[b];
        }
        return RandomIterCount{base, std::move(atoms)};
    }

    int max_count() const {
        int m = 1;
        for (int k : per_atom) m = std::max(m, k);
        return m;
    }

    void validate() const {
        for (const auto& block : base.blocks()) {
            const int lead = per_atom.at(block.front());
            if (lead < 1) throw std::invalid_argument("RandomIterCount: count must be >= 1");
            for (std::size_t atom : block)
                if (per_atom.at(atom) != lead)
                    throw std::invalid_argument("RandomIterCount: not constant on base blocks");
        }
    }
};

/// Iteration trace of a fixed-point run.
struct SolveReport {
    bool converged = false;
    std::string status;                      // converged / max-iterations / diverged
    int outer_iterations = 0;
    std::vector<double> step_residuals;      // worst block, per outer step
    std::vector<double> block_final_residual;
    std::vector<double> block_max_ratio;     // observed step-to-step contraction
    std::vector<int> block_iter_count;       // iteration count used per block
    bool ratio_violation = false;            // observed ratio above bound + slack
    bool ratio_above_one = false;            // some block expanded on some step
    std::vector<double> block_ratio_bound;
};

namespace detail {

inline std::vector<double> per_block(const L0Value& scalar, const Partition& base) {
    std::vector<double> out(base.block_count());
    for (std::size_t b = 0; b < base.block_count(); ++b)
        out[b] = scalar.at(base.block(b).front());
    return out;
}

} // namespace detail

/// Fixed-point engine for a stable self-map whose L-indexed iterate is a
/// random contraction: iterates x <- T^(L)(x), where T^(L) glues the k-th
/// iterates of T along the blocks (L = k), until T itself has residual at
/// most tol on every base block.
///
/// `dist(a, b)` must return a base-measurable scalar distance and `glue`
/// must assemble one element from per-block choices among the iterates.
/// `contraction` is the asserted per-block factor (< 1); observed ratios
/// above it plus `ratio_slack` are flagged in the report while iteration
/// continues, and sustained growth aborts with status "diverged". Ratios are
/// only counted while the step size sits above the rounding floor (10 tol).
template <class X, class MapFn, class DistFn, class GlueFn>
std::pair<X, SolveReport> fixed_point_random_contraction(
    MapFn&& map, const RandomIterCount& L, const L0Value& contraction, X x0,
    DistFn&& dist, GlueFn&& glue, double tol, int max_outer,
    double ratio_slack = 0.05) {
    L.validate();
    for (std::size_t a = 0; a < contraction.atom_count(); ++a)
        if (!(contraction.at(a) < 1.0))
            throw std::invalid_argument(
                "fixed_point_random_contraction: contraction factor must be < 1 on Omega");

    const Partition& base = L.base;
    SolveReport report;
    report.block_iter_count.resize(base.block_count());
    for (std::size_t b = 0; b < base.block_count(); ++b)
        report.block_iter_count[b] = L.per_atom[base.block(b).front()];
    report.block_ratio_bound = detail::per_block(contraction, base);
    report.block_max_ratio.assign(base.block_count(), 0.0);

    const int kmax = L.max_count();
    X x = std::move(x0);
    std::vector<double> prev_step(base.block_count(),
                                  std::numeric_limits<double>::quiet_NaN());
    int growth_streak = 0;

    for (int outer = 0; outer < max_outer; ++outer) {
        // Iterates y_k = T^(k)(x); y_1 doubles as the single-application
        // residual probe for the termination test.
        std::vector<X> iterates;
        iterates.reserve(static_cast<std::size_t>(kmax));
        iterates.push_back(map(x));

        L0Value probe = dist(iterates.front(), x);
        std::vector<double> probe_blocks = detail::per_block(probe, base);
        double worst = 0.0;
        for (double v : probe_blocks) worst = std::max(worst, v);
        if (worst <= tol) {
            report.converged = true;
            report.status = "converged";
            report.outer_iterations = outer;
            report.block_final_residual = std::move(probe_blocks);
            return {std::move(x), std::move(report)};
        }

        for (int k = 1; k < kmax; ++k) iterates.push_back(map(iterates.back()));
        X next = glue(iterates, L);

        L0Value step = dist(next, x);
        std::vector<double> step_blocks = detail::per_block(step, base);
        double step_worst = 0.0;
        bool grew = false;
        for (std::size_t b = 0; b < base.block_count(); ++b) {
            step_worst = std::max(step_worst, step_blocks[b]);
            if (!std::isnan(prev_step[b]) && prev_step[b] > 10.0 * tol) {
                const double ratio = step_blocks[b] / prev_step[b];
                report.block_max_ratio[b] = std::max(report.block_max_ratio[b], ratio);
                if (ratio > report.block_ratio_bound[b] + ratio_slack) report.ratio_violation = true;
                if (ratio > 1.0) {
                    report.ratio_above_one = true;
                    grew = true;
                }
            }
        }
        report.step_residuals.push_back(step_worst);
        growth_streak = grew ? growth_streak + 1 : 0;
        prev_step = std::move(step_blocks);
        x = std::move(next);
        report.outer_iterations = outer + 1;

        if (growth_streak >= 25) {
            report.status = "diverged";
            report.block_final_residual = prev_step;
            return {std::move(x), std::move(report)};
        }
    }
    report.status = "max-iterations";
    report.block_final_residual = prev_step;
    return {std::move(x), std::move(report)};
}

/// L0Value instantiation: glue by per-atom selection of the L-th iterate.
inline std::pair<L0Value, SolveReport> fixed_point_random_contraction(
    const std::function<L0Value(const L0Value&)>& map, const RandomIterCount& L,
    const L0Value& contraction, const L0Value& x0, const CondNorm& norm, double tol,
    int max_outer, double ratio_slack = 0.05) {
    auto dist = [&norm](const L0Value& a, const L0Value& b) { return cond_norm(a - b, norm); };
    auto glue = [](const std::vector<L0Value>& iterates, const RandomIterCount& counts) {
        const L0Value& first = iterates.front();
        const std::size_t d = first.dim();
        std::vector<double> data(first.atom_count() * d);
        Partition meas = counts.base;
        for (const auto& it : iterates) meas = Partition::join(meas, it.meas());
        for (std::size_t a = 0; a < first.atom_count(); ++a) {
            const auto& pick = iterates.at(static_cast<std::size_t>(counts.per_atom[a] - 1));
            for (std::size_t c = 0; c < d; ++c) data[a * d + c] = pick.at(a, c);
        }
        return L0Value(first.space(), d, std::move(data), std::move(meas));
    };
    return fixed_point_random_contraction(map, L, contraction, x0, dist, glue, tol, max_outer,
                                          ratio_slack);
}

// ============================================================================
// Random diameter and nondiametral midpoints
// ============================================================================

/// Per-atom diameter of a finite generator family: the maximum Euclidean
/// distance between two generator values at each atom.
inline L0Value random_diameter(std::span<const L0Value> generators) {
    if (generators.empty()) throw std::invalid_argument("random_diameter: empty family");
    const L0Value& first = generators.front();
    std::vector<double> data(first.atom_count(), 0.0);
    Partition meas = first.meas();
    for (const auto& g : generators) meas = Partition::join(meas, g.meas());
    for (std::size_t i = 0; i < generators.size(); ++i) {
        for (std::size_t j = i + 1; j < generators.size(); ++j) {
            L0Value diff = (generators[i] - generators[j]).euclidean();
            for (std::size_t a = 0; a < diff.atom_count(); ++a)
                data[a] = std::max(data[a], diff.at(a));
        }
    }
    return L0Value(first.space(), 1, std::move(data), std::move(meas));
}

struct MidpointWitness {
    L0Value point;            // midpoint of the selected extreme pair
    L0Value margin;           // diameter minus the sup of distances to the point
    L0Value diameter;         // conditional-norm diameter of the family
    std::size_t pair_first = 0;
    std::size_t pair_second = 0; // selected pair on the first base block
    bool positive_on_support = true;
};

/// Constructive normal-structure witness for the conditional L^p module,
/// p in (1, inf): per base block, select the generator pair of maximal
/// conditional norm distance (lexicographically smallest on ties), glue the
/// pair midpoints along the blocks, and report the margin
///   D - sup_h ||| z - h |||_p,
/// which uniform convexity of L^p makes strictly positive wherever D > 0.
inline MidpointWitness nondiametral_midpoint(std::span<const L0Value> generators,
                                             const CondNorm& norm) {
    if (generators.size() < 2)
        throw std::invalid_argument("nondiametral_midpoint: need at least two generators");
    if (norm.p == kInfP)
        throw std::invalid_argument("nondiametral_midpoint: requires p in (1, inf)");

    std::vector<L0Value> pair_norms;
    std::vector<std::pair<std::size_t, std::size_t>> pair_index;
    for (std::size_t i = 0; i < generators.size(); ++i)
        for (std::size_t j = i + 1; j < generators.size(); ++j) {
            pair_norms.push_back(cond_norm(generators[i] - generators[j], norm));
            pair_index.emplace_back(i, j);
        }

    L0Value diameter = l0_sup(pair_norms);
    // eps = D/2 where the diameter is positive; sup-witness selection needs a
    // strictly positive eps, so degenerate blocks use a unit placeholder.
    L0Value eps = diameter.map_scalar([](double d) { return d > 0.0 ? d / 2.0 : 1.0; });
    SupWitness sel = stable_sup_witness(pair_norms, eps);

    const std::size_t n = diameter.atom_count();
    const std::size_t d = generators.front().dim();
    std::vector<double> mid(n * d);
    Partition meas = norm.base;
    for (const auto& g : generators) meas = Partition::join(meas, g.meas());
    for (std::size_t a = 0; a < n; ++a) {
        const auto [i, j] = pair_index[sel.selection[a]];
        for (std::size_t c = 0; c < d; ++c)
            mid[a * d + c] = 0.5 * (generators[i].at(a, c) + generators[j].at(a, c));
    }
    L0Value z(generators.front().space(), d, std::move(mid), std::move(meas));

    std::vector<L0Value> dists;
    dists.reserve(generators.size());
    for (const auto& g : generators) dists.push_back(cond_norm(z - g, norm));
    L0Value reach = l0_sup(dists);
    L0Value margin = diameter - reach;

    MidpointWitness out{z, margin, diameter, pair_index[sel.selection[0]].first,
                        pair_index[sel.selection[0]].second, true};
    for (std::size_t a = 0; a < n; ++a)
        if (diameter.at(a) > 0.0 && !(margin.at(a) > 0.0)) out.positive_on_support = false;
    return out;
}

} // namespace bselab
