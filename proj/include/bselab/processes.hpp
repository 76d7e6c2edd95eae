#pragma once

// Discrete-time adapted processes over a filtered space, generalized
// martingales, conditional S^p norms, the conditional Doob inequality check,
// and the per-node least-squares decomposition of a martingale against walk
// and compensated-jump drivers, with its conditional isometry.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "bselab/l0algebra.hpp"
#include "bselab/probspace.hpp"
#include "bselab/rnmodule.hpp"

namespace bselab {

// ============================================================================
// AdaptedProcess
// ============================================================================

/// A time-indexed family of L0 values, one per grid time in [start, N], with
/// values[k] measurable w.r.t. the filtration at time k. `start` supports an
/// intermediate initial time.
class AdaptedProcess {
public:
    AdaptedProcess() = default;

    AdaptedProcess(SpacePtr space, std::size_t start, std::vector<L0Value> values)
        : space_(std::move(space)), start_(start), values_(std::move(values)) {
        if (!space_) throw std::invalid_argument("AdaptedProcess: null space");
        const std::size_t last = space_->step_count();
        if (start_ > last || values_.size() != last - start_ + 1)
            throw std::invalid_argument("AdaptedProcess: one value per grid time required");
        dim_ = values_.front().dim();
        for (std::size_t k = start_; k <= last; ++k) {
            const L0Value& v = values_[k - start_];
            if (v.space() != space_)
                throw std::invalid_argument("AdaptedProcess: value on a different space");
            if (v.dim() != dim_) throw std::invalid_argument("AdaptedProcess: mixed dimensions");
            if (!is_measurable(v, space_->partition(k)))
                throw std::invalid_argument("AdaptedProcess: value not adapted at its time");
        }
    }

    static AdaptedProcess constant(SpacePtr space, const L0Value& v, std::size_t start = 0) {
        std::vector<L0Value> values(space->step_count() - start + 1, v);
        return AdaptedProcess(std::move(space), start, std::move(values));
    }

    const SpacePtr& space() const { return space_; }
    std::size_t start() const { return start_; }
    std::size_t last() const { return space_->step_count(); }
    std::size_t dim() const { return dim_; }
    const L0Value& at(std::size_t k) const { return values_.at(k - start_); }
    const L0Value& terminal() const { return values_.back(); }
    const L0Value& initial() const { return values_.front(); }

    friend AdaptedProcess operator+(const AdaptedProcess& a, const AdaptedProcess& b) {
        return zip(a, b, [](const L0Value& x, const L0Value& y) { return x + y; });
    }
    friend AdaptedProcess operator-(const AdaptedProcess& a, const AdaptedProcess& b) {
        return zip(a, b, [](const L0Value& x, const L0Value& y) { return x - y; });
    }
    friend AdaptedProcess operator*(double s, const AdaptedProcess& p) {
        std::vector<L0Value> values;
        values.reserve(p.values_.size());
        for (const auto& v : p.values_) values.push_back(s * v);
        return AdaptedProcess(p.space_, p.start_, std::move(values));
    }

    AdaptedProcess scaled_by(const L0Value& factor) const {
        std::vector<L0Value> values;
        values.reserve(values_.size());
        for (const auto& v : values_) values.push_back(v.scaled_by(factor));
        return AdaptedProcess(space_, start_, std::move(values));
    }

private:
    template <class Fn>
    static AdaptedProcess zip(const AdaptedProcess& a, const AdaptedProcess& b, Fn&& f) {
        if (a.space_ != b.space_ || a.start_ != b.start_)
            throw std::invalid_argument("AdaptedProcess: shape mismatch");
        std::vector<L0Value> values;
        values.reserve(a.values_.size());
        for (std::size_t i = 0; i < a.values_.size(); ++i)
            values.push_back(f(a.values_[i], b.values_[i]));
        return AdaptedProcess(a.space_, a.start_, std::move(values));
    }

    SpacePtr space_;
    std::size_t start_ = 0;
    std::size_t dim_ = 0;
    std::vector<L0Value> values_;
};

inline double max_abs_diff(const AdaptedProcess& a, const AdaptedProcess& b) {
    double m = 0.0;
    for (std::size_t k = a.start(); k <= a.last(); ++k)
        m = std::max(m, max_abs_diff(a.at(k), b.at(k)));
    return m;
}

// ============================================================================
// MartingaleProcess
// ============================================================================

inline double martingale_defect(const AdaptedProcess& p) {
    double worst = 0.0;
    for (std::size_t k = p.start(); k < p.last(); ++k)
        worst = std::max(worst,
                         max_abs_diff(cond_expect(p.at(k + 1), p.space()->partition(k)), p.at(k)));
    return worst;
}

/// An adapted process satisfying the generalized martingale identity
/// E[X_{k+1} | F_k] = X_k, validated to 1e-12 at construction.
class MartingaleProcess {
public:
    MartingaleProcess() = default;

    explicit MartingaleProcess(AdaptedProcess process, double tol = 1e-12)
        : process_(std::move(process)) {
        if (martingale_defect(process_) > tol)
            throw std::invalid_argument("MartingaleProcess: martingale identity fails");
    }

    const AdaptedProcess& process() const { return process_; }
    operator const AdaptedProcess&() const { return process_; }

    const SpacePtr& space() const { return process_.space(); }
    std::size_t start() const { return process_.start(); }
    std::size_t last() const { return process_.last(); }
    std::size_t dim() const { return process_.dim(); }
    const L0Value& at(std::size_t k) const { return process_.at(k); }
    const L0Value& terminal() const { return process_.terminal(); }

    MartingaleProcess scaled_by(const L0Value& factor) const {
        if (!is_measurable(factor, space()->partition(start())))
            throw std::invalid_argument("MartingaleProcess: factor must be start-measurable");
        return MartingaleProcess(process_.scaled_by(factor));
    }

    friend MartingaleProcess operator-(const MartingaleProcess& a, const MartingaleProcess& b) {
        return MartingaleProcess(a.process_ - b.process_);
    }

private:
    AdaptedProcess process_;
};

// ============================================================================
// Norms and basic constructions
// ============================================================================

/// Running per-atom maximum of |Y_t| over the grid, as a scalar L0 value.
inline L0Value running_max_abs(const AdaptedProcess& Y) {
    std::vector<L0Value> abs_values;
    abs_values.reserve(Y.last() - Y.start() + 1);
    for (std::size_t k = Y.start(); k <= Y.last(); ++k)
        abs_values.push_back(Y.at(k).euclidean());
    return l0_sup(abs_values);
}

/// Conditional S^p norm: cond_norm of the pathwise running max.
inline L0Value sp_norm(const AdaptedProcess& Y, const CondNorm& norm) {
    return cond_norm(running_max_abs(Y), norm);
}

/// Cumulative stochastic integral sum_{s<t} C_s dD_s as a martingale;
/// coeffs[k - start] must be measurable at time k (predictable use on the
/// step k -> k+1).
inline MartingaleProcess stochastic_integral(std::span<const L0Value> coeffs,
                                             const MartingaleProcess& driver,
                                             std::size_t start = 0) {
    const SpacePtr& space = driver.space();
    if (coeffs.size() != space->step_count() - start)
        throw std::invalid_argument("stochastic_integral: one coefficient per step required");
    std::vector<L0Value> values;
    const std::size_t d = coeffs.empty() ? 1 : coeffs.front().dim();
    values.push_back(L0Value::zero(space, d).with_meas(space->partition(start)));
    L0Value acc = values.front();
    for (std::size_t k = start; k < space->step_count(); ++k) {
        if (!is_measurable(coeffs[k - start], space->partition(k)))
            throw std::invalid_argument("stochastic_integral: coefficient not predictable");
        L0Value inc = driver.at(k + 1) - driver.at(k);
        acc = acc + coeffs[k - start].scaled_by(inc);
        values.push_back(acc.with_meas(space->partition(k + 1)));
    }
    return MartingaleProcess(AdaptedProcess(space, start, std::move(values)));
}

/// The martingale M_t = E_base(V) - E_t(V) (start value 0, terminal
/// E_base(V) - V).
inline MartingaleProcess martingale_from_terminal(const L0Value& V, std::size_t base_index = 0) {
    const SpacePtr& space = V.space();
    L0Value head = cond_expect(V, space->partition(base_index));
    std::vector<L0Value> values;
    values.reserve(space->step_count() - base_index + 1);
    for (std::size_t k = base_index; k <= space->step_count(); ++k)
        values.push_back(head - cond_expect(V, space->partition(k)));
    return MartingaleProcess(AdaptedProcess(space, base_index, std::move(values)));
}

// ============================================================================
// Conditional Doob inequality
// ============================================================================

struct DoobReport {
    bool ok = true;
    double worst_excess = 0.0;       // positive part of |||M||| - C_p |||M_T|||
    double worst_gap = 0.0;          // |equality defect| for p = inf
};

/// Checks |||M|||_p <= p/(p-1) |||M_T|||_p atomwise; for p = inf checks the
/// equality of block maxima in both directions.
inline DoobReport doob_check(const MartingaleProcess& M, const CondNorm& norm,
                             double tol = 1e-10) {
    DoobReport report;
    L0Value lhs = sp_norm(M, norm);
    L0Value rhs = cond_norm(M.terminal(), norm);
    if (norm.p == kInfP) {
        report.worst_gap = max_abs_diff(lhs, rhs);
        report.ok = report.worst_gap <= tol;
        return report;
    }
    const double cp = norm.p / (norm.p - 1.0);
    for (std::size_t a = 0; a < lhs.atom_count(); ++a) {
        const double excess = lhs.at(a) - cp * rhs.at(a);
        report.worst_excess = std::max(report.worst_excess, excess);
    }
    report.ok = report.worst_excess <= tol;
    return report;
}

// ============================================================================
// Walk bases
// ============================================================================

/// Recipe for a scenario tree carrying a symmetric random walk: per node the
/// two walk branches move +-sqrt(dt); optional mark branches (one per mark,
/// walk frozen there) carry compensated-indicator jump drivers; optional
/// excess branches carry no driver, so their randomness lands in the
/// orthogonal remainder of decompositions.
struct WalkSpec {
    std::size_t steps = 1;
    double horizon = 1.0;
    std::vector<double> mark_probs;  // per-mark branch probability
    std::size_t excess_branches = 0;
    double excess_prob = 0.05;       // probability per excess branch
};

/// A space together with its driver basis.
struct WalkBasis {
    SpacePtr space;
    MartingaleProcess walk;                  // W
    std::vector<MartingaleProcess> jumps;    // compensated indicators per mark
    std::size_t branches = 2;
    std::size_t mark_count = 0;

    std::vector<const MartingaleProcess*> drivers() const {
        std::vector<const MartingaleProcess*> out;
        out.push_back(&walk);
        for (const auto& j : jumps) out.push_back(&j);
        return out;
    }
};

inline WalkBasis build_walk_basis(const WalkSpec& spec) {
    const std::size_t m = spec.mark_probs.size();
    const std::size_t branches = 2 + m + spec.excess_branches;
    double side = 0.0;
    for (double p : spec.mark_probs) {
        if (!(p > 0.0)) throw std::invalid_argument("build_walk_basis: mark probability <= 0");
        side += p;
    }
    side += spec.excess_prob * static_cast<double>(spec.excess_branches);
    if (!(side < 1.0))
        throw std::invalid_argument("build_walk_basis: branch probabilities exceed 1");
    const double half = (1.0 - side) / 2.0;

    std::vector<double> edge(branches);
    edge[0] = half;
    edge[1] = half;
    for (std::size_t i = 0; i < m; ++i) edge[2 + i] = spec.mark_probs[i];
    for (std::size_t e = 0; e < spec.excess_branches; ++e) edge[2 + m + e] = spec.excess_prob;

    std::vector<std::size_t> branching(spec.steps, branches);
    std::vector<std::vector<double>> probs(spec.steps, edge);
    SpacePtr space = build_space(branching, probs, spec.horizon);
    const double sdt = std::sqrt(space->dt());

    // Per-branch walk increment; excess branches get a mean-zero offset
    // pattern so they add genuine randomness without touching the drivers.
    std::vector<double> walk_step(branches, 0.0);
    walk_step[0] = sdt;
    walk_step[1] = -sdt;

    const std::size_t atoms = space->atom_count();
    auto branch_at = [&](std::size_t atom, std::size_t step) {
        std::size_t suffix = atoms;
        for (std::size_t k = 0; k <= step; ++k) suffix /= branches;
        std::size_t scale = suffix * branches;
        return (atom % scale) / suffix;
    };

    auto cumulative = [&](const std::vector<double>& per_branch) {
        std::vector<L0Value> values;
        values.reserve(spec.steps + 1);
        std::vector<double> acc(atoms, 0.0);
        values.push_back(L0Value(space, 1, acc, Partition::trivial(atoms)));
        for (std::size_t k = 0; k < spec.steps; ++k) {
            for (std::size_t a = 0; a < atoms; ++a) acc[a] += per_branch[branch_at(a, k)];
            values.push_back(L0Value(space, 1, acc, space->partition(k + 1)));
        }
        return MartingaleProcess(AdaptedProcess(space, 0, std::move(values)));
    };

    WalkBasis basis;
    basis.branches = branches;
    basis.mark_count = m;
    basis.space = space;
    basis.walk = cumulative(walk_step);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> jump_step(branches, -edge[2 + i]); // compensator
        jump_step[2 + i] += 1.0;
        basis.jumps.push_back(cumulative(jump_step));
    }
    return basis;
}

/// An extra mean-zero process supported on the excess branches of a walk
/// basis, orthogonalized per node against every driver increment; its
/// cumulative sums exercise a nonzero decomposition remainder.
inline std::optional<MartingaleProcess> excess_noise(const WalkBasis& basis, double amplitude) {
    const std::size_t excess = basis.branches - 2 - basis.mark_count;
    if (excess == 0) return std::nullopt;
    const SpacePtr& space = basis.space;
    const std::size_t atoms = space->atom_count();
    const std::size_t steps = space->step_count();
    const std::size_t nbr = basis.branches;

    auto branch_at = [&](std::size_t atom, std::size_t step) {
        std::size_t suffix = atoms;
        for (std::size_t k = 0; k <= step; ++k) suffix /= nbr;
        std::size_t scale = suffix * nbr;
        return (atom % scale) / suffix;
    };

    // Edge probabilities and per-branch driver increments are the same at
    // every node; read both off the root's children (level-1 blocks are the
    // branches in order).
    std::vector<double> q(nbr);
    for (std::size_t j = 0; j < nbr; ++j) q[j] = space->block_weight(space->partition(1), j);
    auto pattern_of = [&](const MartingaleProcess& drv) {
        std::vector<double> pat(nbr);
        for (std::size_t j = 0; j < nbr; ++j) {
            const std::size_t lead = space->partition(1).block(j).front();
            pat[j] = drv.at(1).at(lead) - drv.at(0).at(lead);
        }
        return pat;
    };
    auto dot = [&](const std::vector<double>& u, const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t j = 0; j < nbr; ++j) s += q[j] * u[j] * v[j];
        return s;
    };

    // Gram-Schmidt: seed with the indicator of the first excess branch and
    // project out the constants and every driver pattern.
    std::vector<std::vector<double>> against;
    against.push_back(std::vector<double>(nbr, 1.0));
    against.push_back(pattern_of(basis.walk));
    for (const auto& j : basis.jumps) against.push_back(pattern_of(j));
    std::vector<double> u(nbr, 0.0);
    u[2 + basis.mark_count] = 1.0;
    for (const auto& v : against) {
        const double denom = dot(v, v);
        if (denom <= 0.0) continue;
        const double f = dot(u, v) / denom;
        for (std::size_t j = 0; j < nbr; ++j) u[j] -= f * v[j];
    }
    const double scale = std::sqrt(dot(u, u));
    if (scale < 1e-12) return std::nullopt;
    for (double& v : u) v *= amplitude / scale;

    std::vector<L0Value> values;
    std::vector<double> acc(atoms, 0.0);
    values.push_back(L0Value(space, 1, acc, Partition::trivial(atoms)));
    for (std::size_t k = 0; k < steps; ++k) {
        for (std::size_t a = 0; a < atoms; ++a) acc[a] += u[branch_at(a, k)];
        values.push_back(L0Value(space, 1, acc, space->partition(k + 1)));
    }
    return MartingaleProcess(AdaptedProcess(space, 0, std::move(values)), 1e-10);
}

// ============================================================================
// Martingale decomposition
// ============================================================================

/// Predictable coefficients of a martingale against a driver list, plus the
/// strongly orthogonal remainder: at each node the coefficients are the
/// least-squares projection of the martingale increment onto the span of the
/// driver increments under the node-conditional inner product.
struct Decomposition {
    std::vector<std::vector<L0Value>> coeffs; // [driver][step - start]
    MartingaleProcess remainder;              // K
    std::size_t start = 0;

    const L0Value& walk_coeff(std::size_t k) const { return coeffs.at(0).at(k - start); }
    const L0Value& jump_coeff(std::size_t mark, std::size_t k) const {
        return coeffs.at(1 + mark).at(k - start);
    }
};

namespace detail {

/// Solves the small symmetric system G c = b by Gaussian elimination with
/// partial pivoting; throws on (near-)singular G.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> G,
                                       std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(G[r][col]) > std::abs(G[piv][col])) piv = r;
        if (std::abs(G[piv][col]) < 1e-14)
            throw std::runtime_error("martingale_decompose: degenerate driver increments at a node");
        std::swap(G[piv], G[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = G[r][col] / G[col][col];
            for (std::size_t c = col; c < n; ++c) G[r][c] -= f * G[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= G[i][c] * x[c];
        x[i] = s / G[i][i];
    }
    return x;
}

} // namespace detail

inline Decomposition martingale_decompose(const MartingaleProcess& M,
                                          std::span<const MartingaleProcess* const> drivers) {
    if (drivers.empty()) throw std::invalid_argument("martingale_decompose: no drivers");
    const SpacePtr& space = M.space();
    const std::size_t start = M.start();
    const std::size_t d = M.dim();
    const std::size_t nd = drivers.size();
    for (const auto* drv : drivers) {
        if (drv->space() != space)
            throw std::invalid_argument("martingale_decompose: driver on a different space");
        if (drv->start() > start)
            throw std::invalid_argument("martingale_decompose: driver starts after the martingale");
        if (drv->dim() != 1)
            throw std::invalid_argument("martingale_decompose: drivers must be scalar");
    }

    std::vector<std::vector<L0Value>> coeffs(nd);
    std::vector<L0Value> K_values;
    K_values.push_back(L0Value::zero(space, d).with_meas(space->partition(start)));
    L0Value K_cum = K_values.front();

    for (std::size_t k = start; k < space->step_count(); ++k) {
        const Partition& now = space->partition(k);
        const Partition& next = space->partition(k + 1);
        L0Value dM = M.at(k + 1) - M.at(k);
        std::vector<L0Value> dD;
        dD.reserve(nd);
        for (const auto* drv : drivers) dD.push_back(drv->at(k + 1) - drv->at(k));

        std::vector<std::vector<double>> coeff_data(nd, std::vector<double>(space->atom_count() * d));
        for (std::size_t b = 0; b < now.block_count(); ++b) {
            const auto& node = now.block(b);
            double mass = 0.0;
            for (std::size_t atom : node) mass += space->weight(atom);
            std::vector<std::vector<double>> gram(nd, std::vector<double>(nd, 0.0));
            for (std::size_t i = 0; i < nd; ++i)
                for (std::size_t j = i; j < nd; ++j) {
                    double s = 0.0;
                    for (std::size_t atom : node)
                        s += space->weight(atom) * dD[i].at(atom) * dD[j].at(atom);
                    gram[i][j] = gram[j][i] = s / mass;
                }
            for (std::size_t c = 0; c < d; ++c) {
                std::vector<double> rhs(nd, 0.0);
                for (std::size_t i = 0; i < nd; ++i) {
                    double s = 0.0;
                    for (std::size_t atom : node)
                        s += space->weight(atom) * dD[i].at(atom) * dM.at(atom, c);
                    rhs[i] = s / mass;
                }
                std::vector<double> sol = detail::solve_dense(gram, rhs);
                for (std::size_t i = 0; i < nd; ++i)
                    for (std::size_t atom : node) coeff_data[i][atom * d + c] = sol[i];
            }
        }
        std::vector<double> K_step(space->atom_count() * d);
        for (std::size_t atom = 0; atom < space->atom_count(); ++atom)
            for (std::size_t c = 0; c < d; ++c) {
                double resid = dM.at(atom, c);
                for (std::size_t i = 0; i < nd; ++i)
                    resid -= coeff_data[i][atom * d + c] * dD[i].at(atom);
                K_step[atom * d + c] = resid;
            }
        for (std::size_t i = 0; i < nd; ++i)
            coeffs[i].push_back(L0Value(space, d, std::move(coeff_data[i]), now));
        K_cum = K_cum + L0Value(space, d, std::move(K_step), next);
        K_values.push_back(K_cum.with_meas(next));
    }

    Decomposition out;
    out.coeffs = std::move(coeffs);
    out.remainder = MartingaleProcess(AdaptedProcess(space, start, std::move(K_values)), 1e-9);
    out.start = start;
    return out;
}

inline Decomposition martingale_decompose(const MartingaleProcess& M, const WalkBasis& basis) {
    auto drv = basis.drivers();
    return martingale_decompose(M, drv);
}

/// Rebuilds sum_s Z_s dW_s + sum_s sum_x U_s(x) dN~_s(x) + K_t from a
/// decomposition.
inline AdaptedProcess reconstruct(const Decomposition& dec,
                                  std::span<const MartingaleProcess* const> drivers) {
    const SpacePtr& space = dec.remainder.space();
    const std::size_t start = dec.start;
    std::vector<L0Value> values;
    values.push_back(dec.remainder.at(start));
    L0Value acc = values.front();
    for (std::size_t k = start; k < space->step_count(); ++k) {
        for (std::size_t i = 0; i < drivers.size(); ++i) {
            L0Value dD = drivers[i]->at(k + 1) - drivers[i]->at(k);
            acc = acc + dec.coeffs[i][k - start].scaled_by(dD);
        }
        acc = acc + (dec.remainder.at(k + 1) - dec.remainder.at(k));
        values.push_back(acc.with_meas(space->partition(k + 1)));
    }
    return AdaptedProcess(space, start, std::move(values));
}

/// Per-step conditional variance of a driver increment, as the predictable
/// scalar E[(dD_k)^2 | F_k]; this is the discrete quadratic-variation weight
/// in the conditional isometry.
inline L0Value driver_step_variance(const MartingaleProcess& driver, std::size_t k) {
    L0Value inc = driver.at(k + 1) - driver.at(k);
    return cond_inner(inc, inc, driver.space()->partition(k));
}

/// Worst deviation in the conditional isometry
///   E[|M_t|^2 | base] = sum_{s<t} E[|Z_s|^2 vW_s | base]
///                     + sum_{s<t} sum_x E[|U_s(x)|^2 vN_s(x) | base]
///                     + E[|K_t|^2 | base]
/// over all grid times, where v* are the per-node driver increment
/// variances. Exact for pairwise node-orthogonal driver increments.
inline double isometry_defect(const MartingaleProcess& M,
                              std::span<const MartingaleProcess* const> drivers,
                              const Decomposition& dec, const Partition& base) {
    const SpacePtr& space = M.space();
    const std::size_t start = dec.start;
    double worst = 0.0;
    L0Value rhs_running = L0Value::scalar_constant(space, 0.0);
    for (std::size_t t = start; t <= space->step_count(); ++t) {
        if (t > start) {
            const std::size_t s = t - 1;
            for (std::size_t i = 0; i < drivers.size(); ++i) {
                L0Value var = driver_step_variance(*drivers[i], s);
                L0Value c2 = dec.coeffs[i][s - start].euclidean().map_scalar(
                    [](double v) { return v * v; });
                rhs_running = rhs_running + cond_expect(c2.scaled_by(var), base);
            }
        }
        L0Value lhs = cond_inner(M.at(t), M.at(t), base);
        L0Value k2 = cond_inner(dec.remainder.at(t), dec.remainder.at(t), base);
        worst = std::max(worst, max_abs_diff(lhs, rhs_running + k2));
    }
    return worst;
}

/// Worst conditional correlation between remainder increments and driver
/// increments (strong orthogonality in the node-conditional sense).
inline double remainder_orthogonality_defect(const Decomposition& dec,
                                             std::span<const MartingaleProcess* const> drivers) {
    const SpacePtr& space = dec.remainder.space();
    double worst = 0.0;
    for (std::size_t k = dec.start; k < space->step_count(); ++k) {
        L0Value dK = dec.remainder.at(k + 1) - dec.remainder.at(k);
        for (const auto* drv : drivers) {
            L0Value dD = drv->at(k + 1) - drv->at(k);
            for (std::size_t c = 0; c < dK.dim(); ++c) {
                std::vector<double> comp(space->atom_count());
                for (std::size_t a = 0; a < space->atom_count(); ++a)
                    comp[a] = dK.at(a, c);
                L0Value comp_val = L0Value::from_atoms(space, 1, std::move(comp));
                worst = std::max(worst,
                                 max_abs(cond_inner(comp_val, dD, space->partition(k))));
            }
        }
    }
    return worst;
}

// ============================================================================
// Conditional orthogonality and Fubini
// ============================================================================

struct OrthogonalityReport {
    bool ok = true;
    double worst_inner = 0.0;   // |(V - E0 V, E0 V)| under the conditional inner product
    double worst_norm_excess = 0.0; // positive part of |||V - E0V|||_2 - |||V|||_2
};

/// Checks that V - E[V|base] is conditionally orthogonal to E[V|base] and
/// that removing the conditional mean does not increase the 2-norm.
inline OrthogonalityReport cond_orthogonality_check(const L0Value& V, const Partition& base,
                                                    double tol = 1e-12) {
    OrthogonalityReport report;
    L0Value mean = cond_expect(V, base);
    L0Value centered = V - mean;
    report.worst_inner = max_abs(cond_inner(centered, mean, base));
    CondNorm two(2.0, base, V.space());
    L0Value n_centered = cond_norm(centered, two);
    L0Value n_full = cond_norm(V, two);
    for (std::size_t a = 0; a < n_full.atom_count(); ++a)
        report.worst_norm_excess =
            std::max(report.worst_norm_excess, n_centered.at(a) - n_full.at(a));
    report.ok = report.worst_inner <= tol && report.worst_norm_excess <= tol;
    return report;
}

struct FubiniReport {
    bool ok = true;
    double worst = 0.0;
};

/// Conditional Fubini over a finite mark space: E[sum_x f(.,x) mu_x | base]
/// versus sum_x E[f(.,x) | base] mu_x, computed as finite sums.
inline FubiniReport cond_fubini_check(const std::vector<L0Value>& f_by_mark,
                                      std::span<const double> mu, const Partition& base,
                                      double tol = 1e-12) {
    if (f_by_mark.size() != mu.size())
        throw std::invalid_argument("cond_fubini_check: one weight per mark required");
    FubiniReport report;
    if (f_by_mark.empty()) return report;
    L0Value mixed = L0Value::zero(f_by_mark.front().space(), f_by_mark.front().dim());
    L0Value swapped = mixed;
    for (std::size_t x = 0; x < mu.size(); ++x) {
        if (mu[x] < 0.0) throw std::invalid_argument("cond_fubini_check: negative mark weight");
        mixed = mixed + mu[x] * f_by_mark[x];
        swapped = swapped + mu[x] * cond_expect(f_by_mark[x], base);
    }
    report.worst = max_abs_diff(cond_expect(mixed, base), swapped);
    report.ok = report.worst <= tol;
    return report;
}

// ============================================================================
// Process restriction
// ============================================================================

inline AdaptedProcess restrict_process(const AdaptedProcess& p, const BlockRestriction& r) {
    std::vector<L0Value> values;
    values.reserve(p.last() - p.start() + 1);
    for (std::size_t k = p.start(); k <= p.last(); ++k)
        values.push_back(restrict_value(p.at(k), r));
    return AdaptedProcess(r.sub, p.start(), std::move(values));
}

/// Drops times before `start` and recenters so the start value is zero;
/// the result is a martingale from `start` on whenever the increments of p
/// beyond `start` have vanishing one-step conditional means.
inline MartingaleProcess rebase_martingale(const AdaptedProcess& p, std::size_t start) {
    if (start < p.start())
        throw std::invalid_argument("rebase_martingale: start before process start");
    std::vector<L0Value> values;
    for (std::size_t k = start; k <= p.last(); ++k)
        values.push_back((p.at(k) - p.at(start)).with_meas(p.space()->partition(k)));
    return MartingaleProcess(AdaptedProcess(p.space(), start, std::move(values)));
}

/// Restriction of a driver basis to one block alive at time `start`: driver
/// paths are cut to [start, N] and recentered, which keeps them martingales
/// on the sub-space.
inline WalkBasis restrict_basis(const WalkBasis& basis, const BlockRestriction& r,
                                std::size_t start = 0) {
    WalkBasis out;
    out.space = r.sub;
    out.branches = basis.branches;
    out.mark_count = basis.mark_count;
    out.walk = rebase_martingale(restrict_process(basis.walk, r), start);
    for (const auto& j : basis.jumps)
        out.jumps.push_back(rebase_martingale(restrict_process(j, r), start));
    return out;
}

} // namespace bselab
