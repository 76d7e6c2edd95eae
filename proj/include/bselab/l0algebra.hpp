#pragma once

// Lattice and stability operations on L0: pointwise suprema and infima,
// concatenation of values along event partitions, sup witnesses attaining
// the supremum up to an epsilon, and a numerical check that a map commutes
// with concatenation.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bselab/probspace.hpp"

namespace bselab {

/// A partition of the atom set into measurable events; blocks are typically
/// unions of blocks of the base partition.
using EventPartition = Partition;

// ============================================================================
// Lattice operations
// ============================================================================

/// Pointwise maximum of a nonempty family of scalar values. The declared
/// measurability is the join of the inputs'.
inline L0Value l0_sup(std::span<const L0Value> family) {
    if (family.empty()) throw std::invalid_argument("l0_sup: empty family");
    L0Value acc = family.front();
    for (std::size_t i = 1; i < family.size(); ++i) {
        const L0Value& x = family[i];
        L0Value::require_same_space(acc, x);
        if (!x.scalar() || !acc.scalar())
            throw std::invalid_argument("l0_sup: family must be scalar");
        std::vector<double> data(acc.atom_count());
        for (std::size_t a = 0; a < acc.atom_count(); ++a)
            data[a] = std::max(acc.at(a), x.at(a));
        acc = L0Value(acc.space(), 1, std::move(data),
                      Partition::join(acc.meas(), x.meas()));
    }
    return acc;
}

/// Pointwise minimum; dual of l0_sup.
inline L0Value l0_inf(std::span<const L0Value> family) {
    if (family.empty()) throw std::invalid_argument("l0_inf: empty family");
    L0Value acc = family.front();
    for (std::size_t i = 1; i < family.size(); ++i) {
        const L0Value& x = family[i];
        L0Value::require_same_space(acc, x);
        if (!x.scalar() || !acc.scalar())
            throw std::invalid_argument("l0_inf: family must be scalar");
        std::vector<double> data(acc.atom_count());
        for (std::size_t a = 0; a < acc.atom_count(); ++a)
            data[a] = std::min(acc.at(a), x.at(a));
        acc = L0Value(acc.space(), 1, std::move(data),
                      Partition::join(acc.meas(), x.meas()));
    }
    return acc;
}

// ============================================================================
// Concatenation
// ============================================================================

/// One piece of a concatenation: the value used on the given atom set.
struct ConcatPart {
    std::vector<std::size_t> block;
    L0Value element;
};

/// Glues elements along a partition of the atom set: the result agrees with
/// part.element on part.block. Blocks must be disjoint and cover the space.
inline L0Value concatenate(std::span<const ConcatPart> parts) {
    if (parts.empty()) throw std::invalid_argument("concatenate: no parts");
    const L0Value& first = parts.front().element;
    const SpacePtr& space = first.space();
    const std::size_t d = first.dim();
    const std::size_t n = space->atom_count();

    std::vector<std::vector<std::size_t>> blocks;
    blocks.reserve(parts.size());
    for (const auto& part : parts) {
        L0Value::require_same_space(first, part.element);
        if (part.element.dim() != d)
            throw std::invalid_argument("concatenate: element dimension mismatch");
        blocks.push_back(part.block);
    }
    // from_blocks rejects overlaps and gaps.
    Partition glue = Partition::from_blocks(n, blocks);

    std::vector<double> data(n * d, 0.0);
    Partition meas = glue;
    for (const auto& part : parts) {
        for (std::size_t atom : part.block)
            for (std::size_t c = 0; c < d; ++c)
                data[atom * d + c] = part.element.at(atom, c);
        meas = Partition::join(meas, part.element.meas());
    }
    return L0Value(space, d, std::move(data), std::move(meas));
}

/// Convenience: glue elements aligned with the blocks of a partition.
inline L0Value concatenate(const EventPartition& partition, std::span<const L0Value> elements) {
    if (partition.block_count() != elements.size())
        throw std::invalid_argument("concatenate: one element per block required");
    std::vector<ConcatPart> parts;
    parts.reserve(elements.size());
    for (std::size_t b = 0; b < elements.size(); ++b)
        parts.push_back({partition.block(b), elements[b]});
    return concatenate(parts);
}

// ============================================================================
// Sup witness
// ============================================================================

/// A selection from a finite family realizing its supremum up to eps:
/// `selection[atom]` indexes the family member used at that atom, and
/// `witness` is the corresponding concatenation.
struct SupWitness {
    std::vector<std::size_t> selection;
    L0Value witness;
};

/// Picks the per-atom argmax of the family (lowest index on ties) and glues
/// it along the selection. Finite families attain the supremum, so the
/// witness exceeds l0_sup(family) - eps for every eps > 0 on Omega.
inline SupWitness stable_sup_witness(std::span<const L0Value> family, const L0Value& eps) {
    if (family.empty()) throw std::invalid_argument("stable_sup_witness: empty family");
    if (!eps.scalar()) throw std::invalid_argument("stable_sup_witness: eps must be scalar");
    for (std::size_t a = 0; a < eps.atom_count(); ++a)
        if (!(eps.at(a) > 0.0))
            throw std::invalid_argument("stable_sup_witness: eps must be > 0 on Omega");

    const std::size_t n = family.front().atom_count();
    std::vector<std::size_t> selection(n, 0);
    std::vector<double> data(n);
    Partition meas = family.front().meas();
    for (std::size_t i = 1; i < family.size(); ++i)
        meas = Partition::join(meas, family[i].meas());
    for (std::size_t a = 0; a < n; ++a) {
        std::size_t best = 0;
        double best_val = family[0].at(a);
        for (std::size_t i = 1; i < family.size(); ++i) {
            if (family[i].at(a) > best_val) {
                best_val = family[i].at(a);
                best = i;
            }
        }
        selection[a] = best;
        data[a] = best_val;
    }
    L0Value witness(family.front().space(), 1, std::move(data), std::move(meas));
    return SupWitness{std::move(selection), std::move(witness)};
}

// ============================================================================
// Stability check
// ============================================================================

struct StabilityViolation {
    std::size_t sample_index = 0;
    double deviation = 0.0;
};

struct StabilityReport {
    bool stable = true;
    double worst = 0.0;
    std::vector<StabilityViolation> violations;
};

/// One stability sample: a partition with one input per block.
struct StabilitySample {
    EventPartition partition;
    std::vector<L0Value> elements;
};

/// Checks T(sum_n I_{A_n} x_n) = sum_n I_{A_n} T(x_n) on each sample, to a
/// relative tolerance. Violations are reported, not thrown.
inline StabilityReport stability_check(const std::function<L0Value(const L0Value&)>& map,
                                       std::span<const StabilitySample> samples,
                                       double rel_tol = 1e-10) {
    StabilityReport report;
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& sample = samples[s];
        L0Value glued_input = concatenate(sample.partition, sample.elements);
        L0Value lhs = map(glued_input);
        std::vector<L0Value> mapped;
        mapped.reserve(sample.elements.size());
        for (const auto& x : sample.elements) mapped.push_back(map(x));
        L0Value rhs = concatenate(sample.partition, mapped);
        double scale = std::max(1.0, std::max(max_abs(lhs), max_abs(rhs)));
        double dev = max_abs_diff(lhs, rhs) / scale;
        report.worst = std::max(report.worst, dev);
        if (dev > rel_tol) {
            report.stable = false;
            report.violations.push_back({s, dev});
        }
    }
    return report;
}

} // namespace bselab
