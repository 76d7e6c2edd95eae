#pragma once

// Seeded generators for random spaces, values, martingales and partitions.
// Deterministic for a fixed seed; used by the verification suites and tests.

#include <random>
#include <vector>

#include "bselab/probspace.hpp"
#include "bselab/processes.hpp"

namespace bselab {

using Rng = std::mt19937_64;

/// A random tree space with 4..24 atoms and 2..3 levels.
inline SpacePtr random_tree_space(Rng& rng) {
    std::uniform_int_distribution<int> levels_dist(2, 3);
    const int levels = levels_dist(rng);
    std::vector<std::size_t> branching;
    std::size_t atoms = 1;
    for (int k = 0; k < levels; ++k) {
        std::uniform_int_distribution<int> b_dist(2, k == 0 ? 4 : 3);
        std::size_t b = static_cast<std::size_t>(b_dist(rng));
        if (atoms * b > 24) b = 2;
        if (atoms * b > 24) break;
        branching.push_back(b);
        atoms *= b;
    }
    if (branching.empty()) branching.push_back(2);
    std::vector<std::vector<double>> probs;
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (std::size_t b : branching) {
        std::vector<double> edge(b);
        double total = 0.0;
        for (auto& p : edge) {
            p = u(rng);
            total += p;
        }
        for (auto& p : edge) p /= total;
        // renormalize exactly so the space ctor's 1e-12 gate passes
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < edge.size(); ++i) sum += edge[i];
        edge.back() = 1.0 - sum;
        probs.push_back(std::move(edge));
    }
    return build_space(branching, probs);
}

/// A random value measurable w.r.t. the given partition.
inline L0Value random_value(Rng& rng, const SpacePtr& space, const Partition& meas,
                            std::size_t dim = 1, double lo = -5.0, double hi = 5.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> data(space->atom_count() * dim);
    for (std::size_t b = 0; b < meas.block_count(); ++b) {
        std::vector<double> v(dim);
        for (auto& x : v) x = u(rng);
        for (std::size_t atom : meas.block(b))
            for (std::size_t c = 0; c < dim; ++c) data[atom * dim + c] = v[c];
    }
    return L0Value(space, dim, std::move(data), meas);
}

inline L0Value random_atom_value(Rng& rng, const SpacePtr& space, std::size_t dim = 1,
                                 double lo = -5.0, double hi = 5.0) {
    return random_value(rng, space, space->finest(), dim, lo, hi);
}

/// A positive value measurable w.r.t. the given partition.
inline L0Value random_positive(Rng& rng, const SpacePtr& space, const Partition& meas,
                               double lo, double hi) {
    return random_value(rng, space, meas, 1, lo, hi);
}

/// A random martingale started at `base_index`, built from a random terminal
/// value re-centered so the start value is zero plus a random adapted head.
inline MartingaleProcess random_martingale(Rng& rng, const SpacePtr& space,
                                           std::size_t dim = 1, std::size_t base_index = 0) {
    L0Value terminal = random_atom_value(rng, space, dim);
    MartingaleProcess m = martingale_from_terminal(terminal, base_index);
    return m;
}

/// Random predictable coefficients, one per step in [start, N).
inline std::vector<L0Value> random_predictable(Rng& rng, const SpacePtr& space,
                                               std::size_t dim = 1, std::size_t start = 0,
                                               double lo = -2.0, double hi = 2.0) {
    std::vector<L0Value> coeffs;
    for (std::size_t k = start; k < space->step_count(); ++k)
        coeffs.push_back(random_value(rng, space, space->partition(k), dim, lo, hi));
    return coeffs;
}

/// A random partition whose blocks are unions of the given partition's
/// blocks (at least one block, at most all of them separately).
inline Partition random_coarsening(Rng& rng, const Partition& fine) {
    std::uniform_int_distribution<int> groups_dist(1, static_cast<int>(fine.block_count()));
    const int groups = groups_dist(rng);
    std::vector<std::vector<std::size_t>> blocks(static_cast<std::size_t>(groups));
    std::uniform_int_distribution<int> pick(0, groups - 1);
    for (std::size_t b = 0; b < fine.block_count(); ++b) {
        std::size_t g = static_cast<std::size_t>(pick(rng));
        if (blocks[g].empty() && b + 1 == fine.block_count()) {
            // fall through; emptiness handled after the loop
        }
        for (std::size_t atom : fine.block(b)) blocks[g].push_back(atom);
    }
    std::vector<std::vector<std::size_t>> nonempty;
    for (auto& blk : blocks)
        if (!blk.empty()) nonempty.push_back(std::move(blk));
    return Partition::from_blocks(fine.atom_count(), std::move(nonempty));
}

} // namespace bselab
