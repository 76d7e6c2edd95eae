#pragma once

// Finite filtered probability spaces (scenario trees) with positive atom
// weights, and the algebra of measurable R^d-valued functions on them.
// With every atom weight strictly positive, equivalence classes of random
// variables collapse to literal per-atom value vectors and almost-sure
// statements become exact assertions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bselab {

// ============================================================================
// Partition
// ============================================================================

/// A partition of the atom set {0..n-1} into disjoint covering blocks,
/// canonicalized so blocks are sorted by their smallest atom.
class Partition {
public:
    Partition() = default;

    static Partition trivial(std::size_t atom_count) {
        std::vector<std::size_t> all(atom_count);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return from_blocks(atom_count, {all});
    }

    static Partition discrete(std::size_t atom_count) {
        std::vector<std::vector<std::size_t>> blocks(atom_count);
        for (std::size_t a = 0; a < atom_count; ++a) blocks[a] = {a};
        return from_blocks(atom_count, std::move(blocks));
    }

    static Partition from_blocks(std::size_t atom_count,
                                 std::vector<std::vector<std::size_t>> blocks) {
        Partition part;
        part.atom_count_ = atom_count;
        for (auto& b : blocks) std::sort(b.begin(), b.end());
        std::sort(blocks.begin(), blocks.end(),
                  [](const auto& a, const auto& b) {
                      if (a.empty() || b.empty())
                          throw std::invalid_argument("Partition: empty block");
                      return a.front() < b.front();
                  });
        part.blocks_ = std::move(blocks);
        part.block_of_.assign(atom_count, kUnassigned);
        for (std::size_t b = 0; b < part.blocks_.size(); ++b) {
            for (std::size_t atom : part.blocks_[b]) {
                if (atom >= atom_count)
                    throw std::invalid_argument("Partition: atom index out of range");
                if (part.block_of_[atom] != kUnassigned)
                    throw std::invalid_argument("Partition: blocks overlap");
                part.block_of_[atom] = b;
            }
        }
        for (std::size_t a = 0; a < atom_count; ++a)
            if (part.block_of_[a] == kUnassigned)
                throw std::invalid_argument("Partition: blocks do not cover the atom set");
        return part;
    }

    /// Common refinement: blocks are the nonempty pairwise intersections.
    static Partition join(const Partition& a, const Partition& b) {
        if (a.atom_count_ != b.atom_count_)
            throw std::invalid_argument("Partition::join: atom count mismatch");
        std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> cells;
        for (std::size_t atom = 0; atom < a.atom_count_; ++atom)
            cells[{a.block_of_[atom], b.block_of_[atom]}].push_back(atom);
        std::vector<std::vector<std::size_t>> blocks;
        blocks.reserve(cells.size());
        for (auto& [key, atoms] : cells) blocks.push_back(std::move(atoms));
        return from_blocks(a.atom_count_, std::move(blocks));
    }

    std::size_t atom_count() const { return atom_count_; }
    std::size_t block_count() const { return blocks_.size(); }
    std::size_t block_of(std::size_t atom) const { return block_of_.at(atom); }
    const std::vector<std::size_t>& block(std::size_t b) const { return blocks_.at(b); }
    const std::vector<std::vector<std::size_t>>& blocks() const { return blocks_; }

    /// True when every block of this partition lies inside a block of `coarser`.
    bool refines(const Partition& coarser) const {
        if (coarser.atom_count_ != atom_count_) return false;
        for (const auto& b : blocks_) {
            const std::size_t target = coarser.block_of_[b.front()];
            for (std::size_t atom : b)
                if (coarser.block_of_[atom] != target) return false;
        }
        return true;
    }

    bool operator==(const Partition& other) const {
        return atom_count_ == other.atom_count_ && blocks_ == other.blocks_;
    }
    bool operator!=(const Partition& other) const { return !(*this == other); }

private:
    static constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);
    std::size_t atom_count_ = 0;
    std::vector<std::size_t> block_of_;
    std::vector<std::vector<std::size_t>> blocks_;
};

// ============================================================================
// FilteredSpace
// ============================================================================

/// A finite filtered probability space over a uniform time grid
/// t_0 < t_1 < ... < t_N = T: positive atom weights summing to one and a
/// refining sequence of partitions, one per grid time.
class FilteredSpace {
public:
    FilteredSpace(std::vector<double> weights, double horizon,
                  std::vector<Partition> partitions)
        : weights_(std::move(weights)), partitions_(std::move(partitions)) {
        const std::size_t n = weights_.size();
        if (n == 0) throw std::invalid_argument("FilteredSpace: no atoms");
        if (partitions_.empty())
            throw std::invalid_argument("FilteredSpace: no partitions");
        if (!(horizon > 0.0))
            throw std::invalid_argument("FilteredSpace: horizon must be positive");
        double total = 0.0;
        for (double w : weights_) {
            if (!(w > 0.0))
                throw std::invalid_argument("FilteredSpace: nonpositive atom weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("FilteredSpace: weights do not sum to 1");
        for (std::size_t k = 0; k < partitions_.size(); ++k) {
            if (partitions_[k].atom_count() != n)
                throw std::invalid_argument("FilteredSpace: partition atom count mismatch");
            if (k > 0 && !partitions_[k].refines(partitions_[k - 1]))
                throw std::invalid_argument("FilteredSpace: partitions do not refine");
        }
        const std::size_t steps = partitions_.size() - 1;
        grid_.resize(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k)
            grid_[k] = horizon * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(steps, 1));
        grid_.back() = horizon;
    }

    std::size_t atom_count() const { return weights_.size(); }
    std::size_t step_count() const { return grid_.size() - 1; }
    double horizon() const { return grid_.back(); }
    double dt() const {
        return step_count() == 0 ? grid_.back() : grid_[1] - grid_[0];
    }
    double time(std::size_t k) const { return grid_.at(k); }
    double weight(std::size_t atom) const { return weights_.at(atom); }
    const std::vector<double>& weights() const { return weights_; }
    const Partition& partition(std::size_t k) const { return partitions_.at(k); }
    const Partition& base() const { return partitions_.front(); }
    const Partition& finest() const { return partitions_.back(); }

    double block_weight(const Partition& part, std::size_t b) const {
        double total = 0.0;
        for (std::size_t atom : part.block(b)) total += weights_.at(atom);
        return total;
    }

private:
    std::vector<double> weights_;
    std::vector<double> grid_;
    std::vector<Partition> partitions_;
};

using SpacePtr = std::shared_ptr<const FilteredSpace>;

// ============================================================================
// L0Value
// ============================================================================

/// An R^d-valued random variable on a FilteredSpace: one d-vector per atom,
/// tagged with a partition it is constant on the blocks of. Immutable.
class L0Value {
public:
    L0Value() = default;

    L0Value(SpacePtr space, std::size_t dim, std::vector<double> data, Partition meas)
        : space_(std::move(space)), dim_(dim), data_(std::move(data)), meas_(std::move(meas)) {
        if (!space_) throw std::invalid_argument("L0Value: null space");
        if (dim_ == 0) throw std::invalid_argument("L0Value: dimension must be >= 1");
        if (data_.size() != space_->atom_count() * dim_)
            throw std::invalid_argument("L0Value: data size mismatch");
        if (meas_.atom_count() != space_->atom_count())
            throw std::invalid_argument("L0Value: measurability partition mismatch");
        for (const auto& block : meas_.blocks()) {
            const std::size_t lead = block.front();
            for (std::size_t atom : block)
                for (std::size_t c = 0; c < dim_; ++c)
                    if (data_[atom * dim_ + c] != data_[lead * dim_ + c])
                        throw std::invalid_argument(
                            "L0Value: not constant on a block of its declared partition");
        }
    }

    /// Value with per-atom data and the finest declared measurability.
    static L0Value from_atoms(SpacePtr space, std::size_t dim, std::vector<double> data) {
        Partition fin = space->finest();
        return L0Value(std::move(space), dim, std::move(data), std::move(fin));
    }

    static L0Value constant(SpacePtr space, std::span<const double> value) {
        const std::size_t n = space->atom_count();
        std::vector<double> data(n * value.size());
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t c = 0; c < value.size(); ++c)
                data[a * value.size() + c] = value[c];
        Partition triv = Partition::trivial(n);
        return L0Value(std::move(space), value.size(), std::move(data), std::move(triv));
    }

    static L0Value scalar_constant(SpacePtr space, double v) {
        const double arr[1] = {v};
        return constant(std::move(space), arr);
    }

    static L0Value zero(SpacePtr space, std::size_t dim) {
        std::vector<double> v(dim, 0.0);
        return constant(std::move(space), v);
    }

    /// Indicator of an atom set, measurable w.r.t. {A, A^c} (or {Omega}).
    static L0Value indicator(SpacePtr space, std::span<const std::size_t> atoms) {
        const std::size_t n = space->atom_count();
        std::vector<double> data(n, 0.0);
        std::vector<std::size_t> inside(atoms.begin(), atoms.end());
        for (std::size_t a : inside) data.at(a) = 1.0;
        std::vector<std::size_t> outside;
        for (std::size_t a = 0; a < n; ++a)
            if (data[a] == 0.0) outside.push_back(a);
        std::vector<std::vector<std::size_t>> blocks;
        if (!inside.empty()) blocks.push_back(std::move(inside));
        if (!outside.empty()) blocks.push_back(std::move(outside));
        Partition part = Partition::from_blocks(n, std::move(blocks));
        return L0Value(std::move(space), 1, std::move(data), std::move(part));
    }

    const SpacePtr& space() const { return space_; }
    bool empty() const noexcept { return space_ == nullptr; }
    std::size_t dim() const { return dim_; }
    std::size_t atom_count() const { return space_->atom_count(); }
    const Partition& meas() const { return meas_; }
    const std::vector<double>& data() const { return data_; }
    double at(std::size_t atom, std::size_t comp = 0) const {
        return data_.at(atom * dim_ + comp);
    }
    bool scalar() const { return dim_ == 1; }

    /// Same data, re-tagged with a coarser (or otherwise compatible) partition.
    L0Value with_meas(Partition part) const {
        return L0Value(space_, dim_, data_, std::move(part));
    }

    friend L0Value operator+(const L0Value& a, const L0Value& b) {
        return zip(a, b, [](double x, double y) { return x + y; });
    }
    friend L0Value operator-(const L0Value& a, const L0Value& b) {
        return zip(a, b, [](double x, double y) { return x - y; });
    }
    friend L0Value operator*(double s, const L0Value& x) {
        std::vector<double> data(x.data_);
        for (double& v : data) v *= s;
        return L0Value(x.space_, x.dim_, std::move(data), x.meas_);
    }
    L0Value operator-() const { return -1.0 * (*this); }

    /// Module multiplication by a scalar L0 factor.
    L0Value scaled_by(const L0Value& factor) const {
        require_same_space(*this, factor);
        if (!factor.scalar())
            throw std::invalid_argument("L0Value: scaling factor must be scalar");
        std::vector<double> data(data_.size());
        for (std::size_t a = 0; a < atom_count(); ++a)
            for (std::size_t c = 0; c < dim_; ++c)
                data[a * dim_ + c] = data_[a * dim_ + c] * factor.data_[a];
        return L0Value(space_, dim_, std::move(data), Partition::join(meas_, factor.meas_));
    }

    /// Per-atom Euclidean norm, as a scalar L0 value.
    L0Value euclidean() const {
        std::vector<double> data(atom_count());
        for (std::size_t a = 0; a < atom_count(); ++a) {
            double s = 0.0;
            for (std::size_t c = 0; c < dim_; ++c) {
                const double v = data_[a * dim_ + c];
                s += v * v;
            }
            data[a] = std::sqrt(s);
        }
        return L0Value(space_, 1, std::move(data), meas_);
    }

    /// Per-atom map on a scalar value (f applied to block-constant data
    /// stays block-constant).
    template <class Fn>
    L0Value map_scalar(Fn&& f) const {
        if (!scalar()) throw std::invalid_argument("L0Value::map_scalar: value not scalar");
        std::vector<double> data(atom_count());
        for (std::size_t a = 0; a < atom_count(); ++a) data[a] = f(data_[a]);
        return L0Value(space_, 1, std::move(data), meas_);
    }

    static void require_same_space(const L0Value& a, const L0Value& b) {
        if (a.space_ != b.space_)
            throw std::invalid_argument("L0Value: values live on different spaces");
    }

private:
    template <class Fn>
    static L0Value zip(const L0Value& a, const L0Value& b, Fn&& f) {
        require_same_space(a, b);
        if (a.dim_ != b.dim_)
            throw std::invalid_argument("L0Value: dimension mismatch");
        std::vector<double> data(a.data_.size());
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = f(a.data_[i], b.data_[i]);
        return L0Value(a.space_, a.dim_, std::move(data), Partition::join(a.meas_, b.meas_));
    }

    SpacePtr space_;
    std::size_t dim_ = 0;
    std::vector<double> data_;
    Partition meas_;
};

inline double max_abs(const L0Value& x) {
    double m = 0.0;
    for (double v : x.data()) m = std::max(m, std::abs(v));
    return m;
}

inline double max_abs_diff(const L0Value& a, const L0Value& b) {
    return max_abs(a - b);
}

// ============================================================================
// Space construction
// ============================================================================

/// Builds a tree-shaped space from per-step branching factors. Edge
/// probabilities are given per step (shared by all nodes of that step) and
/// default to uniform; the atom weight is the product of the edge
/// probabilities along its path.
inline SpacePtr build_space(std::span<const std::size_t> branching,
                            const std::vector<std::vector<double>>& edge_probs = {},
                            double horizon = 1.0) {
    if (branching.empty())
        throw std::invalid_argument("build_space: branching must be nonempty");
    std::size_t atoms = 1;
    for (std::size_t k = 0; k < branching.size(); ++k) {
        if (branching[k] < 1)
            throw std::invalid_argument("build_space: branching factors must be >= 1");
        atoms *= branching[k];
    }
    if (!edge_probs.empty() && edge_probs.size() != branching.size())
        throw std::invalid_argument("build_space: edge_probs must have one entry per step");

    std::vector<std::vector<double>> probs(branching.size());
    for (std::size_t k = 0; k < branching.size(); ++k) {
        if (!edge_probs.empty() && !edge_probs[k].empty()) {
            probs[k] = edge_probs[k];
            if (probs[k].size() != branching[k])
                throw std::invalid_argument("build_space: edge probability arity mismatch");
            double sum = 0.0;
            for (double p : probs[k]) {
                if (!(p > 0.0))
                    throw std::invalid_argument("build_space: edge probabilities must be positive");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("build_space: edge probabilities must sum to 1");
        } else {
            probs[k].assign(branching[k], 1.0 / static_cast<double>(branching[k]));
        }
    }

    // Atoms are paths in lexicographic order; every node is a contiguous range.
    std::vector<double> weights(atoms, 1.0);
    std::vector<Partition> partitions;
    partitions.reserve(branching.size() + 1);
    std::size_t suffix = atoms;
    for (std::size_t k = 0; k <= branching.size(); ++k) {
        std::vector<std::vector<std::size_t>> blocks;
        blocks.reserve(atoms / suffix);
        for (std::size_t lo = 0; lo < atoms; lo += suffix) {
            std::vector<std::size_t> block(suffix);
            std::iota(block.begin(), block.end(), lo);
            blocks.push_back(std::move(block));
        }
        partitions.push_back(Partition::from_blocks(atoms, std::move(blocks)));
        if (k < branching.size()) {
            const std::size_t child = suffix / branching[k];
            for (std::size_t a = 0; a < atoms; ++a) {
                const std::size_t edge = (a % suffix) / child;
                weights[a] *= probs[k][edge];
            }
            suffix = child;
        }
    }
    return std::make_shared<FilteredSpace>(std::move(weights), horizon, std::move(partitions));
}

// ============================================================================
// Conditional expectation
// ============================================================================

/// Generalized conditional expectation w.r.t. a partition: block-wise
/// weighted average. On a finite positive-weight space every variable is
/// conditionally integrable, so this is the ordinary notion as well.
inline L0Value cond_expect(const L0Value& x, const Partition& sigma) {
    const auto& space = *x.space();
    if (sigma.atom_count() != space.atom_count())
        throw std::invalid_argument("cond_expect: partition not compatible with space");
    const std::size_t d = x.dim();
    std::vector<double> data(space.atom_count() * d);
    for (std::size_t b = 0; b < sigma.block_count(); ++b) {
        const auto& block = sigma.block(b);
        double mass = 0.0;
        std::vector<double> avg(d, 0.0);
        for (std::size_t atom : block) {
            const double w = space.weight(atom);
            mass += w;
            for (std::size_t c = 0; c < d; ++c) avg[c] += w * x.at(atom, c);
        }
        for (std::size_t c = 0; c < d; ++c) avg[c] /= mass;
        for (std::size_t atom : block)
            for (std::size_t c = 0; c < d; ++c) data[atom * d + c] = avg[c];
    }
    return L0Value(x.space(), d, std::move(data), sigma);
}

/// Conditional expectation w.r.t. the grid partition at index k.
inline L0Value cond_expect_at(const L0Value& x, std::size_t k) {
    return cond_expect(x, x.space()->partition(k));
}

/// Plain expectation as a number.
inline std::vector<double> expect(const L0Value& x) {
    const auto& space = *x.space();
    std::vector<double> out(x.dim(), 0.0);
    for (std::size_t a = 0; a < space.atom_count(); ++a)
        for (std::size_t c = 0; c < x.dim(); ++c)
            out[c] += space.weight(a) * x.at(a, c);
    return out;
}

/// Conditional inner product E[x . y | sigma], a scalar L0 value.
inline L0Value cond_inner(const L0Value& x, const L0Value& y, const Partition& sigma) {
    L0Value::require_same_space(x, y);
    if (x.dim() != y.dim())
        throw std::invalid_argument("cond_inner: dimension mismatch");
    std::vector<double> prod(x.atom_count());
    for (std::size_t a = 0; a < x.atom_count(); ++a) {
        double s = 0.0;
        for (std::size_t c = 0; c < x.dim(); ++c) s += x.at(a, c) * y.at(a, c);
        prod[a] = s;
    }
    L0Value pointwise(x.space(), 1, std::move(prod), Partition::join(x.meas(), y.meas()));
    return cond_expect(pointwise, sigma);
}

/// True iff x is constant on every block of sigma (exact equality of the
/// stored values, no tolerance).
inline bool is_measurable(const L0Value& x, const Partition& sigma) {
    if (sigma.atom_count() != x.atom_count())
        throw std::invalid_argument("is_measurable: partition not compatible with space");
    for (const auto& block : sigma.blocks()) {
        const std::size_t lead = block.front();
        for (std::size_t atom : block)
            for (std::size_t c = 0; c < x.dim(); ++c)
                if (x.at(atom, c) != x.at(lead, c)) return false;
    }
    return true;
}

// ============================================================================
// Block restriction
// ============================================================================

/// A sub-space over one measurable atom set, with renormalized weights.
/// Maps sub-atom i to parent atom `atoms[i]`.
struct BlockRestriction {
    SpacePtr sub;
    std::vector<std::size_t> atoms;
};

inline BlockRestriction restrict_space(const SpacePtr& parent,
                                       std::span<const std::size_t> block_atoms) {
    if (block_atoms.empty())
        throw std::invalid_argument("restrict_space: empty block");
    std::vector<std::size_t> atoms(block_atoms.begin(), block_atoms.end());
    std::sort(atoms.begin(), atoms.end());
    std::vector<std::size_t> index_of(parent->atom_count(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < atoms.size(); ++i) index_of[atoms[i]] = i;

    double mass = 0.0;
    for (std::size_t a : atoms) mass += parent->weight(a);
    std::vector<double> weights(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i)
        weights[i] = parent->weight(atoms[i]) / mass;

    std::vector<Partition> partitions;
    partitions.reserve(parent->step_count() + 1);
    for (std::size_t k = 0; k <= parent->step_count(); ++k) {
        std::vector<std::vector<std::size_t>> blocks;
        for (const auto& blk : parent->partition(k).blocks()) {
            std::vector<std::size_t> sub_blk;
            for (std::size_t a : blk)
                if (index_of[a] != static_cast<std::size_t>(-1))
                    sub_blk.push_back(index_of[a]);
            if (!sub_blk.empty()) blocks.push_back(std::move(sub_blk));
        }
        partitions.push_back(Partition::from_blocks(atoms.size(), std::move(blocks)));
    }
    auto sub = std::make_shared<FilteredSpace>(std::move(weights), parent->horizon(),
                                               std::move(partitions));
    return BlockRestriction{std::move(sub), std::move(atoms)};
}

inline L0Value restrict_value(const L0Value& x, const BlockRestriction& r) {
    const std::size_t d = x.dim();
    std::vector<double> data(r.atoms.size() * d);
    for (std::size_t i = 0; i < r.atoms.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) data[i * d + c] = x.at(r.atoms[i], c);
    return L0Value::from_atoms(r.sub, d, std::move(data));
}

} // namespace bselab
