#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "bselab/l0algebra.hpp"

using namespace bselab;

namespace {

SpacePtr pair_space() {
    std::vector<std::size_t> branching{2};
    return build_space(branching);
}

L0Value scalar(const SpacePtr& space, std::vector<double> v) {
    return L0Value::from_atoms(space, 1, std::move(v));
}

} // namespace

TEST_CASE("l0_sup and l0_inf: pointwise extremes") {
    auto space = pair_space();
    std::vector<L0Value> family{scalar(space, {1.0, 5.0}), scalar(space, {3.0, 2.0})};

    L0Value sup = l0_sup(family);
    CHECK(sup.at(0) == 3.0);
    CHECK(sup.at(1) == 5.0);
    L0Value inf = l0_inf(family);
    CHECK(inf.at(0) == 1.0);
    CHECK(inf.at(1) == 2.0);

    std::vector<L0Value> single{family[0]};
    CHECK(max_abs_diff(l0_sup(single), family[0]) == 0.0);
    CHECK(max_abs_diff(l0_inf(single), family[0]) == 0.0);

    std::vector<L0Value> empty;
    CHECK_THROWS_AS(l0_sup(empty), std::invalid_argument);
}

TEST_CASE("l0_sup dominates and l0_inf is dominated atomwise") {
    std::vector<std::size_t> branching{2, 3};
    auto space = build_space(branching);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-5.0, 5.0);
    std::vector<L0Value> family;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> v(space->atom_count());
        for (auto& x : v) x = dist(rng);
        family.push_back(scalar(space, std::move(v)));
    }
    L0Value sup = l0_sup(family);
    L0Value inf = l0_inf(family);
    for (const auto& h : family)
        for (std::size_t a = 0; a < h.atom_count(); ++a) {
            CHECK(sup.at(a) >= h.at(a));
            CHECK(inf.at(a) <= h.at(a));
        }
}

TEST_CASE("lattice laws: associative, commutative, idempotent") {
    auto space = pair_space();
    L0Value a = scalar(space, {1.0, 4.0});
    L0Value b = scalar(space, {2.0, 3.0});
    L0Value c = scalar(space, {0.0, 9.0});
    std::vector<L0Value> abc{a, b, c};
    std::vector<L0Value> cba{c, b, a};
    CHECK(max_abs_diff(l0_sup(abc), l0_sup(cba)) == 0.0);
    std::vector<L0Value> aa{a, a};
    CHECK(max_abs_diff(l0_sup(aa), a) == 0.0);
    std::vector<L0Value> ab{a, b};
    std::vector<L0Value> ab_c{l0_sup(ab), c};
    CHECK(max_abs_diff(l0_sup(ab_c), l0_sup(abc)) == 0.0);
}

TEST_CASE("pairwise-join-closed hull has l0_sup as maximum element") {
    std::vector<std::size_t> branching{2, 2};
    auto space = build_space(branching);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    std::vector<L0Value> family;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> v(space->atom_count());
        for (auto& x : v) x = dist(rng);
        family.push_back(scalar(space, std::move(v)));
    }
    // close under pairwise joins
    std::vector<L0Value> hull = family;
    bool grew = true;
    while (grew) {
        grew = false;
        const std::size_t n = hull.size();
        for (std::size_t i = 0; i < n && !grew; ++i)
            for (std::size_t j = i + 1; j < n && !grew; ++j) {
                std::vector<L0Value> pair{hull[i], hull[j]};
                L0Value join = l0_sup(pair);
                bool known = false;
                for (const auto& h : hull)
                    if (max_abs_diff(h, join) == 0.0) { known = true; break; }
                if (!known) {
                    hull.push_back(join);
                    grew = true;
                }
            }
    }
    // the hull contains an element dominating all others; it equals the sup
    L0Value sup = l0_sup(family);
    bool found = false;
    for (const auto& h : hull)
        if (max_abs_diff(h, sup) == 0.0) found = true;
    CHECK(found);
}

TEST_CASE("concatenate: gluing identities") {
    auto space = pair_space();
    L0Value x = scalar(space, {1.0, 2.0});

    std::vector<ConcatPart> whole{{{0, 1}, x}};
    CHECK(max_abs_diff(concatenate(whole), x) == 0.0);

    std::vector<ConcatPart> split{{{0}, x}, {{1}, x}};
    CHECK(max_abs_diff(concatenate(split), x) == 0.0);

    std::vector<std::size_t> branching{2, 2};
    auto space4 = build_space(branching);
    L0Value u = L0Value::from_atoms(space4, 1, {1.0, 1.0, 9.0, 9.0});
    L0Value v = L0Value::from_atoms(space4, 1, {7.0, 7.0, 4.0, 4.0});
    std::vector<ConcatPart> parts{{{0, 1}, u}, {{2, 3}, v}};
    L0Value glued = concatenate(parts);
    CHECK(glued.at(0) == 1.0);
    CHECK(glued.at(1) == 1.0);
    CHECK(glued.at(2) == 4.0);
    CHECK(glued.at(3) == 4.0);

    std::vector<ConcatPart> overlap{{{0, 1}, u}, {{1, 2, 3}, v}};
    CHECK_THROWS_AS(concatenate(overlap), std::invalid_argument);
    std::vector<ConcatPart> gap{{{0}, u}, {{2, 3}, v}};
    CHECK_THROWS_AS(concatenate(gap), std::invalid_argument);
}

TEST_CASE("stable_sup_witness: argmax selection with lowest-index ties") {
    auto space = pair_space();
    std::vector<L0Value> family{scalar(space, {1.0, 5.0}), scalar(space, {3.0, 2.0})};
    L0Value eps = scalar(space, {0.1, 0.1});
    SupWitness w = stable_sup_witness(family, eps);
    CHECK(w.selection[0] == 1);
    CHECK(w.selection[1] == 0);
    CHECK(w.witness.at(0) == 3.0);
    CHECK(w.witness.at(1) == 5.0);
    CHECK(max_abs_diff(w.witness, l0_sup(family)) == 0.0);

    // singleton family: witness is the element
    std::vector<L0Value> single{family[0]};
    SupWitness ws = stable_sup_witness(single, eps);
    CHECK(max_abs_diff(ws.witness, family[0]) == 0.0);

    // eps must be positive everywhere
    L0Value bad_eps = scalar(space, {0.1, 0.0});
    CHECK_THROWS_AS(stable_sup_witness(family, bad_eps), std::invalid_argument);

    // ties resolve to the lowest index
    std::vector<L0Value> tied{scalar(space, {2.0, 2.0}), scalar(space, {2.0, 2.0})};
    SupWitness wt = stable_sup_witness(tied, eps);
    CHECK(wt.selection[0] == 0);
    CHECK(wt.selection[1] == 0);
}

TEST_CASE("stable_sup_witness: random family stays within eps of the sup") {
    std::vector<std::size_t> branching{2, 2, 2};
    auto space = build_space(branching);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    std::vector<L0Value> family;
    for (int i = 0; i < 5; ++i) {
        std::vector<double> v(space->atom_count());
        for (auto& x : v) x = dist(rng);
        family.push_back(scalar(space, std::move(v)));
    }
    L0Value eps = L0Value::scalar_constant(space, 1e-6);
    SupWitness w = stable_sup_witness(family, eps);
    L0Value sup = l0_sup(family);
    for (std::size_t a = 0; a < sup.atom_count(); ++a) {
        CHECK(w.witness.at(a) > sup.at(a) - 1e-6);
        // witness is the concatenation of the family along the selection
        CHECK(w.witness.at(a) == family[w.selection[a]].at(a));
    }
}

TEST_CASE("stability_check: identity and module multiplication are stable") {
    std::vector<std::size_t> branching{2, 2};
    auto space = build_space(branching);
    L0Value xi = L0Value::from_atoms(space, 1, {2.0, 2.0, -3.0, -3.0});

    std::vector<StabilitySample> samples;
    StabilitySample s;
    s.partition = space->partition(1);
    s.elements = {L0Value::from_atoms(space, 1, {1.0, 2.0, 3.0, 4.0}),
                  L0Value::from_atoms(space, 1, {-1.0, 0.5, 2.0, -2.0})};
    samples.push_back(s);

    auto identity = [](const L0Value& x) { return x; };
    CHECK(stability_check(identity, samples).stable);

    auto module_mult = [&xi](const L0Value& x) { return x.scaled_by(xi); };
    CHECK(stability_check(module_mult, samples).stable);

    // x -> (global max of x) * 1 is not stable: gluing distinct inputs mixes
    // their maxima. Hand evaluation on the two-block sample above:
    // max(glue) = 4 everywhere, but glue of maxima is (2, 2, 2, 2) on A_2.
    auto global_max = [&space](const L0Value& x) {
        double m = x.at(0);
        for (std::size_t a = 1; a < x.atom_count(); ++a) m = std::max(m, x.at(a));
        return L0Value::scalar_constant(space, m);
    };
    StabilityReport r = stability_check(global_max, samples);
    CHECK_FALSE(r.stable);
    CHECK(r.violations.size() == 1);
}

TEST_CASE("L0-Lipschitz maps pass stability_check") {
    std::vector<std::size_t> branching{2, 3};
    auto space = build_space(branching);
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> dist(-4.0, 4.0);

    // clamp composed with module multiplication: Lipschitz with factor |xi|
    L0Value xi = cond_expect(L0Value::from_atoms(space, 1, {1.,2.,3.,4.,5.,6.}),
                             space->partition(1));
    auto lipschitz = [&xi](const L0Value& x) {
        return x.scaled_by(xi).map_scalar([](double v) { return std::min(2.5, std::max(-2.5, v)); });
    };

    std::vector<StabilitySample> samples;
    for (int rep = 0; rep < 20; ++rep) {
        StabilitySample s;
        s.partition = space->partition(1);
        for (std::size_t b = 0; b < s.partition.block_count(); ++b) {
            std::vector<double> v(space->atom_count());
            for (auto& x : v) x = dist(rng);
            s.elements.push_back(L0Value::from_atoms(space, 1, std::move(v)));
        }
        samples.push_back(std::move(s));
    }
    StabilityReport r = stability_check(lipschitz, samples);
    CHECK(r.stable);
    CHECK(r.worst <= 1e-10);
}
