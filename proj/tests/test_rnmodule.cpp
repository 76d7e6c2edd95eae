#include "doctest.h"

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "bselab/rnmodule.hpp"
#include "bselab/sampling.hpp"

using namespace bselab;

namespace {

SpacePtr two_by_two() {
    std::vector<std::size_t> branching{2, 2};
    return build_space(branching);
}

} // namespace

TEST_CASE("cond_norm: block averages of powers and block maxima") {
    auto space = two_by_two();
    L0Value x = L0Value::from_atoms(space, 1, {3.0, 4.0, 0.0, 2.0});

    CondNorm two(2.0, space->partition(1), space);
    L0Value n2 = cond_norm(x, two);
    CHECK(n2.at(0) == doctest::Approx(std::sqrt(12.5)));
    CHECK(n2.at(1) == doctest::Approx(std::sqrt(12.5)));
    CHECK(n2.at(2) == doctest::Approx(std::sqrt(2.0)));
    CHECK(n2.at(3) == doctest::Approx(std::sqrt(2.0)));

    CondNorm inf_norm(kInfP, space->partition(1), space);
    L0Value ninf = cond_norm(x, inf_norm);
    CHECK(ninf.at(0) == doctest::Approx(4.0));
    CHECK(ninf.at(3) == doctest::Approx(2.0));

    CHECK(max_abs(cond_norm(L0Value::zero(space, 3), two)) == 0.0);
    CHECK_THROWS_AS(CondNorm(1.0, space->partition(0), space), std::invalid_argument);
}

TEST_CASE("rnm_axiom_check: indicator homogeneity and random triples") {
    auto space = two_by_two();
    CondNorm norm(2.0, space->partition(1), space);

    // ||I_A x|| = I_A ||x|| for a base-measurable indicator
    std::vector<std::size_t> block{0, 1};
    L0Value ind = L0Value::indicator(space, block);
    L0Value x = L0Value::from_atoms(space, 1, {3.0, -1.0, 2.0, 5.0});
    L0Value lhs = cond_norm(x.scaled_by(ind), norm);
    L0Value rhs = cond_norm(x, norm).scaled_by(ind);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-14);

    Rng rng(42);
    std::vector<AxiomSample> samples;
    for (int i = 0; i < 200; ++i) {
        AxiomSample s{random_atom_value(rng, space, 2), random_atom_value(rng, space, 2),
                      random_value(rng, space, space->partition(1))};
        samples.push_back(std::move(s));
    }
    for (double p : {1.5, 2.0, 4.0, kInfP}) {
        CondNorm n(p, space->partition(1), space);
        AxiomReport report = rnm_axiom_check(n, samples);
        CHECK(report.ok);
    }
}

TEST_CASE("fixed point engine: linear contraction to zero") {
    auto space = two_by_two();
    CondNorm norm(2.0, space->partition(0), space);
    auto map = [](const L0Value& x) { return 0.5 * x; };
    RandomIterCount L = RandomIterCount::uniform(space->partition(0));
    L0Value xi = L0Value::scalar_constant(space, 0.5);
    L0Value x0 = L0Value::from_atoms(space, 1, {4.0, -2.0, 1.0, 8.0});
    auto [fp, report] = fixed_point_random_contraction(map, L, xi, x0, norm, 1e-12, 200);
    CHECK(report.converged);
    CHECK(max_abs(fp) <= 1e-11);
}

TEST_CASE("fixed point engine: affine map has closed-form fixed point") {
    auto space = two_by_two();
    CondNorm norm(2.0, space->partition(0), space);
    L0Value c = L0Value::scalar_constant(space, 2.0);
    auto map = [&c](const L0Value& x) { return c + 0.5 * x; };
    RandomIterCount L = RandomIterCount::uniform(space->partition(0));
    L0Value xi = L0Value::scalar_constant(space, 0.5);
    auto [fp, report] = fixed_point_random_contraction(
        map, L, xi, L0Value::zero(space, 1), norm, 1e-12, 200);
    CHECK(report.converged);
    for (std::size_t a = 0; a < 4; ++a) CHECK(fp.at(a) == doctest::Approx(4.0).epsilon(1e-9));

    // uniqueness: same limit from scattered starts
    Rng rng(5);
    for (int s = 0; s < 10; ++s) {
        auto [fp2, rep2] = fixed_point_random_contraction(
            map, L, xi, random_atom_value(rng, space), norm, 1e-12, 200);
        CHECK(rep2.converged);
        CHECK(max_abs_diff(fp, fp2) <= 1e-8);
    }
}

namespace {

/// Per-block affine map x -> A_b x + c_b on d = 2 values; base = partition(1).
struct BlockAffine {
    SpacePtr space;
    Partition base;
    std::vector<std::array<double, 4>> mats; // row-major per block
    std::vector<std::array<double, 2>> offs;

    L0Value operator()(const L0Value& x) const {
        std::vector<double> data(x.atom_count() * 2);
        for (std::size_t b = 0; b < base.block_count(); ++b) {
            const auto& m = mats[b];
            const auto& c = offs[b];
            for (std::size_t atom : base.block(b)) {
                const double u = x.at(atom, 0), v = x.at(atom, 1);
                data[atom * 2 + 0] = m[0] * u + m[1] * v + c[0];
                data[atom * 2 + 1] = m[2] * u + m[3] * v + c[1];
            }
        }
        return L0Value(x.space(), 2, std::move(data),
                       Partition::join(x.meas(), base));
    }
};

} // namespace

TEST_CASE("fixed point engine: blockwise second-iterate contraction") {
    auto space = two_by_two();
    const Partition& base = space->partition(1);
    CondNorm norm(2.0, base, space);

    // Block 0: antidiagonal with operator norm 1.5 but squared norm 0.15,
    // so only the second iterate contracts (eigenvalues +-sqrt(0.15)).
    // Block 1: plain 0.5 scaling.
    BlockAffine map{space, base,
                    {{{0.0, 1.5, 0.1, 0.0}}, {{0.5, 0.0, 0.0, 0.5}}},
                    {{{1.0, 2.0}}, {{1.0, 2.0}}}};

    std::vector<int> counts{2, 1};
    RandomIterCount L = RandomIterCount::per_block(base, counts);
    L0Value xi = L0Value(space, 1, {0.15, 0.15, 0.5, 0.5}, base);
    L0Value x0 = L0Value::zero(space, 2);

    auto [fp, report] = fixed_point_random_contraction(
        std::function<L0Value(const L0Value&)>(map), L, xi, x0, norm, 1e-12, 300);
    CHECK(report.converged);
    CHECK_FALSE(report.ratio_violation);

    // closed form (I - A)^{-1} c per block
    const double det0 = 1.0 - 0.15;
    CHECK(fp.at(0, 0) == doctest::Approx((1.0 + 1.5 * 2.0) / det0).epsilon(1e-9));
    CHECK(fp.at(0, 1) == doctest::Approx((0.1 * 1.0 + 2.0) / det0).epsilon(1e-9));
    CHECK(fp.at(2, 0) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fp.at(2, 1) == doctest::Approx(4.0).epsilon(1e-9));

    // single-iterate Picard still converges here but the stiff block's
    // observed ratio exceeds its stated factor and gets flagged
    RandomIterCount L1 = RandomIterCount::uniform(base, 1);
    auto [fp1, report1] = fixed_point_random_contraction(
        std::function<L0Value(const L0Value&)>(map), L1, xi, x0, norm, 1e-12, 300);
    CHECK(report1.converged);
    CHECK(report1.ratio_violation);
    CHECK(report1.block_max_ratio[0] > 1.0);
    CHECK(max_abs_diff(fp1, fp) <= 1e-9);

    // iterating the glued composite contracts toward the fixed point at the
    // stated factor, atomwise up to the tolerance allowance
    const double tol = 1e-12;
    L0Value x = L0Value::zero(space, 2);
    for (int it = 0; it < 40; ++it) {
        L0Value next = map(map(x)); // stiff block pace
        std::vector<double> data(space->atom_count() * 2);
        for (std::size_t a = 0; a < space->atom_count(); ++a) {
            const L0Value& pick = base.block_of(a) == 0 ? next : map(x);
            for (std::size_t c = 0; c < 2; ++c) data[a * 2 + c] = pick.at(a, c);
        }
        L0Value glued(space, 2, std::move(data), base);
        L0Value lhs = cond_norm(glued - fp, norm);
        L0Value rhs = cond_norm(x - fp, norm);
        for (std::size_t a = 0; a < lhs.atom_count(); ++a)
            CHECK(lhs.at(a) <= xi.at(a) * rhs.at(a) + 10.0 * tol);
        x = glued;
    }
}

TEST_CASE("fixed point engine: iterates contract toward the fixed point") {
    auto space = two_by_two();
    CondNorm norm(2.0, space->partition(0), space);
    L0Value c = L0Value::from_atoms(space, 1, {1.0, -2.0, 0.5, 3.0});
    auto map = [&c](const L0Value& x) { return c + 0.4 * x; };
    RandomIterCount L = RandomIterCount::uniform(space->partition(0));
    L0Value xi = L0Value::scalar_constant(space, 0.4);
    const double tol = 1e-11;
    auto [fp, report] = fixed_point_random_contraction(
        map, L, xi, L0Value::zero(space, 1), norm, tol, 300);
    REQUIRE(report.converged);

    L0Value x = L0Value::zero(space, 1);
    for (int it = 0; it < 50; ++it) {
        L0Value next = map(x);
        L0Value lhs = cond_norm(next - fp, norm);
        L0Value rhs = cond_norm(x - fp, norm);
        for (std::size_t a = 0; a < lhs.atom_count(); ++a)
            CHECK(lhs.at(a) <= 0.4 * rhs.at(a) + 10.0 * tol);
        x = next;
    }
}

TEST_CASE("random_diameter") {
    auto space = two_by_two();
    std::vector<L0Value> single{L0Value::from_atoms(space, 2, std::vector<double>(8, 1.5))};
    CHECK(max_abs(random_diameter(single)) == 0.0);

    std::vector<double> a(8, 0.0);
    std::vector<double> b(8, 0.0), c(8, 0.0);
    for (std::size_t atom = 0; atom < 4; ++atom) {
        b[atom * 2] = 1.0;        // (1, 0)
        c[atom * 2 + 1] = 1.0;    // (0, 1)
    }
    std::vector<L0Value> gens{L0Value::from_atoms(space, 2, a),
                              L0Value::from_atoms(space, 2, b),
                              L0Value::from_atoms(space, 2, c)};
    L0Value diam = random_diameter(gens);
    for (std::size_t atom = 0; atom < 4; ++atom)
        CHECK(diam.at(atom) == doctest::Approx(std::sqrt(2.0)));

    // per-atom families vs brute force over pairs
    Rng rng(1);
    std::vector<L0Value> rnd;
    for (int i = 0; i < 5; ++i) rnd.push_back(random_atom_value(rng, space, 3));
    L0Value d = random_diameter(rnd);
    for (std::size_t atom = 0; atom < 4; ++atom) {
        double best = 0.0;
        for (std::size_t i = 0; i < rnd.size(); ++i)
            for (std::size_t j = 0; j < rnd.size(); ++j) {
                double s = 0.0;
                for (std::size_t comp = 0; comp < 3; ++comp) {
                    const double diff = rnd[i].at(atom, comp) - rnd[j].at(atom, comp);
                    s += diff * diff;
                }
                best = std::max(best, std::sqrt(s));
            }
        CHECK(d.at(atom) == doctest::Approx(best));
    }
}

TEST_CASE("nondiametral_midpoint: two and three constant generators") {
    auto space = two_by_two();
    CondNorm norm(2.0, space->partition(0), space);

    const double av[2] = {0.0, 0.0};
    const double bv[2] = {2.0, 0.0};
    std::vector<L0Value> two_gens{L0Value::constant(space, av), L0Value::constant(space, bv)};
    MidpointWitness w = nondiametral_midpoint(two_gens, norm);
    CHECK(w.point.at(0, 0) == doctest::Approx(1.0));
    CHECK(w.point.at(0, 1) == doctest::Approx(0.0));
    CHECK(w.diameter.at(0) == doctest::Approx(2.0));
    CHECK(w.margin.at(0) == doctest::Approx(1.0)); // = D/2
    CHECK(w.positive_on_support);

    std::vector<L0Value> collinear{L0Value::scalar_constant(space, 0.0),
                                   L0Value::scalar_constant(space, 0.5),
                                   L0Value::scalar_constant(space, 1.0)};
    MidpointWitness w3 = nondiametral_midpoint(collinear, norm);
    CHECK(w3.point.at(0) == doctest::Approx(0.5));
    CHECK(w3.margin.at(0) == doctest::Approx(0.5));
}

TEST_CASE("nondiametral_midpoint: random families have positive margin") {
    Rng rng(77);
    for (int rep = 0; rep < 40; ++rep) {
        auto space = random_tree_space(rng);
        const Partition& base = space->partition(1);
        for (double p : {1.5, 2.0, 4.0}) {
            CondNorm norm(p, base, space);
            std::vector<L0Value> gens;
            for (int g = 0; g < 4; ++g) gens.push_back(random_atom_value(rng, space, 2));
            MidpointWitness w = nondiametral_midpoint(gens, norm);
            CHECK(w.positive_on_support);
            // margin computed against an exhaustive pairwise-distance check
            L0Value reach_expected = cond_norm(w.point - gens[0], norm);
            for (std::size_t i = 1; i < gens.size(); ++i) {
                std::vector<L0Value> pair{reach_expected, cond_norm(w.point - gens[i], norm)};
                reach_expected = l0_sup(pair);
            }
            CHECK(max_abs_diff(w.margin, w.diameter - reach_expected) <= 1e-12);
        }
    }
}
