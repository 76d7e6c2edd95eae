#include "doctest.h"

#include <cmath>
#include <vector>

#include "bselab/probspace.hpp"

using namespace bselab;

namespace {

SpacePtr two_by_two() {
    std::vector<std::size_t> branching{2, 2};
    return build_space(branching);
}

L0Value scalar(const SpacePtr& space, std::vector<double> v) {
    return L0Value::from_atoms(space, 1, std::move(v));
}

} // namespace

TEST_CASE("build_space: uniform binary tree") {
    auto space = two_by_two();
    REQUIRE(space->atom_count() == 4);
    for (std::size_t a = 0; a < 4; ++a) CHECK(space->weight(a) == doctest::Approx(0.25));
    CHECK(space->partition(0).block_count() == 1);
    CHECK(space->partition(1).block_count() == 2);
    CHECK(space->partition(1).block(0) == std::vector<std::size_t>{0, 1});
    CHECK(space->partition(1).block(1) == std::vector<std::size_t>{2, 3});
    CHECK(space->partition(2) == Partition::discrete(4));
    CHECK(space->dt() == doctest::Approx(0.5));
}

TEST_CASE("build_space: degenerate single-atom space") {
    std::vector<std::size_t> branching{1};
    auto space = build_space(branching);
    CHECK(space->atom_count() == 1);
    CHECK(space->weight(0) == doctest::Approx(1.0));
    CHECK(space->partition(0) == space->partition(1));
}

TEST_CASE("build_space: path-product weights") {
    // Hand enumeration: first step (0.5, 0.3, 0.2), second step uniform over 2.
    std::vector<std::size_t> branching{3, 2};
    auto space = build_space(branching, {{0.5, 0.3, 0.2}, {}});
    REQUIRE(space->atom_count() == 6);
    const std::vector<double> expected{0.25, 0.25, 0.15, 0.15, 0.1, 0.1};
    for (std::size_t a = 0; a < 6; ++a)
        CHECK(space->weight(a) == doctest::Approx(expected[a]).epsilon(1e-14));
}

TEST_CASE("build_space: rejects bad inputs") {
    std::vector<std::size_t> zero{0};
    CHECK_THROWS_AS(build_space(zero), std::invalid_argument);
    std::vector<std::size_t> two{2};
    CHECK_THROWS_AS(build_space(two, {{0.7, 0.2}}), std::invalid_argument);
    CHECK_THROWS_AS(build_space(two, {{1.2, -0.2}}), std::invalid_argument);
}

TEST_CASE("cond_expect: identity on measurable input") {
    auto space = two_by_two();
    L0Value x = scalar(space, {3.0, 3.0, 7.0, 7.0});
    L0Value e = cond_expect(x, space->partition(1));
    CHECK(max_abs_diff(x, e) == 0.0);
}

TEST_CASE("cond_expect: block averages") {
    auto space = two_by_two();
    L0Value x = scalar(space, {1.0, 3.0, 2.0, 6.0});
    L0Value e = cond_expect(x, space->partition(1));
    CHECK(e.at(0) == doctest::Approx(2.0));
    CHECK(e.at(1) == doctest::Approx(2.0));
    CHECK(e.at(2) == doctest::Approx(4.0));
    CHECK(e.at(3) == doctest::Approx(4.0));

    L0Value full = cond_expect(x, space->partition(0));
    CHECK(full.at(0) == doctest::Approx(3.0));
    CHECK(is_measurable(full, space->partition(0)));
}

TEST_CASE("cond_expect: preserves block mass per test vector") {
    std::vector<std::size_t> branching{3, 2};
    auto space = build_space(branching, {{0.5, 0.3, 0.2}, {}});
    L0Value x = L0Value::from_atoms(space, 2,
        {1.0, -2.0, 0.5, 3.0, -1.0, 4.0, 2.5, 0.0, 1.5, -3.0, 0.25, 2.0});
    const Partition& sigma = space->partition(1);
    L0Value e = cond_expect(x, sigma);
    for (std::size_t b = 0; b < sigma.block_count(); ++b) {
        for (std::size_t c = 0; c < 2; ++c) {
            double lhs = 0.0, rhs = 0.0;
            for (std::size_t atom : sigma.block(b)) {
                lhs += space->weight(atom) * x.at(atom, c);
                rhs += space->weight(atom) * e.at(atom, c);
            }
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
        }
    }
}

TEST_CASE("is_measurable") {
    auto space = two_by_two();
    CHECK(is_measurable(L0Value::scalar_constant(space, 5.0), space->partition(2)));
    L0Value x = scalar(space, {1.0, 2.0, 1.0, 1.0});
    CHECK_FALSE(is_measurable(x, space->partition(1)));
    CHECK(is_measurable(cond_expect(x, space->partition(1)), space->partition(1)));
}

TEST_CASE("tower property is exact") {
    std::vector<std::size_t> branching{2, 3, 2};
    auto space = build_space(branching, {{0.6, 0.4}, {0.2, 0.5, 0.3}, {}});
    std::vector<double> vals(space->atom_count());
    for (std::size_t a = 0; a < vals.size(); ++a)
        vals[a] = std::sin(static_cast<double>(a) * 1.3) * 4.0;
    L0Value x = scalar(space, std::move(vals));
    for (std::size_t coarse = 0; coarse < 3; ++coarse) {
        for (std::size_t fine = coarse; fine <= 3; ++fine) {
            L0Value nested = cond_expect(cond_expect(x, space->partition(fine)),
                                         space->partition(coarse));
            L0Value direct = cond_expect(x, space->partition(coarse));
            CHECK(max_abs_diff(nested, direct) <= 1e-12 * (1.0 + max_abs(direct)));
        }
    }
}

TEST_CASE("module property of conditional expectation") {
    auto space = two_by_two();
    L0Value x = scalar(space, {1.0, -3.0, 2.0, 5.0});
    L0Value xi = scalar(space, {2.0, 2.0, -1.0, -1.0}); // partition(1)-measurable
    L0Value lhs = cond_expect(x.scaled_by(xi), space->partition(1));
    L0Value rhs = cond_expect(x, space->partition(1)).scaled_by(xi);
    CHECK(max_abs_diff(lhs, rhs) <= 1e-14);
}

TEST_CASE("conditional Jensen for |.|^p") {
    std::vector<std::size_t> branching{2, 2, 2};
    auto space = build_space(branching);
    std::vector<double> vals(space->atom_count());
    for (std::size_t a = 0; a < vals.size(); ++a)
        vals[a] = std::cos(static_cast<double>(a) * 0.7) * 3.0 - 0.4;
    L0Value x = scalar(space, std::move(vals));
    for (double p : {1.5, 2.0, 3.0}) {
        for (std::size_t level = 0; level <= 2; ++level) {
            const Partition& sigma = space->partition(level);
            L0Value mean = cond_expect(x, sigma);
            L0Value pow_mean = mean.map_scalar([p](double v) { return std::pow(std::abs(v), p); });
            L0Value abs_p = x.map_scalar([p](double v) { return std::pow(std::abs(v), p); });
            L0Value mean_pow = cond_expect(abs_p, sigma);
            for (std::size_t a = 0; a < x.atom_count(); ++a)
                CHECK(pow_mean.at(a) <= mean_pow.at(a) + 1e-12);
        }
    }
}

TEST_CASE("restrict_space renormalizes and keeps the filtration") {
    std::vector<std::size_t> branching{2, 2};
    auto space = build_space(branching, {{0.6, 0.4}, {0.25, 0.75}});
    auto r = restrict_space(space, space->partition(1).block(0));
    REQUIRE(r.sub->atom_count() == 2);
    CHECK(r.sub->weight(0) == doctest::Approx(0.25));
    CHECK(r.sub->weight(1) == doctest::Approx(0.75));
    CHECK(r.sub->partition(0).block_count() == 1);
    CHECK(r.sub->partition(2).block_count() == 2);

    L0Value x = scalar(space, {1.0, 2.0, 3.0, 4.0});
    L0Value rx = restrict_value(x, r);
    CHECK(rx.at(0) == 1.0);
    CHECK(rx.at(1) == 2.0);
}
