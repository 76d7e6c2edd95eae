#include "doctest.h"

#include <cmath>
#include <vector>

#include "bselab/gexp.hpp"

using namespace bselab;

namespace {

WalkBasis short_walk(std::size_t steps, double horizon) {
    WalkSpec spec;
    spec.steps = steps;
    spec.horizon = horizon;
    return build_walk_basis(spec);
}

/// Independent cross-check for the linear driver g = mu z. From the one-step
/// relations Y_k = E_k[Y_next] + mu Z_k dt and Y_next - E_k[Y_next] = Z_k dW,
/// the backward recursion is averaging under the tilted kernel 1 + mu dW.
L0Value tilted_expectation(double mu, const L0Value& xi, const WalkBasis& basis,
                           std::size_t t0) {
    const SpacePtr& space = basis.space;
    L0Value value = xi;
    for (std::size_t k = space->step_count(); k-- > t0;) {
        const Partition& now = space->partition(k);
        std::vector<double> data(space->atom_count());
        for (std::size_t b = 0; b < now.block_count(); ++b) {
            const auto& node = now.block(b);
            double acc = 0.0, mass = 0.0;
            for (std::size_t atom : node) {
                const double dw = basis.walk.at(k + 1).at(atom) - basis.walk.at(k).at(atom);
                const double w = space->weight(atom) * (1.0 + mu * dw);
                acc += w * value.at(atom);
                mass += w;
            }
            for (std::size_t atom : node) data[atom] = acc / mass;
        }
        value = L0Value(space, 1, std::move(data), now);
    }
    return value;
}

} // namespace

TEST_CASE("g_expectation: zero driver recovers conditional expectation") {
    WalkBasis basis = short_walk(3, 0.3);
    Rng rng(3);
    L0Value xi = random_atom_value(rng, basis.space);
    GDriver zero;
    zero.start_index = 1;
    L0Value got = g_expectation(zero, xi, basis);
    CHECK(max_abs_diff(got, cond_expect_at(xi, 1)) <= 1e-12);
}

TEST_CASE("g_expectation: start-measurable data is a fixed value for z-only drivers") {
    WalkBasis basis = short_walk(3, 0.3);
    GDriver g;
    g.form = GDriver::Form::abs_z;
    g.kappa = 0.3;
    g.start_index = 1;
    L0Value xi = L0Value(basis.space, 1, {2.0, 2.0, 2.0, 2.0, -1.0, -1.0, -1.0, -1.0},
                         basis.space->partition(1));
    L0Value got = g_expectation(g, xi, basis);
    CHECK(max_abs_diff(got, xi) <= 1e-11);
}

TEST_CASE("g_expectation: linear driver equals the tilted-measure average") {
    WalkBasis basis = short_walk(4, 0.5);
    Rng rng(7);
    for (double mu : {0.25, -0.2}) {
        GDriver g;
        g.mu = mu;
        g.start_index = 0;
        L0Value xi = random_atom_value(rng, basis.space);
        L0Value got = g_expectation(g, xi, basis);
        L0Value oracle = tilted_expectation(mu, xi, basis, 0);
        CHECK(max_abs_diff(got, oracle) <= 1e-9);
    }
}

TEST_CASE("g_risk_measure: base data, translation invariance, kink bounds") {
    WalkBasis basis = short_walk(3, 0.3);
    const std::size_t t0 = 1;
    Rng rng(11);

    GDriver kink;
    kink.form = GDriver::Form::abs_z;
    kink.kappa = 0.3;
    kink.start_index = t0;

    // start-measurable xi: rho(xi) = -xi
    L0Value flat = L0Value(basis.space, 1, {1.5, 1.5, 1.5, 1.5, -2.0, -2.0, -2.0, -2.0},
                           basis.space->partition(t0));
    RiskMeasureResult base_case = g_risk_measure(kink, flat, basis);
    CHECK(max_abs_diff(base_case.value, -1.0 * flat) <= 1e-10);

    L0Value xi = random_atom_value(rng, basis.space);
    RiskMeasureResult res = g_risk_measure(kink, xi, basis);
    CHECK(res.monotone_ok);
    CHECK(res.translation_defect <= 1e-9);

    // the kink dominates both linear drivers with slopes +-kappa
    GDriver up;
    up.mu = kink.kappa;
    up.start_index = t0;
    GDriver down;
    down.mu = -kink.kappa;
    down.start_index = t0;
    L0Value rho_up = g_expectation(up, -1.0 * xi, basis);
    L0Value rho_down = g_expectation(down, -1.0 * xi, basis);
    for (std::size_t a = 0; a < xi.atom_count(); ++a) {
        CHECK(res.value.at(a) >= rho_up.at(a) - 1e-9);
        CHECK(res.value.at(a) >= rho_down.at(a) - 1e-9);
    }

    GDriver with_y;
    with_y.nu = 0.2;
    CHECK_THROWS_AS(g_risk_measure(with_y, xi, basis), std::invalid_argument);
}

TEST_CASE("lipschitz_estimate_check") {
    WalkBasis basis = short_walk(3, 0.15);
    const std::size_t t0 = 0;
    Rng rng(13);
    GDriver g;
    g.form = GDriver::Form::abs_z;
    g.kappa = 0.5;
    g.start_index = t0;

    L0Value xi = random_atom_value(rng, basis.space);
    LipschitzEstimateReport same = lipschitz_estimate_check(g, xi, xi, basis);
    CHECK(same.ok);
    CHECK(same.worst_excess <= 0.0);

    GDriver zero;
    zero.start_index = t0;
    for (int rep = 0; rep < 25; ++rep) {
        L0Value a = random_atom_value(rng, basis.space);
        L0Value b = random_atom_value(rng, basis.space);
        CHECK(lipschitz_estimate_check(zero, a, b, basis).ok);
        CHECK(lipschitz_estimate_check(g, a, b, basis).ok);
    }
}

TEST_CASE("g_stability_check") {
    WalkBasis basis = short_walk(3, 0.3);
    const std::size_t t0 = 1;
    const Partition& base = basis.space->partition(t0);
    Rng rng(17);

    GDriver zero;
    zero.start_index = t0;
    GDriver kink;
    kink.form = GDriver::Form::abs_z;
    kink.kappa = 0.3;
    kink.start_index = t0;

    // single block: plain identity
    Partition whole = Partition::trivial(basis.space->atom_count());
    std::vector<L0Value> one{random_atom_value(rng, basis.space)};
    CHECK(g_stability_check(zero, whole, one, basis).ok);

    std::vector<L0Value> xis{random_atom_value(rng, basis.space),
                             random_atom_value(rng, basis.space)};
    CHECK(g_stability_check(zero, base, xis, basis).ok);
    GStabilityReport r = g_stability_check(kink, base, xis, basis);
    CHECK(r.ok);
    CHECK(r.worst <= 1e-9);
}
