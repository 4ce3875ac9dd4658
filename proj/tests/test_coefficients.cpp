#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_configs.hpp"

using namespace regimelq;

TEST_CASE("constant table returns the same value everywhere") {
    auto tab = ScalarTable::constant(2.0, {0.05});
    CHECK(tab(0.0, 0) == 0.05);
    CHECK(tab(1.3, 0) == 0.05);
    CHECK(tab(2.0, 0) == 0.05);
}

TEST_CASE("piecewise-linear interpolation hits the midpoint") {
    ScalarTable tab({0.0, 1.0}, {{1.0, 3.0}}, Interp::PiecewiseLinear);
    CHECK(tab(0.5, 0) == doctest::Approx(2.0));
    CHECK(tab(0.25, 0) == doctest::Approx(1.5));
}

TEST_CASE("piecewise-constant-left holds the previous sample") {
    ScalarTable tab({0.0, 0.5}, {{1.0, 2.0}});
    CHECK(tab(0.49, 0) == 1.0);
    CHECK(tab(0.5, 0) == 2.0);
}

TEST_CASE("evaluation at grid nodes returns the stored samples") {
    ScalarTable linear({0.0, 0.3, 1.0}, {{1.0, -2.0, 5.0}, {0.5, 0.5, 0.5}},
                       Interp::PiecewiseLinear);
    for (int i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < linear.grid().size(); ++k)
            CHECK(linear(linear.grid()[k], i) == linear.node(k, i));
}

TEST_CASE("vector and matrix tables interpolate componentwise") {
    VectorTable vt({0.0, 1.0}, {{cfg::v2(0.0, 2.0), cfg::v2(1.0, 4.0)}},
                   Interp::PiecewiseLinear);
    Eigen::VectorXd mid = vt(0.5, 0);
    CHECK(mid(0) == doctest::Approx(0.5));
    CHECK(mid(1) == doctest::Approx(3.0));

    MatrixTable mt({0.0, 1.0}, {{cfg::m11(1.0), cfg::m11(3.0)}},
                   Interp::PiecewiseLinear);
    CHECK(mt(0.75, 0)(0, 0) == doctest::Approx(2.5));
}

TEST_CASE("malformed tables are rejected") {
    CHECK_THROWS_AS(ScalarTable({0.5, 1.0}, {{1.0, 2.0}}), StructuralError);
    CHECK_THROWS_AS(ScalarTable({0.0, 0.0}, {{1.0, 2.0}}), StructuralError);
    CHECK_THROWS_AS(ScalarTable({0.0, 1.0}, {{1.0}}), StructuralError);
    CHECK_THROWS_AS(ScalarTable({0.0, 1.0}, std::vector<std::vector<double>>{}),
                    StructuralError);
}

TEST_CASE("out-of-range queries are rejected") {
    auto tab = ScalarTable::constant(1.0, {0.05});
    CHECK_THROWS_AS(tab(-0.1, 0), DomainError);
    CHECK_THROWS_AS(tab(1.5, 0), DomainError);
    CHECK_THROWS_AS(tab(0.5, 1), DomainError);
    CHECK_THROWS_AS(tab(0.5, -1), DomainError);
}

TEST_CASE("mv_to_lq embeds the market data") {
    auto data = cfg::mv_single();
    LQData lq = mv_to_lq(data, 0.0);
    CHECK(lq.G[0] == 1.0);
    CHECK(lq.g[0] == data.z);
    CHECK(lq.A(0.5, 0) == data.r(0.5, 0));
    CHECK(lq.B(0.5, 0)(0) == data.mu(0.5, 0)(0));
    CHECK(lq.D(0.5, 0)(0, 0) == data.sigma(0.5, 0)(0, 0)); // scalar transpose
    CHECK(lq.C(0.5, 0).norm() == 0.0);
    CHECK(lq.R(0.5, 0).norm() == 0.0);

    LQData shifted = mv_to_lq(data, -data.z);
    CHECK(shifted.g[0] == 0.0);
    // only the terminal target depends on lambda
    CHECK(shifted.A(0.3, 0) == lq.A(0.3, 0));
    CHECK(shifted.G[0] == lq.G[0]);
}

TEST_CASE("assumption checks classify the standard and singular cases") {
    auto lq = cfg::lq_standard();
    auto rep = validate_lq_assumptions(lq);
    CHECK(rep.which == AssumptionCase::Standard);
    CHECK_FALSE(rep.fatal);

    auto mv = cfg::mv_single();
    auto singular = validate_lq_assumptions(mv_to_lq(mv, 0.0));
    CHECK(singular.which == AssumptionCase::Singular);
    CHECK_FALSE(singular.fatal);

    // R = 0 and D = 0 leaves no usable control channel
    LQData bad = mv_to_lq(mv, 0.0);
    bad.D = MatrixTable::constant(1.0, {cfg::m11(0.0)});
    auto neither = validate_lq_assumptions(bad);
    CHECK(neither.which == AssumptionCase::Neither);
    CHECK(neither.fatal);
}

TEST_CASE("ellipticity validation reports the effective delta") {
    auto data = cfg::mv_single();
    auto rep = validate_mv_data(data);
    CHECK(rep.ok);
    CHECK(rep.minEigSigmaSigmaT == doctest::Approx(0.09));
    CHECK(rep.deltaEffective == doctest::Approx(0.05));

    data.delta = 2.0; // larger than both sigma*sigma' and the unit terminal weight
    auto capped = validate_mv_data(data);
    CHECK_FALSE(capped.ok);
    CHECK(capped.deltaEffective == 1.0);
}
