#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_configs.hpp"

using namespace regimelq;

namespace {

FeedbackFn zero_law(int m) {
    return [m](double, double, int) { return Eigen::VectorXd::Zero(m).eval(); };
}

struct Pipeline {
    RegimeGenerator gen;
    BackwardGrid grid;
    RiccatiSolution ric;
    LinearSolution h1;
    LinearSolution h2;
    FrontierReport frontier;
};

Pipeline pipeline(const MVALMData& data, const Eigen::MatrixXd& q,
                  std::size_t steps = 2000) {
    RegimeGenerator gen(q);
    auto grid = BackwardGrid::uniform(data.horizon, steps);
    auto ric = solve_riccati(mv_to_lq(data, 0.0), gen, grid);
    auto [h1, h2] = solve_h_systems(data, gen, ric, grid);
    auto fr = efficient_frontier(data, gen, ric, h1, h2, grid);
    return {std::move(gen), std::move(grid), std::move(ric), std::move(h1),
            std::move(h2), fr};
}

} // namespace

TEST_CASE("uncontrolled driftless surplus never moves") {
    auto data = cfg::mv_single(0.0, 0.2, 0.3, 0.0, 0.0);
    RegimeGenerator gen(cfg::gen1());
    SimConfig cfg;
    cfg.numPaths = 1000;
    cfg.timeSteps = 50;
    auto out = simulate_wealth_paths(data, gen, zero_law(1), cfg);
    CHECK(out.meanXT == doctest::Approx(1.0));
    CHECK(out.varXT == 0.0);
    CHECK(out.pathsUsed == 1000);
}

TEST_CASE("uncontrolled surplus grows at the riskless rate") {
    auto data = cfg::mv_single(); // b = rho = 0
    RegimeGenerator gen(cfg::gen1());
    SimConfig cfg;
    cfg.numPaths = 1000;
    cfg.timeSteps = 400;
    auto out = simulate_wealth_paths(data, gen, zero_law(1), cfg);
    // deterministic path: only Euler bias separates it from e^{rT}
    CHECK(std::abs(out.meanXT - std::exp(0.05)) <= 1e-4);
    CHECK(out.varXT <= 1e-20);
}

TEST_CASE("witness portfolio hits the expectation target") {
    auto data = cfg::mv_two();
    RegimeGenerator gen(cfg::gen2());
    auto grid = cfg::grid_for(data, 1000);
    auto psi = solve_feasibility_psi(data, gen, grid);
    auto feas = feasibility_metric(data, gen, psi, grid);
    const double beta = feas.witnessBeta(data.z);

    FeedbackFn witness = [&](double t, double, int i) {
        return (beta * psi.values.at(t, i) * data.mu(t, i)).eval();
    };
    SimConfig cfg;
    cfg.numPaths = 40000;
    cfg.timeSteps = 200;
    cfg.seed = 11;
    auto out = simulate_wealth_paths(data, gen, witness, cfg);
    CHECK(std::abs(out.meanXT - data.z) <= 3.0 * out.seMean + 1e-3);
}

TEST_CASE("identical configurations reproduce bit-identical outcomes") {
    auto data = cfg::mv_two();
    auto p = pipeline(data, cfg::gen2(), 500);
    FeedbackFn law = [&](double t, double X, int i) {
        return mv_feedback(t, X, i, data, p.h1, p.h2, p.frontier.lambdaStar,
                           data.z);
    };
    SimConfig cfg;
    cfg.numPaths = 5000;
    cfg.timeSteps = 100;
    cfg.seed = 42;
    auto a = simulate_wealth_paths(data, p.gen, law, cfg);
    auto b = simulate_wealth_paths(data, p.gen, law, cfg);
    CHECK(a.meanXT == b.meanXT);
    CHECK(a.varXT == b.varXT);
    CHECK(a.seMean == b.seMean);
    CHECK(a.seVar == b.seVar);
}

TEST_CASE("antithetic pairing does not hurt the mean estimate") {
    auto data = cfg::mv_single();
    auto p = pipeline(data, cfg::gen1(), 500);
    FeedbackFn law = [&](double t, double X, int i) {
        return mv_feedback(t, X, i, data, p.h1, p.h2, p.frontier.lambdaStar,
                           data.z);
    };
    SimConfig plain;
    plain.numPaths = 20000;
    plain.timeSteps = 100;
    plain.seed = 5;
    SimConfig anti = plain;
    anti.antithetic = true;
    auto outPlain = simulate_wealth_paths(data, p.gen, law, plain);
    auto outAnti = simulate_wealth_paths(data, p.gen, law, anti);
    CHECK(outAnti.seMean <= outPlain.seMean);
}

TEST_CASE("chain streams are independent of the Brownian seed") {
    // noise-free payoff: with law = 0 and rho = 0, X(T) depends only on
    // the regime path through the rate table
    auto data = cfg::mv_two_noliab();
    RegimeGenerator gen(cfg::gen2());
    SimConfig base;
    base.numPaths = 2000;
    base.timeSteps = 50;
    base.seed = 3;
    SimConfig swapped = base;
    swapped.brownianSeed = 777;
    auto a = simulate_wealth_paths(data, gen, zero_law(1), base);
    auto b = simulate_wealth_paths(data, gen, zero_law(1), swapped);
    CHECK(a.meanXT == b.meanXT);
    CHECK(a.varXT == b.varXT);

    SimConfig reseeded = base;
    reseeded.seed = 4;
    auto c = simulate_wealth_paths(data, gen, zero_law(1), reseeded);
    CHECK(a.meanXT != c.meanXT);
}

TEST_CASE("input validation") {
    auto data = cfg::mv_single();
    RegimeGenerator gen(cfg::gen1());
    SimConfig cfg;
    cfg.numPaths = 1;
    CHECK_THROWS_AS(simulate_wealth_paths(data, gen, zero_law(1), cfg),
                    DomainError);
    cfg.numPaths = 3;
    cfg.antithetic = true;
    CHECK_THROWS_AS(simulate_wealth_paths(data, gen, zero_law(1), cfg),
                    DomainError);
}

TEST_CASE("frontier verification passes on the closed-form configuration") {
    auto data = cfg::mv_single();
    auto p = pipeline(data, cfg::gen1());
    SimConfig cfg;
    cfg.numPaths = 50000;
    cfg.timeSteps = 200;
    cfg.seed = 21;
    auto rep = verify_frontier(data, p.gen, p.frontier, p.h1, p.h2, cfg);
    CHECK(rep.pass);
    CHECK(std::abs(rep.meanXT - data.z) <= rep.meanBand);
    CHECK(std::abs(rep.varXT - rep.analyticVar) <= rep.varBand);
}

TEST_CASE("Euler bias shrinks as the step count doubles") {
    auto data = cfg::mv_single();
    auto p = pipeline(data, cfg::gen1());
    const double analytic = p.frontier.variance_at(data.z);
    FeedbackFn law = [&](double t, double X, int i) {
        return mv_feedback(t, X, i, data, p.h1, p.h2, p.frontier.lambdaStar,
                           data.z);
    };
    SimConfig cfg;
    cfg.numPaths = 60000;
    cfg.seed = 31;

    double prevGap = 0.0, prevSe = 0.0;
    int violations = 0;
    bool first = true;
    for (std::size_t steps : {25, 50, 100, 200}) {
        cfg.timeSteps = steps;
        auto out = simulate_wealth_paths(data, p.gen, law, cfg);
        const double gap = std::abs(out.varXT - analytic);
        if (!first && gap > prevGap + prevSe) ++violations;
        prevGap = gap;
        prevSe = out.seVar;
        first = false;
    }
    CHECK(violations <= 1);
}

TEST_CASE("zero perturbation leaves the paired cost gap at exactly zero") {
    auto data = cfg::mv_single();
    auto p = pipeline(data, cfg::gen1(), 500);
    SimConfig cfg;
    cfg.numPaths = 2000;
    cfg.timeSteps = 50;
    std::vector<FeedbackFn> perts = {zero_law(1)};
    auto results = perturbation_optimality_check(
        data, p.gen, p.h1, p.h2, p.frontier.lambdaStar, cfg, perts, 0.1);
    REQUIRE(results.size() == 1);
    CHECK(results[0].meanDiff == 0.0);
    CHECK(results[0].seDiff == 0.0);
    CHECK(results[0].nonnegative);
}

TEST_CASE("constant perturbation strictly increases the relaxed cost") {
    auto data = cfg::mv_single();
    auto p = pipeline(data, cfg::gen1(), 500);
    SimConfig cfg;
    cfg.numPaths = 50000;
    cfg.timeSteps = 100;
    cfg.seed = 17;
    std::vector<FeedbackFn> perts = {
        [](double, double, int) { return cfg::v1(1.0).eval(); }};
    auto results = perturbation_optimality_check(
        data, p.gen, p.h1, p.h2, p.frontier.lambdaStar, cfg, perts, 0.1);
    REQUIRE(results.size() == 1);
    CHECK(results[0].nonnegative);
    CHECK(results[0].strictlyPositive);
}
