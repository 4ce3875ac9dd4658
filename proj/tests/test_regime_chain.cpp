#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "test_configs.hpp"

using namespace regimelq;

TEST_CASE("generator validation") {
    CHECK_NOTHROW(validate_generator(cfg::gen2(1.0, 2.0)));
    CHECK_NOTHROW(validate_generator(cfg::gen1()));

    Eigen::MatrixXd bad(2, 2);
    bad << -1.0, 0.5, 1.0, -1.0;
    CHECK_THROWS_AS(validate_generator(bad), GeneratorError);

    bad << -1.0, -1.0, 1.0, -1.0;
    CHECK_THROWS_AS(validate_generator(bad), GeneratorError);

    CHECK_THROWS_AS(validate_generator(Eigen::MatrixXd::Zero(2, 3)),
                    GeneratorError);
}

static std::vector<double> uniform_nodes(double T, std::size_t steps) {
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
        t[k] = T * static_cast<double>(k) / static_cast<double>(steps);
    return t;
}

TEST_CASE("occupation law of the degenerate single-regime chain") {
    RegimeGenerator gen(cfg::gen1());
    auto occ = occupation_distribution(gen, cfg::v1(1.0), uniform_nodes(1.0, 10));
    for (const auto& p : occ) CHECK(p(0) == doctest::Approx(1.0));
}

TEST_CASE("symmetric two-state chain matches the closed form") {
    RegimeGenerator gen(cfg::gen2(1.0, 1.0));
    auto occ =
        occupation_distribution(gen, cfg::v2(1.0, 0.0), uniform_nodes(1.0, 100));
    // p1(t) = (1 + e^{-2t}) / 2
    const double expected = 0.5 * (1.0 + std::exp(-2.0));
    CHECK(occ.back()(0) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("stationary start stays stationary") {
    RegimeGenerator gen(cfg::gen2(1.0, 2.0)); // stationary (2/3, 1/3)
    auto occ = occupation_distribution(gen, cfg::v2(2.0 / 3.0, 1.0 / 3.0),
                                       uniform_nodes(2.0, 50));
    for (const auto& p : occ) {
        CHECK(p(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-10));
        CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("occupation law agrees with the matrix exponential") {
    RegimeGenerator gen(cfg::gen3());
    Eigen::VectorXd p0(3);
    p0 << 1.0, 0.0, 0.0;
    const auto nodes = uniform_nodes(1.0, 100);
    auto occ = occupation_distribution(gen, p0, nodes);
    for (std::size_t k = 0; k < nodes.size(); k += 20) {
        Eigen::VectorXd oracle =
            cfg::expm(nodes[k] * gen.matrix().transpose()) * p0;
        CHECK((occ[k] - oracle).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("invalid initial distributions are rejected") {
    RegimeGenerator gen(cfg::gen2());
    CHECK_THROWS_AS(occupation_distribution(gen, cfg::v2(0.7, 0.7), {0.0, 1.0}),
                    ProbabilityError);
    CHECK_THROWS_AS(occupation_distribution(gen, cfg::v1(1.0), {0.0, 1.0}),
                    ProbabilityError);
}

TEST_CASE("single regime and absorbing states never jump") {
    std::mt19937_64 rng(7);
    RegimeGenerator one(cfg::gen1());
    auto path = sample_chain_path(one, 0, 5.0, rng);
    CHECK(path.jumpTimes.empty());
    CHECK(path.states == std::vector<int>{0});

    Eigen::MatrixXd q(2, 2);
    q << 0.0, 0.0, 1.0, -1.0; // state 0 absorbing
    RegimeGenerator absorbing(q);
    auto stay = sample_chain_path(absorbing, 0, 5.0, rng);
    CHECK(stay.jumpTimes.empty());
    CHECK(stay.state_at(4.9) == 0);
}

TEST_CASE("state_at respects right continuity") {
    ChainPath path{{0.5, 1.5}, {0, 1, 2}};
    CHECK(path.state_at(0.0) == 0);
    CHECK(path.state_at(0.4999) == 0);
    CHECK(path.state_at(0.5) == 1);
    CHECK(path.state_at(1.5) == 2);
    CHECK(path.state_at(2.0) == 2);
}

TEST_CASE("empirical jump count matches the intensity integral") {
    // symmetric unit-rate chain: E[number of jumps on [0,1]] = 1
    RegimeGenerator gen(cfg::gen2(1.0, 1.0));
    const std::size_t n = 100000;
    std::mt19937_64 rng(12345);
    double sum = 0.0, sumSq = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        auto path = sample_chain_path(gen, 0, 1.0, rng);
        const double c = static_cast<double>(path.jumpTimes.size());
        sum += c;
        sumSq += c * c;
    }
    const double mean = sum / n;
    const double var = (sumSq - n * mean * mean) / (n - 1.0);
    const double se = std::sqrt(var / n);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
}

TEST_CASE("empirical state frequencies match the occupation law") {
    RegimeGenerator gen(cfg::gen3());
    const double T = 1.0;
    const std::size_t n = 100000;
    std::mt19937_64 rng(99);
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
        auto path = sample_chain_path(gen, 0, T, rng);
        counts(path.state_at(T)) += 1.0;
    }
    Eigen::VectorXd p0(3);
    p0 << 1.0, 0.0, 0.0;
    auto occ = occupation_distribution(gen, p0, uniform_nodes(T, 100));
    for (int i = 0; i < 3; ++i) {
        const double p = occ.back()(i);
        const double se = std::sqrt(p * (1.0 - p) / n);
        CHECK(std::abs(counts(i) / n - p) <= 3.0 * se);
    }
}
