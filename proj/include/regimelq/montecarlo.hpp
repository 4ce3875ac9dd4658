#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "regimelq/mv_alm.hpp"

namespace regimelq {

struct SimConfig {
    std::size_t numPaths = 10000;
    std::size_t timeSteps = 200;
    std::uint64_t seed = 1;
    bool antithetic = false;
    /// Separate seed for the Brownian streams; unset means same as seed.
    /// Chain streams always derive from seed, so changing this leaves the
    /// sampled chain paths unchanged.
    std::optional<std::uint64_t> brownianSeed;
};

struct SimOutcome {
    double meanXT = 0.0;
    double varXT = 0.0;
    double seMean = 0.0;
    double seVar = 0.0;
    double costJ = 0.0;  // J_hat estimate when a cost target is given
    double seCost = 0.0;
    std::size_t pathsUsed = 0;
};

/// Optional terminal cost target: J_hat = E[(X(T) - (lambda+z))^2] - lambda^2.
struct CostTarget {
    double lambda = 0.0;
    double z = 0.0;
};

using FeedbackFn = std::function<Eigen::VectorXd(double t, double X, int regime)>;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Per-path stream keyed by (seed, pathIndex, role); independent of
/// scheduling order by construction.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t path,
                                   std::uint64_t role) {
    std::uint64_t s = splitmix64(seed ^ splitmix64(path ^ splitmix64(role)));
    return std::mt19937_64(s);
}

constexpr std::uint64_t kChainRole = 0x636861696eULL;  // "chain"
constexpr std::uint64_t kNoiseRole = 0x6e6f697365ULL;  // "noise"

/// Euler grid for one path: uniform steps with the chain's jump times
/// inserted exactly, so no step straddles a regime change.
inline std::vector<double> path_times(double horizon, std::size_t steps,
                                      const ChainPath& chain) {
    std::vector<double> t;
    t.reserve(steps + 1 + chain.jumpTimes.size());
    for (std::size_t k = 0; k <= steps; ++k)
        t.push_back(horizon * static_cast<double>(k) / static_cast<double>(steps));
    for (double j : chain.jumpTimes)
        if (j < horizon) t.push_back(j);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end(),
                        [horizon](double a, double b) {
                            return std::abs(a - b) <= 1e-15 * std::max(1.0, horizon);
                        }),
            t.end());
    t.back() = horizon;
    return t;
}

/// Advances one or two states (antithetic partner) along a single chain path
/// with shared Gaussian increments. lawB may be null (single state).
template <class Rng>
void evolve_pair(const MVALMData& data, const ChainPath& chain,
                 const std::vector<double>& times, Rng& noise,
                 const FeedbackFn& lawA, const FeedbackFn* lawB, double& xA,
                 double& xB, bool antitheticB, std::size_t pathIndex) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = data.numNoise;
    Eigen::VectorXd zvec(n);
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double t = times[k];
        const double dt = times[k + 1] - t;
        const double sq = std::sqrt(dt);
        const int regime = chain.state_at(t);
        for (int j = 0; j < n; ++j) zvec(j) = gauss(noise) * sq;

        const double r = data.r(t, regime);
        const double b = data.b(t, regime);
        const Eigen::VectorXd mu = data.mu(t, regime);
        const Eigen::MatrixXd sigma = data.sigma(t, regime);
        const Eigen::VectorXd rho = data.rho(t, regime);

        {
            const Eigen::VectorXd pi = lawA(t, xA, regime);
            const Eigen::VectorXd diff = sigma.transpose() * pi + rho;
            xA += (r * xA + pi.dot(mu) + b) * dt + diff.dot(zvec);
        }
        if (lawB) {
            const Eigen::VectorXd pi = (*lawB)(t, xB, regime);
            const Eigen::VectorXd diff = sigma.transpose() * pi + rho;
            const double noiseTerm = antitheticB ? -diff.dot(zvec) : diff.dot(zvec);
            xB += (r * xB + pi.dot(mu) + b) * dt + noiseTerm;
        }
        if (!std::isfinite(xA) || (lawB && !std::isfinite(xB)))
            throw SimulationError("simulated state became non-finite", pathIndex,
                                  times[k + 1]);
    }
}

/// Deterministic pairwise reduction; result independent of how the values
/// were produced across threads.
inline double pairwise_sum(const std::vector<double>& v, std::size_t lo,
                           std::size_t hi) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (std::size_t k = lo; k < hi; ++k) s += v[k];
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& v) {
    return v.empty() ? 0.0 : pairwise_sum(v, 0, v.size());
}

template <class Work>
void parallel_paths(std::size_t count, Work&& work) {
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t numThreads = std::max(1u, hw);
    numThreads = std::min<std::size_t>(numThreads, count);
    if (numThreads <= 1) {
        for (std::size_t k = 0; k < count; ++k) work(k);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr firstError;
    std::mutex errMutex;
    for (std::size_t t = 0; t < numThreads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t k = t; k < count; k += numThreads) work(k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(errMutex);
                if (!firstError) firstError = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (firstError) std::rethrow_exception(firstError);
}

inline SimOutcome summarize(const std::vector<double>& xT,
                            const std::vector<double>& cost,
                            std::optional<CostTarget> target, bool antithetic) {
    const std::size_t n = xT.size();
    SimOutcome out;
    out.pathsUsed = n;
    const double dn = static_cast<double>(n);
    out.meanXT = pairwise_sum(xT) / dn;

    std::vector<double> c2(n), c4(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double d = xT[k] - out.meanXT;
        c2[k] = d * d;
        c4[k] = d * d * d * d;
    }
    const double m2 = pairwise_sum(c2) / dn;
    const double m4 = pairwise_sum(c4) / dn;
    out.varXT = m2 * dn / (dn - 1.0);
    if (antithetic) {
        // pairs are negatively correlated by construction; the honest
        // standard error of the mean comes from the independent pair means
        const std::size_t np = n / 2;
        std::vector<double> pm(np);
        for (std::size_t k = 0; k < np; ++k)
            pm[k] = 0.5 * (xT[2 * k] + xT[2 * k + 1]);
        const double meanP = pairwise_sum(pm) / static_cast<double>(np);
        double s = 0.0;
        for (double v : pm) s += (v - meanP) * (v - meanP);
        out.seMean = np > 1 ? std::sqrt(s / (np - 1.0) / np) : 0.0;
    } else {
        out.seMean = std::sqrt(out.varXT / dn);
    }
    // fourth-moment delta method for the variance estimator
    const double varOfVar =
        std::max(0.0, m4 - (dn - 3.0) / (dn - 1.0) * m2 * m2) / dn;
    out.seVar = std::sqrt(varOfVar);

    if (target) {
        const double meanC = pairwise_sum(cost) / dn;
        out.costJ = meanC - target->lambda * target->lambda;
        double s = 0.0;
        for (double c : cost) s += (c - meanC) * (c - meanC);
        out.seCost = std::sqrt(s / (dn - 1.0) / dn);
    }
    return out;
}

} // namespace detail

/// Euler simulation of the controlled surplus under an arbitrary feedback
/// law, with exact chain paths and jump-aligned steps.
inline SimOutcome simulate_wealth_paths(const MVALMData& data,
                                        const RegimeGenerator& gen,
                                        const FeedbackFn& law,
                                        const SimConfig& cfg,
                                        std::optional<CostTarget> target = {}) {
    if (cfg.numPaths < 2) throw DomainError("numPaths must be at least 2");
    if (cfg.timeSteps < 1) throw DomainError("timeSteps must be at least 1");
    if (cfg.antithetic && cfg.numPaths % 2 != 0)
        throw DomainError("antithetic sampling needs an even number of paths");
    const std::uint64_t noiseSeed = cfg.brownianSeed.value_or(cfg.seed);

    std::vector<double> xT(cfg.numPaths, 0.0);
    std::vector<double> cost(cfg.numPaths, 0.0);
    const std::size_t units = cfg.antithetic ? cfg.numPaths / 2 : cfg.numPaths;

    detail::parallel_paths(units, [&](std::size_t u) {
        auto chainRng = detail::make_stream(cfg.seed, u, detail::kChainRole);
        auto noiseRng = detail::make_stream(noiseSeed, u, detail::kNoiseRole);
        const ChainPath chain =
            sample_chain_path(gen, data.i0, data.horizon, chainRng);
        const auto times = detail::path_times(data.horizon, cfg.timeSteps, chain);
        double xA = data.x0, xB = data.x0;
        if (cfg.antithetic) {
            detail::evolve_pair(data, chain, times, noiseRng, law, &law, xA, xB,
                                true, u);
            xT[2 * u] = xA;
            xT[2 * u + 1] = xB;
        } else {
            detail::evolve_pair(data, chain, times, noiseRng, law, nullptr, xA, xB,
                                false, u);
            xT[u] = xA;
        }
    });

    if (target) {
        const double center = target->lambda + target->z;
        for (std::size_t k = 0; k < cfg.numPaths; ++k)
            cost[k] = (xT[k] - center) * (xT[k] - center);
    }
    return detail::summarize(xT, cost, target, cfg.antithetic);
}

struct FrontierVerification {
    double z = 0.0;
    double meanXT = 0.0, seMean = 0.0;
    double varXT = 0.0, seVar = 0.0;
    double analyticVar = 0.0;
    double meanBand = 0.0;      // 3 se
    double varBand = 0.0;       // 3 se + discretization allowance
    bool meanPass = false;
    bool varPass = false;
    bool pass = false;
};

/// Simulates the optimal portfolio at the data's target z and checks the
/// moments against the analytic frontier.
inline FrontierVerification verify_frontier(const MVALMData& data,
                                            const RegimeGenerator& gen,
                                            const FrontierReport& frontier,
                                            const LinearSolution& h1,
                                            const LinearSolution& h2,
                                            const SimConfig& cfg) {
    const double z = data.z;
    FeedbackFn law = [&](double t, double X, int i) {
        return mv_feedback(t, X, i, data, h1, h2, frontier.lambdaStar, z);
    };
    const SimOutcome out = simulate_wealth_paths(
        data, gen, law, cfg, CostTarget{frontier.lambdaStar, z});

    FrontierVerification rep;
    rep.z = z;
    rep.meanXT = out.meanXT;
    rep.seMean = out.seMean;
    rep.varXT = out.varXT;
    rep.seVar = out.seVar;
    rep.analyticVar = frontier.variance_at(z);
    rep.meanBand = 3.0 * out.seMean;
    rep.varBand = 3.0 * out.seVar +
                  5.0 * rep.analyticVar / static_cast<double>(cfg.timeSteps);
    rep.meanPass = std::abs(out.meanXT - z) <= rep.meanBand;
    rep.varPass = std::abs(out.varXT - rep.analyticVar) <= rep.varBand;
    rep.pass = rep.meanPass && rep.varPass;
    return rep;
}

struct PerturbationResult {
    double costOptimal = 0.0;
    double costPerturbed = 0.0;
    double meanDiff = 0.0; // J_hat(perturbed) - J_hat(optimal), paired
    double seDiff = 0.0;
    bool nonnegative = false;      // meanDiff >= -3 se
    bool strictlyPositive = false; // meanDiff > +3 se
};

/// Common-random-numbers comparison of the optimal law against perturbed
/// laws pi* + eps*v; optimality shows up as nonnegative paired cost gaps.
inline std::vector<PerturbationResult> perturbation_optimality_check(
    const MVALMData& data, const RegimeGenerator& gen, const LinearSolution& h1,
    const LinearSolution& h2, double lambdaStar, const SimConfig& cfg,
    const std::vector<FeedbackFn>& perturbations, double eps) {
    if (eps <= 0.0) throw DomainError("perturbation size eps must be positive");
    const double z = data.z;
    const double center = lambdaStar + z;
    FeedbackFn base = [&](double t, double X, int i) {
        return mv_feedback(t, X, i, data, h1, h2, lambdaStar, z);
    };

    std::vector<PerturbationResult> results;
    results.reserve(perturbations.size());
    for (const auto& v : perturbations) {
        FeedbackFn pert = [&](double t, double X, int i) {
            return (base(t, X, i) + eps * v(t, X, i)).eval();
        };
        std::vector<double> diff(cfg.numPaths), cBase(cfg.numPaths),
            cPert(cfg.numPaths);
        detail::parallel_paths(cfg.numPaths, [&](std::size_t u) {
            auto chainRng = detail::make_stream(cfg.seed, u, detail::kChainRole);
            auto noiseRng = detail::make_stream(
                cfg.brownianSeed.value_or(cfg.seed), u, detail::kNoiseRole);
            const ChainPath chain =
                sample_chain_path(gen, data.i0, data.horizon, chainRng);
            const auto times =
                detail::path_times(data.horizon, cfg.timeSteps, chain);
            double xA = data.x0, xB = data.x0;
            detail::evolve_pair(data, chain, times, noiseRng, base, &pert, xA, xB,
                                false, u);
            cBase[u] = (xA - center) * (xA - center);
            cPert[u] = (xB - center) * (xB - center);
            diff[u] = cPert[u] - cBase[u];
        });
        const double dn = static_cast<double>(cfg.numPaths);
        PerturbationResult r;
        r.costOptimal =
            detail::pairwise_sum(cBase) / dn - lambdaStar * lambdaStar;
        r.costPerturbed =
            detail::pairwise_sum(cPert) / dn - lambdaStar * lambdaStar;
        r.meanDiff = detail::pairwise_sum(diff) / dn;
        double s = 0.0;
        for (double d : diff) s += (d - r.meanDiff) * (d - r.meanDiff);
        r.seDiff = std::sqrt(s / (dn - 1.0) / dn);
        r.nonnegative = r.meanDiff >= -3.0 * r.seDiff;
        r.strictlyPositive = r.meanDiff > 3.0 * r.seDiff;
        results.push_back(r);
    }
    return results;
}

} // namespace regimelq
