#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regimelq/errors.hpp"

namespace regimelq {

/// Validated generator (Q-matrix) of a continuous-time Markov chain.
/// Off-diagonal rates are nonnegative and every row sums to zero.
class RegimeGenerator {
public:
    static constexpr double kRowSumTolerance = 1e-12;

    explicit RegimeGenerator(Eigen::MatrixXd q) : q_(std::move(q)) {
        if (q_.rows() != q_.cols() || q_.rows() < 1)
            throw GeneratorError("generator must be a square matrix");
        for (Eigen::Index i = 0; i < q_.rows(); ++i) {
            double rowSum = 0.0;
            for (Eigen::Index j = 0; j < q_.cols(); ++j) {
                if (i != j && q_(i, j) < 0.0)
                    throw GeneratorError("negative off-diagonal rate q[" +
                                         std::to_string(i) + "][" +
                                         std::to_string(j) + "]");
                rowSum += q_(i, j);
            }
            if (std::abs(rowSum) > kRowSumTolerance)
                throw GeneratorError("row " + std::to_string(i) +
                                     " sums to " + std::to_string(rowSum) +
                                     ", expected 0");
        }
    }

    int numRegimes() const { return static_cast<int>(q_.rows()); }
    const Eigen::MatrixXd& matrix() const { return q_; }
    double rate(int i, int j) const { return q_(i, j); }

private:
    Eigen::MatrixXd q_;
};

inline RegimeGenerator validate_generator(const Eigen::MatrixXd& q) {
    return RegimeGenerator(q);
}

/// One sampled chain trajectory. The state is right-continuous and constant
/// between jumps; states[0] is the initial regime, states[k] the regime
/// entered at jumpTimes[k-1].
struct ChainPath {
    std::vector<double> jumpTimes; // strictly increasing, in (0,T]
    std::vector<int> states;       // size jumpTimes.size() + 1

    int state_at(double t) const {
        std::size_t k = 0;
        while (k < jumpTimes.size() && jumpTimes[k] <= t) ++k;
        return states[k];
    }
};

/// Occupation law p_i(t) = P(chain at t is i) on the given time nodes,
/// from the forward Kolmogorov equation dp/dt = Q'p integrated by RK4.
inline std::vector<Eigen::VectorXd>
occupation_distribution(const RegimeGenerator& gen, const Eigen::VectorXd& p0,
                        const std::vector<double>& nodes) {
    const int ell = gen.numRegimes();
    if (p0.size() != ell)
        throw ProbabilityError("initial distribution has wrong size");
    if (p0.minCoeff() < -1e-12 || std::abs(p0.sum() - 1.0) > 1e-12)
        throw ProbabilityError("initial distribution not a probability vector");
    if (nodes.empty())
        throw DomainError("occupation_distribution: empty node list");

    const Eigen::MatrixXd Qt = gen.matrix().transpose();
    auto rhs = [&Qt](const Eigen::VectorXd& p) -> Eigen::VectorXd { return Qt * p; };

    std::vector<Eigen::VectorXd> out;
    out.reserve(nodes.size());
    Eigen::VectorXd p = p0;
    out.push_back(p);
    for (std::size_t k = 1; k < nodes.size(); ++k) {
        const double h = nodes[k] - nodes[k - 1];
        if (!(h > 0.0))
            throw DomainError("occupation_distribution: nodes not increasing");
        Eigen::VectorXd k1 = rhs(p);
        Eigen::VectorXd k2 = rhs(p + 0.5 * h * k1);
        Eigen::VectorXd k3 = rhs(p + 0.5 * h * k2);
        Eigen::VectorXd k4 = rhs(p + h * k3);
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (p.minCoeff() < -1e-10 || std::abs(p.sum() - 1.0) > 1e-10)
            throw ProbabilityError(
                "occupation distribution left the probability simplex at t=" +
                std::to_string(nodes[k]));
        out.push_back(p);
    }
    return out;
}

/// Exact path sampling: exponential holding times with rate -q_ii, next
/// state j != i with probability q_ij / (-q_ii). States with q_ii = 0 absorb.
template <class Rng>
ChainPath sample_chain_path(const RegimeGenerator& gen, int i0, double horizon,
                            Rng& rng) {
    if (i0 < 0 || i0 >= gen.numRegimes())
        throw DomainError("initial regime out of range");
    ChainPath path;
    path.states.push_back(i0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    int i = i0;
    double t = 0.0;
    for (;;) {
        const double rate = -gen.rate(i, i);
        if (rate <= 0.0) break; // absorbing
        double u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        t += -std::log(u) / rate;
        if (t >= horizon) break;
        // next state by inverse transform over the jump distribution
        double v = unif(rng) * rate;
        double acc = 0.0;
        int next = -1;
        for (int j = 0; j < gen.numRegimes(); ++j) {
            if (j == i) continue;
            acc += gen.rate(i, j);
            if (v <= acc) { next = j; break; }
        }
        if (next < 0) { // guard against round-off at acc boundary
            for (int j = gen.numRegimes() - 1; j >= 0; --j)
                if (j != i && gen.rate(i, j) > 0.0) { next = j; break; }
        }
        path.jumpTimes.push_back(t);
        path.states.push_back(next);
        i = next;
    }
    return path;
}

} // namespace regimelq
