#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "regimelq/lq_core.hpp"

namespace regimelq {

/// Below this the expectation target is declared unreachable.
inline constexpr double kFeasibilityTolerance = 1e-12;

struct FeasibilityReport {
    double metric = 0.0;   // int E[ psi^2 |mu|^2 ] dt
    bool feasible = false;
    double EX0T = 0.0;     // E[X(T)] of the uncontrolled surplus
    /// Scale for the witness portfolio pi(t) = beta * psi(t,i) mu(t,i)
    /// that hits E[X(T)] = z.
    double witnessBeta(double z) const {
        if (!feasible)
            throw InfeasibilityError("feasibility metric is zero: target "
                                     "expectation unreachable");
        return (z - EX0T) / metric;
    }
};

/// Evaluates the reachability criterion: the target E[X(T)] = z is attainable
/// for every z iff int E[|psi mu|^2] dt > 0. Also reports E[X^0(T)] from the
/// forward moment system m_i' = r m_i + b p_i + sum_j q_ji m_j.
inline FeasibilityReport feasibility_metric(const MVALMData& data,
                                            const RegimeGenerator& gen,
                                            const LinearSolution& psi,
                                            const BackwardGrid& grid) {
    detail::require_same_grid(psi.grid, grid, "feasibility_metric");
    const int ell = data.numRegimes;
    const auto& nodes = grid.nodes;

    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(ell);
    p0(data.i0) = 1.0;
    const auto occ = occupation_distribution(gen, p0, nodes);

    std::vector<double> integrand(nodes.size(), 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        double s = 0.0;
        for (int i = 0; i < ell; ++i) {
            const double ps = psi.values.node(k, i);
            s += occ[k](i) * ps * ps * data.mu(nodes[k], i).squaredNorm();
        }
        integrand[k] = s;
    }

    FeasibilityReport rep;
    rep.metric = detail::integrate_grid(nodes, integrand);
    rep.feasible = rep.metric > kFeasibilityTolerance;

    // joint forward system for (p, m), m_i(t) = E[X^0(t) 1{alpha_t = i}]
    const Eigen::MatrixXd Qt = gen.matrix().transpose();
    Eigen::VectorXd y0 = Eigen::VectorXd::Zero(2 * ell);
    y0(data.i0) = 1.0;
    y0(ell + data.i0) = data.x0;
    auto rhs = [&](double t, const Eigen::VectorXd& y) {
        const Eigen::VectorXd p = y.head(ell);
        const Eigen::VectorXd m = y.tail(ell);
        Eigen::VectorXd dy(2 * ell);
        dy.head(ell) = Qt * p;
        for (int i = 0; i < ell; ++i)
            dy(ell + i) = data.r(t, i) * m(i) + data.b(t, i) * p(i) +
                          Qt.row(i).dot(m);
        return dy;
    };
    const auto fwd = integrate_forward(rhs, y0, grid);
    rep.EX0T = fwd.back().tail(ell).sum();
    return rep;
}

struct MConstants {
    double M1 = 0.0;
    double M2 = 0.0;
    double M3 = 0.0;
};

/// Jump-risk and unhedgeable-liability constants of the frontier. With the
/// martingale integrands zero, only the chain-jump quadratic forms and the
/// rho projection onto the unhedgeable subspace survive.
inline MConstants compute_M_constants(const MVALMData& data,
                                      const RegimeGenerator& gen,
                                      const RiccatiSolution& ric,
                                      const LinearSolution& h1,
                                      const LinearSolution& h2,
                                      const BackwardGrid& grid) {
    detail::require_same_grid(ric.grid, grid, "compute_M_constants");
    detail::require_same_grid(h1.grid, grid, "compute_M_constants");
    detail::require_same_grid(h2.grid, grid, "compute_M_constants");
    const int ell = data.numRegimes;
    const auto& nodes = grid.nodes;

    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(ell);
    p0(data.i0) = 1.0;
    const auto occ = occupation_distribution(gen, p0, nodes);

    std::vector<double> f1(nodes.size()), f2(nodes.size()), f3(nodes.size());
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double t = nodes[k];
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (int i = 0; i < ell; ++i) {
            double j1 = 0.0, j2 = 0.0, j3 = 0.0;
            for (int j = 0; j < ell; ++j) {
                const double Pj = ric.P.node(k, j);
                const double d1 = h1.values.node(k, i) - h1.values.node(k, j);
                const double d2 = h2.values.node(k, i) - h2.values.node(k, j);
                j1 += gen.rate(i, j) * Pj * d2 * d2;
                j2 += gen.rate(i, j) * Pj * d1 * d2;
                j3 += gen.rate(i, j) * Pj * d1 * d1;
            }
            const Eigen::MatrixXd sigma = data.sigma(t, i);
            const Eigen::VectorXd rho = data.rho(t, i);
            const Eigen::LDLT<Eigen::MatrixXd> ssT(sigma * sigma.transpose());
            const Eigen::VectorXd proj =
                rho - sigma.transpose() * ssT.solve(sigma * rho);
            const double rhoResidual = ric.P.node(k, i) * rho.dot(proj);
            s1 += occ[k](i) * j1;
            s2 += occ[k](i) * j2;
            s3 += occ[k](i) * (j3 + rhoResidual);
        }
        f1[k] = s1; f2[k] = s2; f3[k] = s3;
    }
    return {detail::integrate_grid(nodes, f1), detail::integrate_grid(nodes, f2),
            detail::integrate_grid(nodes, f3)};
}

/// Unique maximizer of the concave dual lambda -> min_pi J_hat(pi, lambda).
inline double lambda_star(double P0, double h10, double h20, double M1, double M2,
                          double x, double z) {
    const double a = P0 * h20 * h20 + M1;
    if (!(a > 0.0) || !(a < 1.0))
        throw FrontierDomainError("P0*h20^2 + M1 = " + std::to_string(a) +
                                  " outside (0,1)");
    return (M2 + a * z - P0 * h20 * (x - h10)) / (1.0 - a);
}

struct FrontierReport {
    double P0 = 0.0, h10 = 0.0, h20 = 0.0;
    double M1 = 0.0, M2 = 0.0, M3 = 0.0;
    double lambdaStar = 0.0;
    double slope = 0.0;   // (P0 h20^2 + M1) / (1 - P0 h20^2 - M1)
    double vertexZ = 0.0; // expectation with minimal variance
    double baseVar = 0.0; // variance at the vertex
    double feasibilityMetric = 0.0;

    double variance_at(double z) const {
        return slope * (z - vertexZ) * (z - vertexZ) + baseVar;
    }
};

/// Assembles the mean-variance frontier Var(z) = slope (z - vertexZ)^2 + baseVar
/// at the data's target z. Enforces feasibility and the domain bound
/// 0 < P0 h20^2 + M1 < 1.
inline FrontierReport efficient_frontier(const MVALMData& data,
                                         const RegimeGenerator& gen,
                                         const RiccatiSolution& ric,
                                         const LinearSolution& h1,
                                         const LinearSolution& h2,
                                         const BackwardGrid& grid) {
    const auto psi = solve_feasibility_psi(data, gen, grid);
    const auto feas = feasibility_metric(data, gen, psi, grid);
    if (!feas.feasible)
        throw InfeasibilityError(
            "expectation target unreachable: feasibility metric = " +
            std::to_string(feas.metric));

    const auto M = compute_M_constants(data, gen, ric, h1, h2, grid);
    FrontierReport rep;
    rep.P0 = ric.P.node(0, data.i0);
    rep.h10 = h1.values.node(0, data.i0);
    rep.h20 = h2.values.node(0, data.i0);
    rep.M1 = M.M1;
    rep.M2 = M.M2;
    rep.M3 = M.M3;
    rep.feasibilityMetric = feas.metric;

    const double a = rep.P0 * rep.h20 * rep.h20 + rep.M1;
    if (!(a > 0.0) || !(a < 1.0))
        throw FrontierDomainError("P0*h20^2 + M1 = " + std::to_string(a) +
                                  " outside (0,1)");
    rep.lambdaStar =
        lambda_star(rep.P0, rep.h10, rep.h20, rep.M1, rep.M2, data.x0, data.z);
    rep.slope = a / (1.0 - a);
    const double xh = data.x0 - rep.h10;
    rep.vertexZ = (rep.P0 * rep.h20 * xh - rep.M2) / a;
    const double num = rep.M2 - rep.P0 * rep.h20 * xh;
    rep.baseVar = -num * num / a + rep.M3 + rep.P0 * xh * xh;
    return rep;
}

/// Mean-variance optimal portfolio in feedback form:
///   pi*(t,X,i) = -(sigma sigma')^{-1} [ mu (X - h1 - (lambda*+z) h2) + sigma rho ].
inline Eigen::VectorXd mv_feedback(double t, double X, int i, const MVALMData& data,
                                   const LinearSolution& h1,
                                   const LinearSolution& h2, double lambdaStar,
                                   double z) {
    const Eigen::MatrixXd sigma = data.sigma(t, i);
    const Eigen::LDLT<Eigen::MatrixXd> ssT(sigma * sigma.transpose());
    if (ssT.info() != Eigen::Success || ssT.vectorD().minCoeff() <= 0.0)
        throw GainSingularityError("sigma*sigma' not invertible at t=" +
                                   std::to_string(t));
    const double target =
        h1.values.at(t, i) + (lambdaStar + z) * h2.values.at(t, i);
    const Eigen::VectorXd v =
        data.mu(t, i) * (X - target) + sigma * data.rho(t, i);
    return -ssT.solve(v);
}

/// Value of the relaxed problem min_pi J_hat(pi, lambda), K solved with
/// terminal lambda + z.
inline double relaxed_value(const MVALMData& data, const RegimeGenerator& gen,
                            const RiccatiSolution& ric, const LinearSolution& K,
                            const BackwardGrid& grid, double lambda) {
    detail::require_same_grid(ric.grid, grid, "relaxed_value");
    detail::require_same_grid(K.grid, grid, "relaxed_value");
    const int ell = data.numRegimes;
    const auto& nodes = grid.nodes;

    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(ell);
    p0(data.i0) = 1.0;
    const auto occ = occupation_distribution(gen, p0, nodes);

    std::vector<double> integrand(nodes.size(), 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double t = nodes[k];
        double s = 0.0;
        for (int i = 0; i < ell; ++i) {
            const double P = ric.P.node(k, i);
            const double Kv = K.values.node(k, i);
            const Eigen::MatrixXd sigma = data.sigma(t, i);
            const Eigen::VectorXd rho = data.rho(t, i);
            const Eigen::VectorXd mu = data.mu(t, i);
            const Eigen::LDLT<Eigen::MatrixXd> ssT(sigma * sigma.transpose());
            const Eigen::VectorXd v = P * (sigma * rho) - Kv * mu;
            s += occ[k](i) * (P * rho.squaredNorm() -
                              2.0 * Kv * data.b(t, i) - v.dot(ssT.solve(v)) / P);
        }
        integrand[k] = s;
    }

    const double lz = lambda + data.z;
    return ric.P.node(0, data.i0) * data.x0 * data.x0 -
           2.0 * K.values.node(0, data.i0) * data.x0 + lz * lz - lambda * lambda +
           detail::integrate_grid(nodes, integrand);
}

/// Convenience: solve K for the given multiplier, then evaluate the dual.
inline double relaxed_value_at(const MVALMData& data, const RegimeGenerator& gen,
                               const RiccatiSolution& ric, const BackwardGrid& grid,
                               double lambda) {
    const LQData lq = mv_to_lq(data, lambda);
    const auto K = solve_linear_K(lq, gen, ric, grid);
    return relaxed_value(data, gen, ric, K, grid, lambda);
}

/// Golden-section maximization of the dual over a bracketing interval.
inline double maximize_dual(const MVALMData& data, const RegimeGenerator& gen,
                            const RiccatiSolution& ric, const BackwardGrid& grid,
                            double lo, double hi, double tol = 1e-9) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    double fc = relaxed_value_at(data, gen, ric, grid, c);
    double fd = relaxed_value_at(data, gen, ric, grid, d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d; d = c; fd = fc;
            c = b - gr * (b - a);
            fc = relaxed_value_at(data, gen, ric, grid, c);
        } else {
            a = c; c = d; fc = fd;
            d = a + gr * (b - a);
            fd = relaxed_value_at(data, gen, ric, grid, d);
        }
    }
    return std::max(fc, fd);
}

} // namespace regimelq
