#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "regimelq/backward_systems.hpp"

namespace regimelq {

namespace detail {

/// Integrates node-sampled values over the grid: composite Simpson on
/// uniform grids (even interval count), trapezoid otherwise.
inline double integrate_grid(const std::vector<double>& nodes,
                             const std::vector<double>& values) {
    const std::size_t N = nodes.size() - 1;
    if (N == 0) return 0.0;
    const double h = nodes[1] - nodes[0];
    bool uniform = true;
    for (std::size_t k = 1; k < N && uniform; ++k)
        if (std::abs((nodes[k + 1] - nodes[k]) - h) > 1e-9 * std::max(h, 1e-300))
            uniform = false;
    if (uniform && N % 2 == 0) {
        double s = values[0] + values[N];
        for (std::size_t k = 1; k < N; ++k) s += (k % 2 == 1 ? 4.0 : 2.0) * values[k];
        return s * h / 3.0;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < N; ++k)
        s += 0.5 * (values[k] + values[k + 1]) * (nodes[k + 1] - nodes[k]);
    return s;
}

} // namespace detail

/// Affine optimal feedback u*(t,X,i), with the zero martingale integrands
/// dropped:
///   u* = -(R + P D'D)^{-1} [ (P D'C + P B) X + P D'rho - K B - R p ].
inline Eigen::VectorXd feedback_control(double t, double X, int i,
                                        const RiccatiSolution& ric,
                                        const LinearSolution& K,
                                        const LQData& data) {
    const double P = ric.P.at(t, i);
    const double Kv = K.values.at(t, i);
    const Eigen::VectorXd B = data.B(t, i);
    const Eigen::MatrixXd D = data.D(t, i);
    const Eigen::VectorXd v = P * (D.transpose() * data.C(t, i) + B) * X +
                              P * (D.transpose() * data.rho(t, i)) - Kv * B -
                              data.R(t, i) * data.p(t, i);
    return -detail::solve_gain(data.R(t, i), D, P, v, t);
}

/// Closed-loop evaluator bundling the solved systems with the data.
struct FeedbackLaw {
    const RiccatiSolution* ric;
    const LinearSolution* K;
    const LQData* data;

    Eigen::VectorXd operator()(double t, double X, int i) const {
        return feedback_control(t, X, i, *ric, *K, *data);
    }
};

struct LQValueReport {
    double value = 0.0;
    double quadraticTerm = 0.0; // P(0,i0) x^2  (or P0 (x-h0)^2 in h form)
    double linearTerm = 0.0;    // -2 K(0,i0) x (0 in h form)
    double terminalTerm = 0.0;  // E[G g^2]     (0 in h form)
    double runningIntegral = 0.0;
};

/// Optimal value through P and K:
///   V = P0 x^2 - 2 K0 x + E[G g^2] + int_0^T E[source penalty] dt,
/// with the chain expectation taken under the occupation law started at i0.
inline LQValueReport lq_optimal_value(double x, int i0, const RiccatiSolution& ric,
                                      const LinearSolution& K, const LQData& data,
                                      const RegimeGenerator& gen) {
    detail::require_same_grid(ric.grid, K.grid, "lq_optimal_value");
    const int ell = data.numRegimes;
    const auto& nodes = ric.grid.nodes;

    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(ell);
    p0(i0) = 1.0;
    const auto occ = occupation_distribution(gen, p0, nodes);

    std::vector<double> integrand(nodes.size(), 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double t = nodes[k];
        double s = 0.0;
        for (int i = 0; i < ell; ++i) {
            const double P = ric.P.node(k, i);
            const double Kv = K.values.node(k, i);
            const Eigen::VectorXd rho = data.rho(t, i);
            const Eigen::VectorXd p = data.p(t, i);
            const Eigen::MatrixXd R = data.R(t, i);
            const Eigen::MatrixXd D = data.D(t, i);
            const double q = data.qTarget(t, i);
            const Eigen::VectorXd v =
                D.transpose() * (P * rho) - Kv * data.B(t, i) - R * p;
            const double quad = v.dot(detail::solve_gain(R, D, P, v, t));
            s += occ[k](i) * (P * rho.squaredNorm() - 2.0 * Kv * data.b(t, i) +
                              data.Qcost(t, i) * q * q + p.dot(R * p) - quad);
        }
        integrand[k] = s;
    }

    LQValueReport rep;
    rep.quadraticTerm = ric.P.node(0, i0) * x * x;
    rep.linearTerm = -2.0 * K.values.node(0, i0) * x;
    for (int i = 0; i < ell; ++i)
        rep.terminalTerm += occ.back()(i) * data.G[i] * data.g[i] * data.g[i];
    rep.runningIntegral = detail::integrate_grid(nodes, integrand);
    rep.value =
        rep.quadraticTerm + rep.linearTerm + rep.terminalTerm + rep.runningIntegral;
    return rep;
}

/// Optimal value through the h representation:
///   V = P0 (x - h0)^2 + int_0^T E[hedge residual + jump penalty] dt.
inline LQValueReport lq_value_h_form(double x, int i0, const RiccatiSolution& ric,
                                     const LinearSolution& h, const LQData& data,
                                     const RegimeGenerator& gen) {
    detail::require_same_grid(ric.grid, h.grid, "lq_value_h_form");
    const int ell = data.numRegimes;
    const auto& nodes = ric.grid.nodes;

    Eigen::VectorXd p0 = Eigen::VectorXd::Zero(ell);
    p0(i0) = 1.0;
    const auto occ = occupation_distribution(gen, p0, nodes);
    const Eigen::MatrixXd In =
        Eigen::MatrixXd::Identity(data.numNoise, data.numNoise);

    std::vector<double> integrand(nodes.size(), 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double t = nodes[k];
        double s = 0.0;
        for (int i = 0; i < ell; ++i) {
            const double P = ric.P.node(k, i);
            const double hv = h.values.node(k, i);
            const Eigen::VectorXd rho = data.rho(t, i);
            const Eigen::VectorXd C = data.C(t, i);
            const Eigen::MatrixXd D = data.D(t, i);
            const Eigen::MatrixXd R = data.R(t, i);
            const Eigen::VectorXd p = data.p(t, i);
            const double Q = data.Qcost(t, i);
            const double q = data.qTarget(t, i);

            const Eigen::VectorXd u = rho + hv * C; // n
            // columns of M^{-1} applied where needed, M = R + P D'D
            Eigen::MatrixXd MinvDt(D.cols(), D.rows());
            for (Eigen::Index c = 0; c < D.rows(); ++c)
                MinvDt.col(c) =
                    detail::solve_gain(R, D, P, D.transpose() * In.col(c), t);
            const Eigen::MatrixXd proj = In - P * D * MinvDt; // I - P D M^{-1} D'
            const Eigen::VectorXd MinvRp = detail::solve_gain(R, D, P, R * p, t);

            double jump = 0.0;
            for (int j = 0; j < ell; ++j) {
                const double dh = hv - h.values.node(k, j);
                jump += gen.rate(i, j) * ric.P.node(k, j) * dh * dh;
            }

            s += occ[k](i) *
                 (Q * (hv - q) * (hv - q) + P * u.dot(proj * u) +
                  p.dot(R * p - R * MinvRp) + 2.0 * P * u.dot(D * MinvRp) + jump);
        }
        integrand[k] = s;
    }

    LQValueReport rep;
    const double h0 = h.values.node(0, i0);
    rep.quadraticTerm = ric.P.node(0, i0) * (x - h0) * (x - h0);
    rep.runningIntegral = detail::integrate_grid(nodes, integrand);
    rep.value = rep.quadraticTerm + rep.runningIntegral;
    return rep;
}

} // namespace regimelq
