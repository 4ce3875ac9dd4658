#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "regimelq/coefficients.hpp"
#include "regimelq/errors.hpp"

namespace regimelq {

/// Tolerance used by all semidefiniteness tests on user-supplied tables.
inline constexpr double kPsdTolerance = 1e-10;

/// Coefficients of the general regime-switching LQ problem.
///
/// State dX = [A X + B'u + b]dt + [C'X + u'D' + rho']dW with running cost
/// Q(X-q)^2 + (u-p)'R(u-p) and terminal cost G(X-g)^2, all per regime.
struct LQData {
    double horizon;
    int numRegimes;
    int numAssets; // m
    int numNoise;  // n

    ScalarTable A;
    VectorTable B;    // m
    VectorTable C;    // n
    MatrixTable D;    // n x m
    ScalarTable b;
    VectorTable rho;  // n
    ScalarTable Qcost;
    ScalarTable qTarget;
    MatrixTable R;    // m x m, symmetric
    VectorTable p;    // m
    std::vector<double> G; // per-regime terminal weight
    std::vector<double> g; // per-regime terminal target
    double delta;     // ellipticity constant
};

/// Mean-variance asset-liability problem data.
///
/// Surplus dX = [r X + pi'mu + b]dt + [pi'sigma + rho']dW, target E[X(T)] = z.
struct MVALMData {
    double horizon;
    int numRegimes;
    int numAssets; // m
    int numNoise;  // n

    ScalarTable r;
    VectorTable mu;    // m
    MatrixTable sigma; // m x n
    ScalarTable b;
    VectorTable rho;   // n

    double x0;
    int i0;
    double z;
    double delta;
};

enum class AssumptionCase { Standard, Singular, Both, Neither };

inline const char* to_string(AssumptionCase c) {
    switch (c) {
        case AssumptionCase::Standard: return "standard";
        case AssumptionCase::Singular: return "singular";
        case AssumptionCase::Both: return "both";
        default: return "neither";
    }
}

struct ValidationReport {
    AssumptionCase which = AssumptionCase::Neither;
    bool fatal = true;
    double minEigR = 0.0;      // min over grid/regimes of lambda_min(R)
    double minEigDtD = 0.0;    // min over grid/regimes of lambda_min(D'D)
    double minQ = 0.0;
    double minG = 0.0;
    std::string message;
};

namespace detail {

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

/// Union of the time grids of all tables in an LQData, so node-wise checks
/// see every sampled value.
inline std::vector<double> check_times(const LQData& d) {
    std::vector<double> t;
    auto add = [&t](const std::vector<double>& g) {
        t.insert(t.end(), g.begin(), g.end());
    };
    add(d.A.grid()); add(d.B.grid()); add(d.C.grid()); add(d.D.grid());
    add(d.b.grid()); add(d.rho.grid()); add(d.Qcost.grid());
    add(d.qTarget.grid()); add(d.R.grid()); add(d.p.grid());
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
}

} // namespace detail

/// Checks which case of the standing positivity assumption holds, node-wise
/// via minimum-eigenvalue tests. "Neither" is fatal for every solver here.
inline ValidationReport validate_lq_assumptions(const LQData& data) {
    if (data.numAssets > data.numNoise)
        throw StructuralError("m > n: more risky assets than noise dimensions");
    if (data.delta <= 0.0)
        throw StructuralError("ellipticity constant delta must be positive");
    if (static_cast<int>(data.G.size()) != data.numRegimes ||
        static_cast<int>(data.g.size()) != data.numRegimes)
        throw StructuralError("terminal data G,g must have one entry per regime");

    ValidationReport rep;
    rep.minEigR = std::numeric_limits<double>::infinity();
    rep.minEigDtD = std::numeric_limits<double>::infinity();
    rep.minQ = std::numeric_limits<double>::infinity();
    rep.minG = *std::min_element(data.G.begin(), data.G.end());

    const auto times = detail::check_times(data);
    for (int i = 0; i < data.numRegimes; ++i) {
        for (double t : times) {
            const Eigen::MatrixXd R = data.R(t, i);
            if (R.rows() != data.numAssets || R.cols() != data.numAssets)
                throw StructuralError("R has wrong dimensions");
            if ((R - R.transpose()).cwiseAbs().maxCoeff() > kPsdTolerance)
                throw StructuralError("R is not symmetric");
            const Eigen::MatrixXd D = data.D(t, i);
            if (D.rows() != data.numNoise || D.cols() != data.numAssets)
                throw StructuralError("D has wrong dimensions");
            rep.minEigR = std::min(rep.minEigR, detail::min_eigenvalue(R));
            rep.minEigDtD =
                std::min(rep.minEigDtD, detail::min_eigenvalue(D.transpose() * D));
            rep.minQ = std::min(rep.minQ, data.Qcost(t, i));
        }
    }

    const double tol = kPsdTolerance;
    const bool qOk = rep.minQ >= -tol;
    const bool gOk = rep.minG >= data.delta - tol;
    const bool standard = qOk && gOk && rep.minEigR >= data.delta - tol;
    const bool singular =
        qOk && gOk && rep.minEigR >= -tol && rep.minEigDtD >= data.delta - tol;

    if (standard && singular) rep.which = AssumptionCase::Both;
    else if (standard) rep.which = AssumptionCase::Standard;
    else if (singular) rep.which = AssumptionCase::Singular;
    else rep.which = AssumptionCase::Neither;
    rep.fatal = rep.which == AssumptionCase::Neither;

    std::ostringstream msg;
    msg << "case=" << to_string(rep.which) << " min_eig(R)=" << rep.minEigR
        << " min_eig(D'D)=" << rep.minEigDtD << " min Q=" << rep.minQ
        << " min G=" << rep.minG << " delta=" << data.delta;
    rep.message = msg.str();
    return rep;
}

struct MVValidationReport {
    bool ok = false;
    double minEigSigmaSigmaT = 0.0;
    /// Largest delta the data would support (diagnostic only).
    double deltaSuggested = 0.0;
    /// min(delta, 1): the terminal weight G = 1 caps the usable delta.
    double deltaEffective = 0.0;
    std::string message;
};

/// Checks the uniform ellipticity sigma*sigma' >= delta*I at every node.
inline MVValidationReport validate_mv_data(const MVALMData& data) {
    if (data.numAssets > data.numNoise)
        throw StructuralError("m > n: more risky assets than noise dimensions");
    if (data.delta <= 0.0)
        throw StructuralError("ellipticity constant delta must be positive");
    if (data.i0 < 0 || data.i0 >= data.numRegimes)
        throw DomainError("initial regime out of range");

    MVValidationReport rep;
    rep.minEigSigmaSigmaT = std::numeric_limits<double>::infinity();
    std::vector<double> times = data.sigma.grid();
    for (int i = 0; i < data.numRegimes; ++i)
        for (double t : times) {
            const Eigen::MatrixXd s = data.sigma(t, i);
            if (s.rows() != data.numAssets || s.cols() != data.numNoise)
                throw StructuralError("sigma has wrong dimensions");
            rep.minEigSigmaSigmaT = std::min(
                rep.minEigSigmaSigmaT, detail::min_eigenvalue(s * s.transpose()));
        }
    rep.deltaSuggested = rep.minEigSigmaSigmaT;
    rep.deltaEffective = std::min(data.delta, 1.0);
    rep.ok = rep.minEigSigmaSigmaT >= data.delta - kPsdTolerance;
    std::ostringstream msg;
    msg << "min_eig(sigma*sigma')=" << rep.minEigSigmaSigmaT
        << " delta=" << data.delta << " delta_effective=" << rep.deltaEffective;
    if (!rep.ok) msg << " -- ellipticity assumption violated";
    rep.message = msg.str();
    return rep;
}

namespace detail {

template <class Value>
CoefficientTable<Value> zero_like(const CoefficientTable<double>& shape,
                                  const Value& zero) {
    std::vector<std::vector<Value>> values(
        shape.numRegimes(), std::vector<Value>(shape.grid().size(), zero));
    return CoefficientTable<Value>(shape.grid(), std::move(values),
                                   shape.interpolation());
}

inline MatrixTable transpose_table(const MatrixTable& src) {
    std::vector<std::vector<Eigen::MatrixXd>> values(src.numRegimes());
    for (int i = 0; i < src.numRegimes(); ++i) {
        values[i].reserve(src.grid().size());
        for (std::size_t k = 0; k < src.grid().size(); ++k)
            values[i].push_back(src.node(k, i).transpose());
    }
    return MatrixTable(src.grid(), std::move(values), src.interpolation());
}

} // namespace detail

/// Embeds the mean-variance problem relaxed at multiplier lambda into the
/// general LQ problem: A=r, B=mu, C=0, D=sigma', Q=q=R=p=0, G=1, g=lambda+z.
/// Only g depends on lambda.
inline LQData mv_to_lq(const MVALMData& data, double lambda) {
    const Eigen::VectorXd zeroN = Eigen::VectorXd::Zero(data.numNoise);
    const Eigen::VectorXd zeroM = Eigen::VectorXd::Zero(data.numAssets);
    const Eigen::MatrixXd zeroMM =
        Eigen::MatrixXd::Zero(data.numAssets, data.numAssets);
    return LQData{
        data.horizon,
        data.numRegimes,
        data.numAssets,
        data.numNoise,
        data.r,
        data.mu,
        detail::zero_like(data.r, zeroN),
        detail::transpose_table(data.sigma), // D = sigma' (n x m)
        data.b,
        data.rho,
        detail::zero_like(data.r, 0.0),
        detail::zero_like(data.r, 0.0),
        detail::zero_like(data.r, zeroMM),
        detail::zero_like(data.r, zeroM),
        std::vector<double>(data.numRegimes, 1.0),
        std::vector<double>(data.numRegimes, lambda + data.z),
        std::min(data.delta, 1.0)};
}

} // namespace regimelq
