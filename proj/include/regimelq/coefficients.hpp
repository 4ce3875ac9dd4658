#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regimelq/errors.hpp"

namespace regimelq {

/// How sampled coefficient values are extended between grid nodes.
enum class Interp {
    PiecewiseConstantLeft, ///< value at the greatest node <= t
    PiecewiseLinear
};

inline const char* to_string(Interp m) {
    return m == Interp::PiecewiseConstantLeft ? "piecewise-constant-left"
                                              : "piecewise-linear";
}

/// Per-regime time-sampled coefficient on a shared grid spanning [0,T].
///
/// Value is double, Eigen::VectorXd or Eigen::MatrixXd. Values are stored
/// regime-major: values[i][k] is the sample for regime i at grid node k.
/// Immutable after construction.
template <class Value>
class CoefficientTable {
public:
    CoefficientTable(std::vector<double> grid,
                     std::vector<std::vector<Value>> values,
                     Interp interp = Interp::PiecewiseConstantLeft)
        : grid_(std::move(grid)), values_(std::move(values)), interp_(interp) {
        if (grid_.size() < 1)
            throw StructuralError("coefficient grid is empty");
        if (grid_.front() != 0.0)
            throw StructuralError("coefficient grid must start at 0");
        for (std::size_t k = 1; k < grid_.size(); ++k)
            if (!(grid_[k] > grid_[k - 1]))
                throw StructuralError("coefficient grid not strictly increasing");
        if (values_.empty())
            throw StructuralError("coefficient table has no regimes");
        for (const auto& regimeSamples : values_)
            if (regimeSamples.size() != grid_.size())
                throw StructuralError(
                    "coefficient table needs exactly one value per grid node");
    }

    /// Constant-in-time table: one value per regime, valid on [0,T].
    static CoefficientTable constant(double horizon, std::vector<Value> perRegime) {
        std::vector<std::vector<Value>> values;
        values.reserve(perRegime.size());
        for (auto& v : perRegime) values.push_back({v, v});
        return CoefficientTable({0.0, horizon}, std::move(values),
                                Interp::PiecewiseConstantLeft);
    }

    int numRegimes() const { return static_cast<int>(values_.size()); }
    double horizon() const { return grid_.back(); }
    const std::vector<double>& grid() const { return grid_; }
    Interp interpolation() const { return interp_; }

    /// Sample stored at grid node k for regime i.
    const Value& node(std::size_t k, int i) const { return values_.at(i).at(k); }

    /// Interpolated value at time t for regime i.
    Value operator()(double t, int i) const {
        if (i < 0 || i >= numRegimes())
            throw DomainError("regime index " + std::to_string(i) + " out of range");
        if (t < 0.0 || t > grid_.back() * (1.0 + 1e-12) + 1e-300)
            throw DomainError("time " + std::to_string(t) + " outside [0,T]");
        t = std::min(t, grid_.back());
        const auto& samples = values_[i];
        if (grid_.size() == 1) return samples[0];
        // index of greatest node <= t
        auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
        std::size_t k = static_cast<std::size_t>(it - grid_.begin()) - 1;
        if (k + 1 == grid_.size()) return samples[k];
        if (interp_ == Interp::PiecewiseConstantLeft) return samples[k];
        double w = (t - grid_[k]) / (grid_[k + 1] - grid_[k]);
        return samples[k] + w * (samples[k + 1] - samples[k]);
    }

private:
    std::vector<double> grid_;
    std::vector<std::vector<Value>> values_;
    Interp interp_;
};

using ScalarTable = CoefficientTable<double>;
using VectorTable = CoefficientTable<Eigen::VectorXd>;
using MatrixTable = CoefficientTable<Eigen::MatrixXd>;

} // namespace regimelq
