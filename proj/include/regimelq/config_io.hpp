#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "regimelq/backward_systems.hpp"
#include "regimelq/market_model.hpp"
#include "regimelq/regime_chain.hpp"

namespace regimelq {

/// Parse failures carry enough location context for an exit-2 diagnostic.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A fully parsed problem document.
struct MVConfig {
    MVALMData data;
    Eigen::MatrixXd generator;
    Interp interpolation = Interp::PiecewiseConstantLeft;
};

namespace detail {

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline double require_number(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_number())
        throw ParseError("missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

inline int require_int(const nlohmann::json& j, const std::string& key) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw ParseError("missing or non-integer field '" + key + "'");
    return j[key].get<int>();
}

template <class Value, class Reader>
CoefficientTable<Value> parse_table(const nlohmann::json& coeffs,
                                    const std::string& name, double horizon,
                                    int regimes, Interp interp, Reader readValue) {
    if (!coeffs.contains(name))
        throw ParseError("missing coefficient '" + name + "'");
    const auto& spec = coeffs[name];

    std::vector<double> grid;
    std::vector<std::vector<Value>> values(regimes);
    if (spec.contains("constant")) {
        const auto& c = spec["constant"];
        if (!c.is_array() || static_cast<int>(c.size()) != regimes)
            throw ParseError("coefficient '" + name +
                             "': 'constant' needs one entry per regime");
        grid = {0.0, horizon};
        for (int i = 0; i < regimes; ++i) {
            Value v = readValue(c[i], name);
            values[i] = {v, v};
        }
    } else {
        if (!spec.contains("grid") || !spec.contains("values"))
            throw ParseError("coefficient '" + name +
                             "' needs 'grid' and 'values' (or 'constant')");
        for (const auto& t : spec["grid"]) {
            if (!t.is_number())
                throw ParseError("coefficient '" + name + "': non-numeric grid node");
            grid.push_back(t.get<double>());
        }
        const auto& vals = spec["values"];
        if (!vals.is_array() || static_cast<int>(vals.size()) != regimes)
            throw ParseError("coefficient '" + name +
                             "': 'values' needs one array per regime");
        for (int i = 0; i < regimes; ++i) {
            if (vals[i].size() != grid.size())
                throw ParseError("coefficient '" + name + "': regime " +
                                 std::to_string(i) +
                                 " needs one value per grid node");
            for (const auto& v : vals[i]) values[i].push_back(readValue(v, name));
        }
    }
    try {
        return CoefficientTable<Value>(std::move(grid), std::move(values), interp);
    } catch (const StructuralError& e) {
        throw ParseError("coefficient '" + name + "': " + e.what());
    }
}

inline double read_scalar(const nlohmann::json& v, const std::string& name) {
    if (!v.is_number())
        throw ParseError("coefficient '" + name + "': expected a number");
    return v.get<double>();
}

inline Eigen::VectorXd read_vector(const nlohmann::json& v, const std::string& name,
                                   int dim) {
    if (v.is_number() && dim == 1) {
        Eigen::VectorXd out(1);
        out(0) = v.get<double>();
        return out;
    }
    if (!v.is_array() || static_cast<int>(v.size()) != dim)
        throw ParseError("coefficient '" + name + "': expected an array of " +
                         std::to_string(dim) + " numbers");
    Eigen::VectorXd out(dim);
    for (int k = 0; k < dim; ++k) out(k) = v[k].get<double>();
    return out;
}

inline Eigen::MatrixXd read_matrix(const nlohmann::json& v, const std::string& name,
                                   int rows, int cols) {
    if (v.is_number() && rows == 1 && cols == 1) {
        Eigen::MatrixXd out(1, 1);
        out(0, 0) = v.get<double>();
        return out;
    }
    if (!v.is_array() || static_cast<int>(v.size()) != rows)
        throw ParseError("coefficient '" + name + "': expected a " +
                         std::to_string(rows) + "x" + std::to_string(cols) +
                         " matrix");
    Eigen::MatrixXd out(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const auto& row = v[r];
        if (!row.is_array() || static_cast<int>(row.size()) != cols)
            throw ParseError("coefficient '" + name + "': row " +
                             std::to_string(r) + " needs " + std::to_string(cols) +
                             " entries");
        for (int c = 0; c < cols; ++c) out(r, c) = row[c].get<double>();
    }
    return out;
}

} // namespace detail

inline MVConfig parse_mv_config(const nlohmann::json& j) {
    const double horizon = detail::require_number(j, "horizon");
    const int regimes = detail::require_int(j, "regimes");
    const int assets = detail::require_int(j, "assets");
    const int noise = detail::require_int(j, "noise");
    if (horizon <= 0.0) throw ParseError("horizon must be positive");
    if (regimes < 1) throw ParseError("regimes must be at least 1");
    if (assets < 1 || noise < 1)
        throw ParseError("assets and noise must be at least 1");

    Interp interp = Interp::PiecewiseConstantLeft;
    if (j.contains("interpolation")) {
        const std::string m = j["interpolation"].get<std::string>();
        if (m == "piecewise-constant-left")
            interp = Interp::PiecewiseConstantLeft;
        else if (m == "piecewise-linear")
            interp = Interp::PiecewiseLinear;
        else
            throw ParseError("unknown interpolation mode '" + m + "'");
    }

    if (!j.contains("generator") || !j["generator"].is_array())
        throw ParseError("missing generator matrix");
    Eigen::MatrixXd generator =
        detail::read_matrix(j["generator"], "generator", regimes, regimes);

    if (!j.contains("coefficients") || !j["coefficients"].is_object())
        throw ParseError("missing 'coefficients' object");
    const auto& co = j["coefficients"];

    auto scalarTable = [&](const std::string& name) {
        return detail::parse_table<double>(co, name, horizon, regimes, interp,
                                           detail::read_scalar);
    };
    auto vectorTable = [&](const std::string& name, int dim) {
        return detail::parse_table<Eigen::VectorXd>(
            co, name, horizon, regimes, interp,
            [dim](const nlohmann::json& v, const std::string& n) {
                return detail::read_vector(v, n, dim);
            });
    };

    MVALMData data{
        horizon,
        regimes,
        assets,
        noise,
        scalarTable("r"),
        vectorTable("mu", assets),
        detail::parse_table<Eigen::MatrixXd>(
            co, "sigma", horizon, regimes, interp,
            [assets, noise](const nlohmann::json& v, const std::string& n) {
                return detail::read_matrix(v, n, assets, noise);
            }),
        scalarTable("b"),
        vectorTable("rho", noise),
        detail::require_number(j, "x0"),
        detail::require_int(j, "i0"),
        detail::require_number(j, "z"),
        detail::require_number(j, "delta")};

    if (data.i0 < 0 || data.i0 >= regimes)
        throw ParseError("i0 out of range [0, regimes)");
    return MVConfig{std::move(data), std::move(generator), interp};
}

/// Loads a config document; returns the parsed config and the FNV-1a
/// checksum of the raw bytes (for embedding into derived reports).
inline std::pair<MVConfig, std::string> load_mv_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("config parse error: ") + e.what());
    }
    std::ostringstream sum;
    sum << std::hex << std::setfill('0') << std::setw(16) << detail::fnv1a64(bytes);
    return {parse_mv_config(j), sum.str()};
}

/// 17 significant digits: round-trip exact for IEEE doubles.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Solutions export as CSV with columns t, regime, value.
inline void write_field_csv(std::ostream& os, const RegimeField& field) {
    os << "t,regime,value\n";
    for (std::size_t k = 0; k < field.nodes().size(); ++k)
        for (int i = 0; i < field.numRegimes(); ++i)
            os << format_number(field.nodes()[k]) << ',' << i << ','
               << format_number(field.node(k, i)) << '\n';
}

} // namespace regimelq
