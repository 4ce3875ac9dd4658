// Command-line front end: validate | frontier | simulate | verify.
//
// Exit codes: 0 success (or inconclusive simulation), 1 domain/assumption
// failure, 2 input error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "regimelq/regimelq.hpp"

namespace {

constexpr const char* kToolVersion = "1.0.0";

using nlohmann::json;
namespace rq = regimelq;

struct CommonOptions {
    std::string configPath;
    std::string outDir = ".";
    std::size_t steps = 2000;
};

struct SimOptions {
    std::size_t paths = 200000;
    std::size_t eulerSteps = 500;
    std::uint64_t seed = 1;
    bool antithetic = false;
    std::optional<double> z;
};

json manifest_json(const CommonOptions& opt, const std::string& command,
                   const std::string& checksum, const SimOptions* sim) {
    json m;
    m["configPath"] = opt.configPath;
    m["command"] = command;
    m["outputDir"] = opt.outDir;
    m["gridSteps"] = opt.steps;
    m["toolVersion"] = kToolVersion;
    m["configChecksum"] = checksum;
    if (sim) {
        m["simConfig"] = {{"paths", sim->paths},
                          {"eulerSteps", sim->eulerSteps},
                          {"seed", sim->seed},
                          {"antithetic", sim->antithetic}};
    }
    return m;
}

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

/// All coefficient-table breakpoints, so the solver grid can align with them.
std::vector<double> table_breakpoints(const rq::MVALMData& d) {
    std::vector<double> bp;
    auto add = [&bp](const std::vector<double>& g) {
        bp.insert(bp.end(), g.begin(), g.end());
    };
    add(d.r.grid()); add(d.mu.grid()); add(d.sigma.grid());
    add(d.b.grid()); add(d.rho.grid());
    return bp;
}

struct Pipeline {
    rq::RegimeGenerator gen;
    rq::BackwardGrid grid;
    rq::RiccatiSolution ric;
    rq::LinearSolution h1;
    rq::LinearSolution h2;
    rq::FrontierReport frontier;
};

Pipeline run_pipeline(const rq::MVConfig& cfg, std::size_t steps) {
    rq::RegimeGenerator gen = rq::validate_generator(cfg.generator);
    const auto mvReport = rq::validate_mv_data(cfg.data);
    if (!mvReport.ok)
        throw rq::StructuralError("ellipticity assumption fails: " +
                                  mvReport.message);
    auto grid = rq::BackwardGrid::aligned(cfg.data.horizon, steps,
                                          table_breakpoints(cfg.data));
    const rq::LQData lq = rq::mv_to_lq(cfg.data, 0.0);
    auto ric = rq::solve_riccati(lq, gen, grid);
    auto [h1, h2] = rq::solve_h_systems(cfg.data, gen, ric, grid);
    auto frontier = rq::efficient_frontier(cfg.data, gen, ric, h1, h2, grid);
    return Pipeline{std::move(gen), std::move(grid), std::move(ric),
                    std::move(h1), std::move(h2), frontier};
}

int cmd_validate(const CommonOptions& opt) {
    auto [cfg, checksum] = rq::load_mv_config(opt.configPath);
    rq::validate_generator(cfg.generator);
    const auto mvReport = rq::validate_mv_data(cfg.data);
    std::cout << "generator: ok\n";
    std::cout << "ellipticity (sigma*sigma' >= delta*I): "
              << (mvReport.ok ? "ok" : "FAIL") << "\n  " << mvReport.message
              << "\n";
    int status = mvReport.ok ? 0 : 1;
    if (mvReport.ok) {
        const auto lqReport = rq::validate_lq_assumptions(rq::mv_to_lq(cfg.data, 0.0));
        std::cout << "LQ embedding: " << rq::to_string(lqReport.which) << " case\n  "
                  << lqReport.message << "\n";
        if (lqReport.fatal) status = 1;
    }
    std::cout << "config checksum: " << checksum << "\n";
    return status;
}

int cmd_frontier(const CommonOptions& opt, const std::string& zGridSpec) {
    auto [cfg, checksum] = rq::load_mv_config(opt.configPath);
    Pipeline pl = run_pipeline(cfg, opt.steps);
    const auto& fr = pl.frontier;

    std::vector<double> zGrid;
    if (!zGridSpec.empty()) {
        std::stringstream ss(zGridSpec);
        std::string item;
        while (std::getline(ss, item, ','))
            zGrid.push_back(std::stod(item));
    } else {
        const double half = 3.0 * std::sqrt(fr.baseVar + 1.0) / fr.slope;
        for (int k = 0; k < 21; ++k)
            zGrid.push_back(fr.vertexZ - half + 2.0 * half * k / 20.0);
    }

    std::filesystem::create_directories(opt.outDir);
    {
        std::ofstream csv(std::filesystem::path(opt.outDir) / "frontier.csv");
        csv << "z,variance,stddev,lambdaStar\n";
        for (double z : zGrid) {
            const double var = fr.variance_at(z);
            const double ls = rq::lambda_star(fr.P0, fr.h10, fr.h20, fr.M1, fr.M2,
                                              cfg.data.x0, z);
            csv << rq::format_number(z) << ',' << rq::format_number(var) << ','
                << rq::format_number(std::sqrt(std::max(0.0, var))) << ','
                << rq::format_number(ls) << '\n';
        }
    }

    json rep;
    rep["manifest"] = manifest_json(opt, "frontier", checksum, nullptr);
    rep["generatedAt"] = now_iso8601();
    rep["frontier"] = {{"P0", fr.P0},
                       {"h10", fr.h10},
                       {"h20", fr.h20},
                       {"M1", fr.M1},
                       {"M2", fr.M2},
                       {"M3", fr.M3},
                       {"lambdaStar", fr.lambdaStar},
                       {"slope", fr.slope},
                       {"vertexZ", fr.vertexZ},
                       {"baseVar", fr.baseVar},
                       {"feasibilityMetric", fr.feasibilityMetric}};
    rep["z"] = cfg.data.z;
    rep["varianceAtZ"] = fr.variance_at(cfg.data.z);
    std::ofstream out(std::filesystem::path(opt.outDir) / "report.json");
    out << rep.dump(2) << "\n";
    std::cout << "frontier: slope=" << fr.slope << " vertexZ=" << fr.vertexZ
              << " baseVar=" << fr.baseVar << " lambda*=" << fr.lambdaStar << "\n";
    return 0;
}

int cmd_simulate(const CommonOptions& opt, const SimOptions& sim, bool verify) {
    auto [cfg, checksum] = rq::load_mv_config(opt.configPath);
    if (sim.z) cfg.data.z = *sim.z;
    Pipeline pl = run_pipeline(cfg, opt.steps);

    rq::SimConfig sc;
    sc.numPaths = sim.paths;
    sc.timeSteps = sim.eulerSteps;
    sc.seed = sim.seed;
    sc.antithetic = sim.antithetic;

    const auto ver = rq::verify_frontier(cfg.data, pl.gen, pl.frontier, pl.h1,
                                         pl.h2, sc);

    // standard errors too large relative to the target scale cannot
    // conclude either way
    const bool inconclusive =
        ver.meanBand > 0.05 * (1.0 + std::abs(ver.z)) ||
        ver.varBand > 0.5 * ver.analyticVar + 0.01;

    json rep;
    rep["manifest"] = manifest_json(opt, verify ? "verify" : "simulate", checksum,
                                    &sim);
    rep["generatedAt"] = now_iso8601();
    rep["meanXT"] = ver.meanXT;
    rep["z"] = ver.z;
    rep["seMean"] = ver.seMean;
    rep["varXT"] = ver.varXT;
    rep["analyticVar"] = ver.analyticVar;
    rep["seVar"] = ver.seVar;
    rep["pass"] = ver.pass;
    rep["status"] = inconclusive ? "inconclusive" : (ver.pass ? "pass" : "fail");

    bool allPass = ver.pass;
    if (verify) {
        std::vector<rq::FeedbackFn> perturbations;
        perturbations.push_back([&](double, double, int) {
            return Eigen::VectorXd::Ones(cfg.data.numAssets).eval();
        });
        perturbations.push_back([&](double t, double, int i) {
            return cfg.data.mu(t, i).eval();
        });
        perturbations.push_back([&](double t, double X, int i) {
            return (-rq::mv_feedback(t, X, i, cfg.data, pl.h1, pl.h2,
                                     pl.frontier.lambdaStar, cfg.data.z))
                .eval();
        });
        const auto perts = rq::perturbation_optimality_check(
            cfg.data, pl.gen, pl.h1, pl.h2, pl.frontier.lambdaStar, sc,
            perturbations, 0.1);
        json plist = json::array();
        for (const auto& p : perts) {
            plist.push_back({{"meanDiff", p.meanDiff},
                             {"seDiff", p.seDiff},
                             {"nonnegative", p.nonnegative},
                             {"strictlyPositive", p.strictlyPositive}});
            allPass = allPass && p.nonnegative;
        }
        rep["perturbations"] = plist;
    }

    std::filesystem::create_directories(opt.outDir);
    std::ofstream out(std::filesystem::path(opt.outDir) / "verification.json");
    out << rep.dump(2) << "\n";

    std::cout << "E[X(T)]=" << ver.meanXT << " target z=" << ver.z
              << " (3se=" << ver.meanBand << ")\n"
              << "Var(X(T))=" << ver.varXT << " analytic=" << ver.analyticVar
              << " (band=" << ver.varBand << ")\n"
              << "status: " << rep["status"].get<std::string>() << "\n";
    if (inconclusive) return 0;
    return allPass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regime-switching LQ control and mean-variance ALM solver"};
    app.require_subcommand(1);

    CommonOptions opt;
    SimOptions sim;
    std::string zGridSpec;

    auto addCommon = [&](CLI::App* cmd) {
        cmd->add_option("--config", opt.configPath, "problem configuration (JSON)")
            ->required();
        cmd->add_option("--out", opt.outDir, "output directory");
        cmd->add_option("--steps", opt.steps, "backward-integration steps");
    };

    auto* validate = app.add_subcommand("validate", "check model assumptions");
    validate->add_option("--config", opt.configPath, "problem configuration (JSON)")
        ->required();

    auto* frontier =
        app.add_subcommand("frontier", "compute the mean-variance frontier");
    addCommon(frontier);
    frontier->add_option("--z-grid", zGridSpec,
                         "comma-separated expectation targets");

    auto* simulate =
        app.add_subcommand("simulate", "Monte Carlo check of the optimal law");
    auto* verify = app.add_subcommand(
        "verify", "Monte Carlo frontier verification plus optimality checks");
    for (CLI::App* cmd : {simulate, verify}) {
        cmd->add_option("--config", opt.configPath, "problem configuration (JSON)")
            ->required();
        cmd->add_option("--out", opt.outDir, "output directory");
        cmd->add_option("--steps", sim.eulerSteps, "Euler steps per path");
        cmd->add_option("--paths", sim.paths, "number of Monte Carlo paths");
        cmd->add_option("--seed", sim.seed, "RNG seed");
        cmd->add_option("--antithetic", sim.antithetic, "antithetic pairing");
        cmd->add_option("--z", sim.z, "override expectation target");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(opt);
        if (frontier->parsed()) return cmd_frontier(opt, zGridSpec);
        if (simulate->parsed()) return cmd_simulate(opt, sim, false);
        if (verify->parsed()) return cmd_simulate(opt, sim, true);
    } catch (const regimelq::ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const regimelq::InfeasibilityError& e) {
        std::cerr << "infeasible: " << e.what()
                  << " (the reachability criterion requires a positive "
                     "feasibility metric)\n";
        return 1;
    } catch (const regimelq::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
