#pragma once

#include <vector>

#include "gridloss/conic.hpp"
#include "gridloss/feeder.hpp"
#include "gridloss/zip.hpp"

namespace gridloss::distflow {

// Voltage window applied to every non-slack bus. Buses may carry their own
// window in the feeder data; these values clamp it further when narrower.
// enforce_band = false widens to the fallback band, which keeps the no-DG
// case of a sagging feeder solvable so its losses can be benchmarked.
struct Limits {
    double v_min_pu = 0.95;
    double v_max_pu = 1.05;
    double slack_v_pu = 1.0;
    bool enforce_band = true;
    double fallback_v_min_pu = 0.45;
    double fallback_v_max_pu = 1.20;
};

struct DgConfig {
    int n_dg = 0;
    double s_dg_max = 0.0;             // per-unit apparent power cap, same for every unit
    std::vector<int> candidate_buses;  // empty = every non-slack bus
    bool allow_q = false;              // co-optimize reactive supply in stage 1

    // resolves the default candidate set and checks the config against the
    // network; throws ConfigError
    std::vector<int> resolved_candidates(const model::FeederNetwork& net) const;
};

struct PlacementSolution {
    std::vector<int> dg_buses;        // ascending bus ids
    std::vector<double> p_supply_pu;  // aligned with dg_buses
    std::vector<double> p_supply_kw;
    std::vector<double> q_supply_pu;   // zero unless stage 1 co-optimized q
    std::vector<double> q_supply_kvar;
    double predicted_losses_kw = 0.0;
    conic::ConicSolution detail;
};

struct DispatchSolution {
    std::vector<int> dg_buses;
    std::vector<double> p_supply_pu;
    std::vector<double> p_supply_kw;
    std::vector<double> q_supply_pu;
    std::vector<double> q_supply_kvar;
    double predicted_losses_kw = 0.0;
    conic::ConicSolution detail;
};

// Branch-flow SOCP over the radial feeder: per-branch squared current l,
// directed flows fp/fq, squared voltages v_sq, losses Σ r·l as objective.
// Loads enter affinely in v_sq through the given coefficients, with per-bus
// feeder overrides taking precedence.
conic::ConicProblem build_base(const model::FeederNetwork& net,
                               const loads::ZipCoefficients& zip, const Limits& limits);

// Base problem plus binary placement: a[b] per candidate, active supply
// p_dg[b] tied to it by the capacity constraint ‖(p[,q])‖ ≤ a·S̄, and a
// cardinality row Σa = n_dg. At binary a the capacity matches the unit
// rating p² + q² ≤ a·S̄² and is strictly tighter for fractional a, which
// keeps the relaxation strong. n_dg = 0 degenerates to build_base.
conic::ConicProblem build_stage1(const model::FeederNetwork& net,
                                 const loads::ZipCoefficients& zip, const DgConfig& dg,
                                 const Limits& limits);

// Reactive re-dispatch: placement and active setpoints pinned, q_dg free at
// the DG buses within ‖q‖ ≤ sqrt(S̄² − p²).
conic::ConicProblem build_stage2(const model::FeederNetwork& net,
                                 const loads::ZipCoefficients& zip,
                                 const PlacementSolution& placement, const DgConfig& dg,
                                 const Limits& limits);

// Reads the binary pattern and supply setpoints out of a solved stage-1
// problem; throws SolveError when binaries are fractional beyond 1e-6.
PlacementSolution extract_placement(const conic::ConicProblem& problem,
                                    const conic::ConicSolution& solution,
                                    const model::FeederNetwork& net, const DgConfig& dg);

// Reads reactive setpoints out of a solved stage-2 problem.
DispatchSolution extract_dispatch(const conic::ConicProblem& problem,
                                  const conic::ConicSolution& solution,
                                  const model::FeederNetwork& net,
                                  const PlacementSolution& placement, const DgConfig& dg);

// Variable names used by the builders, shared with reporting code.
std::string var_v_sq(int bus);
std::string var_l(int bus);
std::string var_fp(int bus);
std::string var_fq(int bus);
std::string var_a(int bus);
std::string var_p_dg(int bus);
std::string var_q_dg(int bus);
std::string var_cap(int bus);

}  // namespace gridloss::distflow
