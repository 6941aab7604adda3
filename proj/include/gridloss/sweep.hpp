#pragma once

#include <complex>
#include <vector>

#include "gridloss/conic.hpp"
#include "gridloss/distflow.hpp"
#include "gridloss/feeder.hpp"
#include "gridloss/zip.hpp"

namespace gridloss::acpf {

struct PowerFlowResult {
    std::vector<std::complex<double>> v;               // per bus, dense index order
    std::vector<std::complex<double>> branch_current;  // per branch, branches order
    std::vector<std::complex<double>> branch_flow;     // sending-end complex power
    double total_losses_kw = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct SweepOptions {
    double slack_v_pu = 1.0;
    double tol = 1e-10;
    int max_iter = 200;
};

// Exact power flow on the radial feeder by fixed-point iteration: full-ZIP
// load currents at present voltages, backward current aggregation leaf to
// root, forward voltage update root to leaf. Reports non-convergence via the
// flag instead of throwing; the last iterate is returned either way.
// injections: net DG complex power per bus id (p.u.), subtracted from demand.
PowerFlowResult backward_forward_sweep(
    const model::FeederNetwork& net, const loads::ZipCoefficients& zip,
    const std::vector<std::pair<int, std::complex<double>>>& injections = {},
    const SweepOptions& options = {});

struct VerificationRecord {
    double socp_losses_kw = 0.0;
    double sweep_losses_kw = 0.0;
    double rel_error = 0.0;    // |socp - sweep| / max(sweep, eps)
    double max_v_delta = 0.0;  // worst per-bus |‖V‖ - sqrt(v_sq)| discrepancy
    PowerFlowResult flow;
};

// Replays a solved placement or dispatch through the exact sweep and
// compares losses and voltage profiles. Throws VerifyError if the sweep does
// not converge.
VerificationRecord verify_solution(const model::FeederNetwork& net,
                                   const loads::ZipCoefficients& zip,
                                   const conic::ConicProblem& problem,
                                   const distflow::PlacementSolution& placement,
                                   const SweepOptions& options = {});
VerificationRecord verify_solution(const model::FeederNetwork& net,
                                   const loads::ZipCoefficients& zip,
                                   const conic::ConicProblem& problem,
                                   const distflow::DispatchSolution& dispatch,
                                   const SweepOptions& options = {});

struct TightnessReport {
    std::vector<double> gap;          // per branch: l - (fp² + fq²)/v_sq of the parent
    double max_gap = 0.0;
    int argmax_branch = -1;           // index into net.branches
    std::vector<int> loose_branches;  // gap above the 1e-6 exactness threshold
    bool tight() const { return loose_branches.empty(); }
};

// Certifies whether the cone relaxation closed: at a physically meaningful
// optimum each branch satisfies l·v = fp² + fq² to solver precision.
TightnessReport tightness_report(const conic::ConicProblem& problem,
                                 const conic::ConicSolution& solution,
                                 const model::FeederNetwork& net);

}  // namespace gridloss::acpf
