#pragma once

#include "gridloss/conic.hpp"

namespace gridloss::conic {

// Tolerances and safeguards of the interior-point solver. The relaxed
// triple classifies "close to" outcomes when full precision stalls.
struct SocpSettings {
    double tol_feas = 1e-8;
    double tol_gap_abs = 1e-8;
    double tol_gap_rel = 1e-8;
    double tol_feas_relaxed = 1e-4;
    double tol_gap_abs_relaxed = 5e-5;
    double tol_gap_rel_relaxed = 5e-5;

    int max_iter = 100;
    int equil_iters = 3;       // Ruiz equilibration sweeps
    int max_refine = 9;        // iterative refinement cap per KKT solve
    double refine_tol = 1e-14; // relative refinement target
    double refine_decrease = 6.0;
    double static_reg = 7e-8;  // static KKT regularization
    double step_damping = 0.99;
    double step_min = 1e-6;
    double step_max = 0.999;
    double sigma_min = 1e-4;
    double sigma_max = 1.0;
    double divergence_guard = 500.0;  // backtrack when pres grows by this factor
};

// Solves the continuous relaxation of the problem (binaries treated as
// their [lo, hi] interval) with a homogeneous self-dual primal-dual
// interior-point method using Nesterov-Todd scalings. Deterministic for
// identical inputs.
ConicSolution solve_continuous(const ConicProblem& problem,
                               const SocpSettings& settings = {});

}  // namespace gridloss::conic
