#pragma once

#include <vector>

#include "gridloss/conic.hpp"
#include "gridloss/socp.hpp"

namespace gridloss::conic {

struct BnbOptions {
    double rel_gap = 1e-8;     // prune and stop when incumbent is this close to the bound
    int max_nodes = 20000;     // relaxation budget; exceeding it keeps the incumbent
    double integer_tol = 1e-6; // |a - round(a)| below this counts as integral
};

struct MixedResult {
    ConicSolution solution;    // incumbent, re-solved with binaries pinned
    std::vector<int> assignment;  // 0/1 per problem.binaries entry
    int nodes_explored = 0;
    double best_bound = 0.0;   // global lower bound at termination
    double rel_gap = 0.0;      // (objective - best_bound) / max(|objective|, eps)
    bool budget_exhausted = false;
};

struct EnumerationResult {
    ConicSolution solution;
    std::vector<int> assignment;
    int subsets_solved = 0;
};

// Branch and bound over the problem's binary variables. Nodes are explored
// best-bound first; branching picks the most fractional binary. Requires at
// least one binary variable.
MixedResult solve_mixed(const ConicProblem& problem, const BnbOptions& options = {},
                        const SocpSettings& settings = {});

// Exhaustive reference: solve the relaxation once per k-subset of the binary
// variables (chosen set pinned to 1, rest to 0) and keep the best feasible
// one. Ties resolve to the subset with the lowest indices.
EnumerationResult enumerate_subsets(const ConicProblem& problem, int k,
                                    const SocpSettings& settings = {});

}  // namespace gridloss::conic
