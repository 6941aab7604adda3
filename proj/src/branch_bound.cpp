#include "gridloss/branch_bound.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <set>
#include <stdexcept>

#include "gridloss/errors.hpp"

namespace gridloss::conic {

namespace {

struct Node {
    double bound;
    long order;
    std::vector<int8_t> fixed;  // -1 free, 0/1 pinned

    bool operator>(const Node& other) const {
        if (bound != other.bound) return bound > other.bound;
        return order > other.order;
    }
};

ConicProblem with_fixes(const ConicProblem& base, const std::vector<int>& binaries,
                        const std::vector<int8_t>& fixed) {
    ConicProblem p = base;
    for (size_t i = 0; i < binaries.size(); ++i)
        if (fixed[i] >= 0) p.fix_variable(binaries[i], fixed[i]);
    return p;
}

// A node relaxation that stopped short of full accuracy is still usable as
// a bound when its residuals are tight; anything worse poisons the search.
double node_bound(const ConicSolution& sol) {
    if (sol.status == SolveStatus::optimal) return sol.objective;
    if (sol.status == SolveStatus::tolerance_not_met &&
        sol.residuals.max_equality < 1e-6 && sol.residuals.max_cone < 1e-6)
        return sol.objective;
    throw SolveError("relaxation solve failed: " + sol.message);
}

}  // namespace

MixedResult solve_mixed(const ConicProblem& problem, const BnbOptions& options,
                        const SocpSettings& settings) {
    const std::vector<int>& bins = problem.binaries;
    if (bins.empty()) throw std::invalid_argument("solve_mixed: no binary variables");
    const size_t nb = bins.size();

    std::priority_queue<Node, std::vector<Node>, std::greater<Node>> heap;
    heap.push({-kInf, 0, std::vector<int8_t>(nb, -1)});
    long order = 1;

    double inc_obj = kInf;
    std::vector<int8_t> inc_fixed;
    ConicSolution inc_sol;  // the solve that produced the incumbent
    std::set<std::vector<int8_t>> tried_rounded;

    MixedResult out;
    double remaining_lb = -kInf;

    while (!heap.empty()) {
        if (out.nodes_explored >= options.max_nodes) {
            out.budget_exhausted = true;
            remaining_lb = heap.top().bound;
            break;
        }
        Node node = heap.top();
        heap.pop();
        if (inc_obj < kInf && node.bound >= inc_obj * (1.0 - options.rel_gap)) {
            remaining_lb = node.bound;
            break;  // best-bound order: every remaining node is pruned too
        }

        ConicProblem relaxed = with_fixes(problem, bins, node.fixed);
        ConicSolution sol = solve_continuous(relaxed, settings);
        ++out.nodes_explored;
        if (sol.status == SolveStatus::infeasible) continue;
        if (sol.status == SolveStatus::unbounded)
            throw SolveError("relaxation is unbounded; the model is missing bounds");
        const double lb = node_bound(sol);
        if (inc_obj < kInf && lb >= inc_obj * (1.0 - options.rel_gap)) continue;

        // most fractional binary, ties to the lowest index
        int branch_at = -1;
        double best_dist = kInf;
        double a_sum = 0.0;
        for (size_t i = 0; i < nb; ++i) {
            const double a = sol.values[bins[i]];
            a_sum += a;
            if (node.fixed[i] >= 0) continue;
            if (std::fabs(a - std::round(a)) <= options.integer_tol) continue;
            const double dist = std::fabs(a - 0.5);
            if (dist < best_dist - 1e-12) {
                best_dist = dist;
                branch_at = static_cast<int>(i);
            }
        }

        if (branch_at < 0) {
            // integral: candidate incumbent
            std::vector<int8_t> pattern(nb);
            for (size_t i = 0; i < nb; ++i)
                pattern[i] = static_cast<int8_t>(std::round(sol.values[bins[i]]));
            // objective ties resolve toward the lowest-index subset, which is
            // the lexicographically greater 0/1 pattern
            if (lb < inc_obj - 1e-12 ||
                (std::fabs(lb - inc_obj) <= 1e-12 && pattern > inc_fixed)) {
                inc_obj = lb;
                inc_fixed = pattern;
                inc_sol = sol;
            }
            continue;
        }

        // rounding heuristic: pin the round(sum) largest binaries to 1
        std::vector<int8_t> rounded(nb, 0);
        {
            const int k = static_cast<int>(std::llround(a_sum));
            std::vector<int> idx(nb);
            for (size_t i = 0; i < nb; ++i) idx[i] = static_cast<int>(i);
            std::stable_sort(idx.begin(), idx.end(), [&](int lhs, int rhs) {
                return sol.values[bins[lhs]] > sol.values[bins[rhs]];
            });
            for (int i = 0; i < k && i < static_cast<int>(nb); ++i) rounded[idx[i]] = 1;
        }
        if (tried_rounded.insert(rounded).second) {
            ConicProblem fixed = with_fixes(problem, bins, rounded);
            ConicSolution hsol = solve_continuous(fixed, settings);
            ++out.nodes_explored;
            if (hsol.status == SolveStatus::optimal && hsol.objective < inc_obj - 1e-12) {
                inc_obj = hsol.objective;
                inc_fixed = rounded;
                inc_sol = hsol;
            }
        }

        Node down{lb, order++, node.fixed};
        down.fixed[branch_at] = 0;
        Node up{lb, order++, node.fixed};
        up.fixed[branch_at] = 1;
        heap.push(std::move(down));
        heap.push(std::move(up));
    }

    if (inc_obj == kInf) throw SolveError("branch and bound found no feasible assignment");

    // pin the incumbent pattern and re-solve at full accuracy; if the pinned
    // problem proves harder than the search node that found it, fall back to
    // the solve that made it the incumbent in the first place
    ConicProblem fixed = with_fixes(problem, bins, inc_fixed);
    out.solution = solve_continuous(fixed, settings);
    if (!out.solution.ok()) {
        if (!inc_sol.ok())
            throw SolveError("incumbent re-solve failed: " + out.solution.message);
        out.solution = inc_sol;
    }
    out.assignment.assign(inc_fixed.begin(), inc_fixed.end());

    if (heap.empty() && !out.budget_exhausted) remaining_lb = inc_obj;
    out.best_bound = std::min(inc_obj, remaining_lb);
    out.rel_gap = (inc_obj - out.best_bound) / std::max(std::fabs(inc_obj), 1e-10);
    return out;
}

EnumerationResult enumerate_subsets(const ConicProblem& problem, int k,
                                    const SocpSettings& settings) {
    const std::vector<int>& bins = problem.binaries;
    const int nb = static_cast<int>(bins.size());
    if (k < 0 || k > nb)
        throw std::invalid_argument("enumerate_subsets: k outside [0, #binaries]");

    EnumerationResult out;
    double best_obj = kInf;

    std::vector<int8_t> pattern(nb, 0);
    std::fill(pattern.begin(), pattern.begin() + k, 1);
    // iterate k-subsets in lexicographic order of the 0/1 pattern reversed:
    // std::prev_permutation on a descending-sorted pattern walks all of them
    do {
        ConicProblem fixed = with_fixes(problem, bins, pattern);
        ConicSolution sol = solve_continuous(fixed, settings);
        ++out.subsets_solved;
        if (sol.status == SolveStatus::infeasible) continue;
        if (!sol.ok()) continue;  // a broken subset never beats a solved one
        if (sol.objective < best_obj - 1e-12) {
            best_obj = sol.objective;
            out.solution = sol;
            out.assignment.assign(pattern.begin(), pattern.end());
        }
    } while (std::prev_permutation(pattern.begin(), pattern.end()));

    if (best_obj == kInf)
        throw SolveError("enumerate_subsets: every subset was infeasible");
    return out;
}

}  // namespace gridloss::conic
